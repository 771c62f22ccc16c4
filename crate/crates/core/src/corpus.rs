//! Synthetic datasets, label-noise injection, and augmentation views.
//!
//! Three corruption protocols are provided: symmetric (uniform flips to any
//! other class), asymmetric (pairwise flips along a fixed-point-free class
//! map), and instance-dependent (per-sample truncated-Gaussian flip rates
//! with a feature-projection target). Every generator derives per-sample
//! RNG streams from a root seed by sample index, so generation order never
//! affects the result.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::memory::ViewTag;
use crate::seeding::{self, purpose};

/// A feature matrix with noisy labels and, when the corruption process is
/// known, true labels plus the corruption mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    k: usize,
    noisy_labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    mask: Option<Vec<bool>>,
}

impl NoisyDataset {
    /// Builds a dataset from raw parts, checking label ranges and the
    /// mask/label consistency invariant.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        k: usize,
        noisy_labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if d == 0 || k < 2 {
            return Err(Error::Domain(format!("need d >= 1 and k >= 2, got d={d} k={k}")));
        }
        let n = noisy_labels.len();
        if features.len() != n * d {
            return Err(Error::Domain(format!(
                "feature buffer holds {} values, expected {n} x {d}",
                features.len()
            )));
        }
        if let Some(t) = &true_labels {
            if t.len() != n {
                return Err(Error::Domain(format!(
                    "{} true labels for {n} samples",
                    t.len()
                )));
            }
        }
        for &l in noisy_labels.iter().chain(true_labels.iter().flatten()) {
            if l >= k {
                return Err(Error::Domain(format!("label {l} out of range 0..{k}")));
            }
        }
        let mask = true_labels
            .as_ref()
            .map(|t| noisy_labels.iter().zip(t.iter()).map(|(a, b)| a != b).collect());
        Ok(Self {
            features,
            n,
            d,
            k,
            noisy_labels,
            true_labels,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    /// Corruption mask (`noisy != true`), present iff true labels are known.
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Fraction of corrupted labels, when the mask is known.
    pub fn corruption_rate(&self) -> Option<f64> {
        self.mask
            .as_ref()
            .map(|m| m.iter().filter(|&&b| b).count() as f64 / m.len().max(1) as f64)
    }

    /// Per-feature standard deviation over the dataset (population form).
    pub fn feature_stds(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        let mut mean = vec![0.0; self.d];
        for i in 0..self.n {
            for (m, &x) in mean.iter_mut().zip(self.feature(i)) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; self.d];
        for i in 0..self.n {
            for ((v, &m), &x) in var.iter_mut().zip(mean.iter()).zip(self.feature(i)) {
                *v += (x - m) * (x - m);
            }
        }
        var.into_iter().map(|v| (v / n).sqrt()).collect()
    }

    fn with_labels(&self, noisy_labels: Vec<usize>) -> Self {
        let mask = self
            .true_labels
            .as_ref()
            .map(|t| noisy_labels.iter().zip(t.iter()).map(|(a, b)| a != b).collect());
        Self {
            noisy_labels,
            mask,
            ..self.clone()
        }
    }

    /// Writes the dataset as CSV with header
    /// `feature_0..feature_{d-1},noisy_label,true_label,corrupted`.
    pub fn export_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for j in 0..self.d {
            write!(out, "feature_{j},")?;
        }
        writeln!(out, "noisy_label,true_label,corrupted")?;
        for i in 0..self.n {
            for &x in self.feature(i) {
                write!(out, "{x},")?;
            }
            let true_label = self
                .true_labels
                .as_ref()
                .map(|t| t[i].to_string())
                .unwrap_or_default();
            let corrupted = self
                .mask
                .as_ref()
                .map(|m| if m[i] { "1" } else { "0" }.to_string())
                .unwrap_or_default();
            writeln!(out, "{},{},{}", self.noisy_labels[i], true_label, corrupted)?;
        }
        Ok(())
    }

    /// Parses a CSV produced by [`export_csv`](Self::export_csv).
    pub fn import_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset CSV".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let d = cols
            .iter()
            .take_while(|c| c.starts_with("feature_"))
            .count();
        if d == 0 || cols.len() != d + 3 {
            return Err(Error::Format(format!(
                "unexpected dataset CSV header: {header:?}"
            )));
        }
        let mut features = Vec::new();
        let mut noisy = Vec::new();
        let mut true_labels: Option<Vec<usize>> = None;
        for (row, line) in lines.enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 3 {
                return Err(Error::Format(format!(
                    "dataset CSV row {} has {} fields, expected {}",
                    row + 2,
                    fields.len(),
                    d + 3
                )));
            }
            for f in &fields[..d] {
                features.push(f.parse::<f64>().map_err(|e| {
                    Error::Format(format!("dataset CSV row {}: bad feature {f:?}: {e}", row + 2))
                })?);
            }
            noisy.push(fields[d].parse::<usize>().map_err(|e| {
                Error::Format(format!("dataset CSV row {}: bad label: {e}", row + 2))
            })?);
            if !fields[d + 1].is_empty() {
                let t = fields[d + 1].parse::<usize>().map_err(|e| {
                    Error::Format(format!("dataset CSV row {}: bad true label: {e}", row + 2))
                })?;
                true_labels.get_or_insert_with(Vec::new).push(t);
            }
        }
        let k = noisy
            .iter()
            .chain(true_labels.iter().flatten())
            .max()
            .map(|&m| (m + 1).max(2))
            .unwrap_or(2);
        Self::new(features, d, k, noisy, true_labels)
    }
}

/// Label corruption protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Flip with probability `rate` to a uniformly chosen *other* class.
    Symmetric { rate: f64 },
    /// Flip with probability `rate` to `pair_map[true_class]`.
    Asymmetric { rate: f64, pair_map: Vec<usize> },
    /// Per-sample flip rate drawn from `Normal(rate, idn_std^2)` truncated
    /// to [0, 1]; the flip target is the highest-scoring non-true class
    /// under a random feature projection.
    InstanceDependent { rate: f64, idn_std: f64 },
}

impl NoiseSpec {
    pub fn rate(&self) -> f64 {
        match self {
            NoiseSpec::Symmetric { rate }
            | NoiseSpec::Asymmetric { rate, .. }
            | NoiseSpec::InstanceDependent { rate, .. } => *rate,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let rate = self.rate();
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("noise rate {rate} outside [0, 1)")));
        }
        match self {
            NoiseSpec::Asymmetric { pair_map, .. } => validate_pair_map(pair_map, k),
            NoiseSpec::InstanceDependent { idn_std, .. } if *idn_std < 0.0 => Err(Error::Config(
                format!("idn_std {idn_std} must be non-negative"),
            )),
            _ => Ok(()),
        }
    }

    /// Applies the protocol to the dataset's true labels.
    pub fn apply(&self, dataset: &NoisyDataset, seed: u64) -> Result<NoisyDataset> {
        self.validate(dataset.num_classes())?;
        match self {
            NoiseSpec::Symmetric { rate } => flip_symmetric(dataset, *rate, seed),
            NoiseSpec::Asymmetric { rate, pair_map } => {
                flip_asymmetric(dataset, *rate, pair_map, seed)
            }
            NoiseSpec::InstanceDependent { rate, idn_std } => {
                flip_instance_dependent(dataset, *rate, *idn_std, seed)
            }
        }
    }
}

fn validate_pair_map(pair_map: &[usize], k: usize) -> Result<()> {
    if pair_map.len() != k {
        return Err(Error::Config(format!(
            "pair_map has {} entries for {k} classes",
            pair_map.len()
        )));
    }
    for (from, &to) in pair_map.iter().enumerate() {
        if to >= k {
            return Err(Error::Config(format!(
                "pair_map[{from}] = {to} out of range 0..{k}"
            )));
        }
        if to == from {
            return Err(Error::Config(format!(
                "pair_map[{from}] = {to} is a fixed point"
            )));
        }
    }
    Ok(())
}

fn require_true_labels<'a>(dataset: &'a NoisyDataset, op: &str) -> Result<&'a [usize]> {
    dataset
        .true_labels()
        .ok_or_else(|| Error::State(format!("{op} needs a dataset with true labels")))
}

/// Symmetric noise: each sample independently flips with probability `rate`
/// to a uniformly chosen class other than its true class, so every flip
/// corrupts and the realized rate concentrates on `rate`.
pub fn flip_symmetric(dataset: &NoisyDataset, rate: f64, seed: u64) -> Result<NoisyDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("rate {rate} outside [0, 1)")));
    }
    let truth = require_true_labels(dataset, "flip_symmetric")?;
    let k = dataset.num_classes();
    let noisy = truth
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut rng = seeding::stream(seed, &[purpose::NOISE, i as u64]);
            if rng.random::<f64>() < rate {
                let pick = rng.random_range(0..k - 1);
                if pick >= y {
                    pick + 1
                } else {
                    pick
                }
            } else {
                y
            }
        })
        .collect();
    Ok(dataset.with_labels(noisy))
}

/// Asymmetric noise: flips with probability `rate` along a fixed-point-free
/// class map.
pub fn flip_asymmetric(
    dataset: &NoisyDataset,
    rate: f64,
    pair_map: &[usize],
    seed: u64,
) -> Result<NoisyDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("rate {rate} outside [0, 1)")));
    }
    validate_pair_map(pair_map, dataset.num_classes())?;
    let truth = require_true_labels(dataset, "flip_asymmetric")?;
    let noisy = truth
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut rng = seeding::stream(seed, &[purpose::NOISE, i as u64]);
            if rng.random::<f64>() < rate {
                pair_map[y]
            } else {
                y
            }
        })
        .collect();
    Ok(dataset.with_labels(noisy))
}

/// One draw from `Normal(mu, sigma^2)` truncated to [0, 1], by rejection.
fn truncated_gaussian(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(mu.clamp(0.0, 1.0));
    }
    let normal = Normal::new(mu, sigma)
        .map_err(|e| Error::Domain(format!("bad truncated-gaussian parameters: {e}")))?;
    for _ in 0..1_000_000 {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return Ok(x);
        }
    }
    Err(Error::Generation(format!(
        "truncated gaussian (mu={mu}, sigma={sigma}) kept rejecting"
    )))
}

/// Instance-dependent noise: per-sample flip rate `q_i` from a truncated
/// Gaussian around `rate`; the flip target is the argmax non-true class
/// under a random projection of the sample's features.
pub fn flip_instance_dependent(
    dataset: &NoisyDataset,
    rate: f64,
    idn_std: f64,
    seed: u64,
) -> Result<NoisyDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("rate {rate} outside [0, 1)")));
    }
    if idn_std < 0.0 {
        return Err(Error::Domain(format!("idn_std {idn_std} must be >= 0")));
    }
    let truth = require_true_labels(dataset, "flip_instance_dependent")?;
    let (k, d) = (dataset.num_classes(), dataset.dim());
    // One shared projection per corruption run.
    let mut proj_rng = seeding::stream(seed, &[purpose::NOISE, u64::MAX]);
    let projection: Vec<f64> = (0..k * d)
        .map(|_| StandardNormal.sample(&mut proj_rng))
        .collect();
    let mut noisy = Vec::with_capacity(dataset.len());
    for (i, &y) in truth.iter().enumerate() {
        let mut rng = seeding::stream(seed, &[purpose::NOISE, i as u64]);
        let q = truncated_gaussian(&mut rng, rate, idn_std)?;
        if rng.random::<f64>() < q {
            let x = dataset.feature(i);
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for class in 0..k {
                if class == y {
                    continue;
                }
                let row = &projection[class * d..(class + 1) * d];
                let score: f64 = row.iter().zip(x.iter()).map(|(w, v)| w * v).sum();
                if score > best_score {
                    best_score = score;
                    best = class;
                }
            }
            noisy.push(best);
        } else {
            noisy.push(y);
        }
    }
    Ok(dataset.with_labels(noisy))
}

/// Augmentation strengths for the weak and strong views. Sigmas are
/// fractions of the per-feature standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    /// Probability of zeroing each feature in the strong view.
    pub mask_prob: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            sigma_weak: 0.05,
            sigma_strong: 0.2,
            mask_prob: 0.2,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_weak >= 0.0 && self.sigma_weak < self.sigma_strong) {
            return Err(Error::Config(format!(
                "need 0 <= sigma_weak < sigma_strong, got {} and {}",
                self.sigma_weak, self.sigma_strong
            )));
        }
        if !(0.0..1.0).contains(&self.mask_prob) {
            return Err(Error::Config(format!(
                "mask_prob {} outside [0, 1)",
                self.mask_prob
            )));
        }
        Ok(())
    }
}

/// Applies the view's augmentation to one feature vector. Weak adds Gaussian
/// jitter scaled by `sigma_weak * std`; strong adds `sigma_strong * std`
/// jitter and then zeroes each feature independently with `mask_prob`.
pub fn augment(
    x: &[f64],
    view: ViewTag,
    spec: &AugmentSpec,
    feature_stds: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    debug_assert_eq!(x.len(), feature_stds.len());
    let sigma = match view {
        ViewTag::Weak => spec.sigma_weak,
        ViewTag::Strong => spec.sigma_strong,
    };
    let mut out: Vec<f64> = x
        .iter()
        .zip(feature_stds.iter())
        .map(|(&v, &s)| {
            let noise: f64 = StandardNormal.sample(rng);
            v + sigma * s * noise
        })
        .collect();
    if view == ViewTag::Strong && spec.mask_prob > 0.0 {
        for v in out.iter_mut() {
            if rng.random::<f64>() < spec.mask_prob {
                *v = 0.0;
            }
        }
    }
    out
}

/// Generates `k` isotropic Gaussian clusters with pairwise center distance
/// at least `center_separation`. The returned dataset is clean (true ==
/// noisy, empty mask).
pub fn make_blobs(
    k: usize,
    n_per_class: usize,
    d: usize,
    center_separation: f64,
    cluster_std: f64,
    seed: u64,
) -> Result<NoisyDataset> {
    if k < 2 || d < 2 {
        return Err(Error::Domain(format!("need k >= 2 and d >= 2, got k={k} d={d}")));
    }
    if center_separation < 0.0 || cluster_std <= 0.0 {
        return Err(Error::Domain(format!(
            "need center_separation >= 0 and cluster_std > 0, got {center_separation} and {cluster_std}"
        )));
    }
    // Box width scales so typical center distances land near the separation
    // floor (keeping it a meaningful hardness knob in high dimension), with
    // a packing allowance of K^(1/d) for many classes.
    let scale = center_separation.max(cluster_std);
    let half_box =
        1.25 * scale * (1.5 / d as f64).sqrt() * (k as f64).powf(1.0 / d as f64);
    let mut center_rng = seeding::stream(seed, &[purpose::DATA, 0]);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for class in 0..k {
        let mut placed = false;
        for _attempt in 0..1000 {
            let candidate: Vec<f64> = (0..d)
                .map(|_| center_rng.random::<f64>() * 2.0 * half_box - half_box)
                .collect();
            let ok = centers.iter().all(|c| {
                let dist2: f64 = c
                    .iter()
                    .zip(candidate.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dist2.sqrt() >= center_separation
            });
            if ok {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place center {class} with separation {center_separation} after 1000 tries"
            )));
        }
    }
    let n = k * n_per_class;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        for idx in 0..n_per_class {
            let mut rng = seeding::stream(seed, &[purpose::DATA, 1, class as u64, idx as u64]);
            for &c in &centers[class] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(c + cluster_std * noise);
            }
            labels.push(class);
        }
    }
    NoisyDataset::new(features, d, k, labels.clone(), Some(labels))
}

/// Splits a class-major blob dataset into train/test by taking the first
/// `train_per_class` samples of every class for training.
pub fn split_per_class(
    dataset: &NoisyDataset,
    per_class_total: usize,
    train_per_class: usize,
) -> Result<(NoisyDataset, NoisyDataset)> {
    if train_per_class == 0 || train_per_class >= per_class_total {
        return Err(Error::Domain(format!(
            "train_per_class {train_per_class} must be in 1..{per_class_total}"
        )));
    }
    if dataset.len() != dataset.num_classes() * per_class_total {
        return Err(Error::Domain(format!(
            "dataset has {} samples, expected {} classes x {per_class_total}",
            dataset.len(),
            dataset.num_classes()
        )));
    }
    let truth = require_true_labels(dataset, "split_per_class")?.to_vec();
    let pick = |keep_train: bool| -> Result<NoisyDataset> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, &y) in truth.iter().enumerate() {
            let offset = i % per_class_total;
            let in_train = offset < train_per_class;
            if in_train == keep_train {
                features.extend_from_slice(dataset.feature(i));
                labels.push(y);
            }
        }
        NoisyDataset::new(
            features,
            dataset.dim(),
            dataset.num_classes(),
            labels.clone(),
            Some(labels),
        )
    };
    Ok((pick(true)?, pick(false)?))
}

/// Content of one IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxContent {
    /// `n x d` features scaled to [0, 1].
    Features { n: usize, d: usize, data: Vec<f64> },
    /// Class indices.
    Labels(Vec<usize>),
}

/// Reads a big-endian IDX file (magic `0x0000080N`: unsigned-byte payload
/// with N dimensions). One dimension parses as labels; two or more parse as
/// features flattened to `N x d` and scaled to [0, 1].
pub fn load_idx(path: &Path) -> Result<IdxContent> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_idx(bytes: &[u8]) -> Result<IdxContent> {
    if bytes.len() < 4 {
        return Err(Error::Format(format!(
            "truncated header at offset 0 (have {} bytes, need 4)",
            bytes.len()
        )));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format(format!(
            "bad magic {magic:#010x} at offset 0 (first two bytes must be zero)"
        )));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!(
            "unsupported data type {:#04x} at offset 2 (only unsigned byte 0x08)",
            bytes[2]
        )));
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::Format("zero dimensions at offset 3".into()));
    }
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::Format(format!(
            "truncated dimension table at offset {} (have {} bytes, need {header_len})",
            bytes.len().min(header_len),
            bytes.len()
        )));
    }
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let off = 4 + 4 * i;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let mut payload = 1usize;
    for (i, &dim) in dims.iter().enumerate() {
        payload = payload.checked_mul(dim).ok_or_else(|| {
            Error::Format(format!(
                "dimension overflow multiplying dim {i} = {dim} at offset {}",
                4 + 4 * i
            ))
        })?;
    }
    if bytes.len() != header_len + payload {
        return Err(Error::Format(format!(
            "payload length mismatch at offset {header_len}: have {} bytes, expected {payload}",
            bytes.len() - header_len
        )));
    }
    let body = &bytes[header_len..];
    if ndims == 1 {
        Ok(IdxContent::Labels(body.iter().map(|&b| b as usize).collect()))
    } else {
        let n = dims[0];
        let d: usize = dims[1..].iter().product();
        Ok(IdxContent::Features {
            n,
            d,
            data: body.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }
}

/// Loads an IDX feature/label file pair into a clean dataset.
pub fn load_idx_dataset(features_path: &Path, labels_path: &Path) -> Result<NoisyDataset> {
    let (n, d, data) = match load_idx(features_path)? {
        IdxContent::Features { n, d, data } => (n, d, data),
        IdxContent::Labels(_) => {
            return Err(Error::Format(format!(
                "{} holds labels, expected features",
                features_path.display()
            )))
        }
    };
    let labels = match load_idx(labels_path)? {
        IdxContent::Labels(l) => l,
        IdxContent::Features { .. } => {
            return Err(Error::Format(format!(
                "{} holds features, expected labels",
                labels_path.display()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::Format(format!(
            "{n} feature rows vs {} labels",
            labels.len()
        )));
    }
    let k = labels.iter().max().map(|&m| (m + 1).max(2)).unwrap_or(2);
    NoisyDataset::new(data, d, k, labels.clone(), Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> NoisyDataset {
        make_blobs(3, 100, 4, 8.0, 1.0, 42).unwrap()
    }

    #[test]
    fn blobs_have_expected_shape_and_determinism() {
        let a = blobs();
        assert_eq!(a.len(), 300);
        assert_eq!(a.dim(), 4);
        for class in 0..3 {
            let count = a.true_labels().unwrap().iter().filter(|&&y| y == class).count();
            assert_eq!(count, 100);
        }
        assert_eq!(a.corruption_rate(), Some(0.0));
        let b = blobs();
        assert_eq!(a, b);
        let c = make_blobs(3, 100, 4, 8.0, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blobs_are_nearest_centroid_separable() {
        // Separation 10 sigma: a linear (nearest-centroid) rule is near
        // perfect.
        let data = make_blobs(3, 200, 6, 10.0, 1.0, 7).unwrap();
        let mut centroids = vec![vec![0.0; data.dim()]; 3];
        let mut counts = vec![0usize; 3];
        for i in 0..data.len() {
            let y = data.true_labels().unwrap()[i];
            counts[y] += 1;
            for (c, &x) in centroids[y].iter_mut().zip(data.feature(i)) {
                *c += x;
            }
        }
        for (c, n) in centroids.iter_mut().zip(counts.iter()) {
            for v in c.iter_mut() {
                *v /= *n as f64;
            }
        }
        let mut correct = 0;
        for i in 0..data.len() {
            let x = data.feature(i);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                    let db: f64 = centroids[b].iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == data.true_labels().unwrap()[i] {
                correct += 1;
            }
        }
        assert!(correct as f64 / data.len() as f64 >= 0.99);
    }

    #[test]
    fn symmetric_noise_flips_away_from_truth() {
        let data = blobs();
        let zero = flip_symmetric(&data, 0.0, 5).unwrap();
        assert_eq!(zero.corruption_rate(), Some(0.0));
        assert_eq!(zero.noisy_labels(), data.noisy_labels());

        let noisy = flip_symmetric(&data, 0.5, 5).unwrap();
        let mask = noisy.mask().unwrap();
        for i in 0..noisy.len() {
            let truth = noisy.true_labels().unwrap()[i];
            let label = noisy.noisy_labels()[i];
            assert_eq!(mask[i], label != truth);
            if mask[i] {
                assert_ne!(label, truth);
            }
        }
        assert!(noisy.corruption_rate().unwrap() > 0.3);
        // Features untouched.
        assert_eq!(noisy.feature(17), data.feature(17));
    }

    #[test]
    fn asymmetric_noise_follows_pair_map() {
        let data = blobs();
        let pair_map = vec![1, 2, 0];
        let noisy = flip_asymmetric(&data, 0.4, &pair_map, 9).unwrap();
        for i in 0..noisy.len() {
            let truth = noisy.true_labels().unwrap()[i];
            let label = noisy.noisy_labels()[i];
            if noisy.mask().unwrap()[i] {
                assert_eq!(label, pair_map[truth]);
            } else {
                assert_eq!(label, truth);
            }
        }
        assert!(matches!(
            flip_asymmetric(&data, 0.4, &[0, 2, 1], 9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn instance_dependent_noise_behaves() {
        let data = blobs();
        let clean = flip_instance_dependent(&data, 0.0, 0.0, 3).unwrap();
        assert_eq!(clean.corruption_rate(), Some(0.0));

        let noisy = flip_instance_dependent(&data, 0.4, 0.1, 3).unwrap();
        let rate = noisy.corruption_rate().unwrap();
        assert!((rate - 0.4).abs() < 0.15, "rate = {rate}");
        for i in 0..noisy.len() {
            if noisy.mask().unwrap()[i] {
                assert_ne!(noisy.noisy_labels()[i], noisy.true_labels().unwrap()[i]);
            }
        }
    }

    #[test]
    fn augment_shapes_and_identity() {
        let spec = AugmentSpec {
            sigma_weak: 0.0,
            sigma_strong: 0.2,
            mask_prob: 0.2,
        };
        let x = [1.0, -2.0, 3.0];
        let stds = [1.0, 1.0, 1.0];
        let mut rng = seeding::stream(1, &[]);
        let weak = augment(&x, ViewTag::Weak, &spec, &stds, &mut rng);
        assert_eq!(weak, x.to_vec());
        let strong = augment(&x, ViewTag::Strong, &spec, &stds, &mut rng);
        assert_eq!(strong.len(), x.len());
        assert_ne!(strong, x.to_vec());
    }

    #[test]
    fn strong_masking_rate_concentrates() {
        let spec = AugmentSpec {
            sigma_weak: 0.0,
            sigma_strong: 1e-9,
            mask_prob: 0.2,
        };
        let d = 100;
        let x = vec![1.0; d];
        let stds = vec![1.0; d];
        let mut zeroed = 0usize;
        let draws: u64 = 2000;
        for s in 0..draws {
            let mut rng = seeding::stream(s, &[7]);
            let out = augment(&x, ViewTag::Strong, &spec, &stds, &mut rng);
            zeroed += out.iter().filter(|&&v| v == 0.0).count();
        }
        // 99.9% binomial band around 0.2 of 200k draws.
        let n = (draws as usize * d) as f64;
        let (mean, sd) = (0.2 * n, (n * 0.2 * 0.8).sqrt());
        let z = (zeroed as f64 - mean) / sd;
        assert!(z.abs() < 3.29, "z = {z}");
    }

    #[test]
    fn idx_parses_and_guards() {
        // 10 "images" of 28x28.
        let mut bytes = vec![0u8, 0, 0x08, 3];
        for dim in [10u32, 28, 28] {
            bytes.extend_from_slice(&dim.to_be_bytes());
        }
        bytes.extend(std::iter::repeat(128u8).take(10 * 28 * 28));
        match parse_idx(&bytes).unwrap() {
            IdxContent::Features { n, d, data } => {
                assert_eq!((n, d), (10, 784));
                assert!((data[0] - 128.0 / 255.0).abs() < 1e-12);
            }
            other => panic!("expected features, got {other:?}"),
        }

        // Truncation is a format error naming the offset.
        let cut = bytes.len() - 5;
        match parse_idx(&bytes[..cut]) {
            Err(Error::Format(msg)) => assert!(msg.contains("offset"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }

        // Labels.
        let mut bytes = vec![0u8, 0, 0x08, 1];
        bytes.extend_from_slice(&5u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 1, 2, 1, 0]);
        match parse_idx(&bytes).unwrap() {
            IdxContent::Labels(l) => assert_eq!(l, vec![0, 1, 2, 1, 0]),
            other => panic!("expected labels, got {other:?}"),
        }

        // Bad magic.
        assert!(matches!(
            parse_idx(&[1, 2, 3, 4, 5]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_roundtrip_preserves_labels_and_mask() {
        let data = flip_symmetric(&blobs(), 0.3, 1).unwrap();
        let mut buf = Vec::new();
        data.export_csv(&mut buf).unwrap();
        let parsed = NoisyDataset::import_csv(&buf[..]).unwrap();
        assert_eq!(parsed.noisy_labels(), data.noisy_labels());
        assert_eq!(parsed.true_labels(), data.true_labels());
        assert_eq!(parsed.mask(), data.mask());
        assert_eq!(parsed.len(), data.len());
    }
}
