//! Minimal fully-connected classifier with explicit forward/backward passes,
//! paired into a dual branch with differential initialization.
//!
//! Branch 1 always consumes the weak view, branch 2 the strong view, for
//! training and for the inference pass that feeds the temporal memory.

use std::io::{Read, Write};

use rand::Rng;

use crate::corpus::{augment, AugmentSpec, NoisyDataset};
use crate::error::{Error, Result};
use crate::memory::ViewTag;
use crate::prob::{softmax, ProbDist};
use crate::seeding;

/// Model checkpoint magic bytes.
pub const MODEL_MAGIC: [u8; 4] = *b"MLP1";

/// Model checkpoint format version.
pub const MODEL_VERSION: u32 = 1;

/// Layer sizes: input dimension, hidden widths, output classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        if input == 0 || output < 2 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config(format!(
                "bad architecture: input={input}, hidden={hidden:?}, output={output}"
            )));
        }
        Ok(Self {
            input,
            hidden,
            output,
        })
    }

    /// All layer sizes from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output);
        dims
    }
}

/// One dense layer: `fan_out x fan_in` row-major weights plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl DenseLayer {
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.fan_out {
            let w = &self.weights[row * self.fan_in..(row + 1) * self.fan_in];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Parameters of one branch: rectifier hidden layers, softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    layers: Vec<DenseLayer>,
}

/// Activations cached by [`MlpParams::forward_cached`] for backprop:
/// the input and every post-rectifier hidden output, plus the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Per-layer gradients shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|v| v.is_finite())
    }
}

/// Initializes one branch with the scaled-uniform fan-in scheme: weights
/// from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
pub fn init_mlp(arch: &Architecture, seed: u64) -> MlpParams {
    let dims = arch.dims();
    let mut rng = seeding::stream(seed, &[b'w' as u64]);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random::<f64>() * 2.0 * bound - bound)
            .collect();
        layers.push(DenseLayer {
            weights,
            biases: vec![0.0; fan_out],
            fan_in,
            fan_out,
        });
    }
    MlpParams {
        arch: arch.clone(),
        layers,
    }
}

/// The two branches with differential initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBranch {
    pub branch1: MlpParams,
    pub branch2: MlpParams,
}

impl DualBranch {
    pub fn branch(&self, view: ViewTag) -> &MlpParams {
        match view {
            ViewTag::Weak => &self.branch1,
            ViewTag::Strong => &self.branch2,
        }
    }

    pub fn branch_mut(&mut self, view: ViewTag) -> &mut MlpParams {
        match view {
            ViewTag::Weak => &mut self.branch1,
            ViewTag::Strong => &mut self.branch2,
        }
    }
}

/// Builds the dual branch. The seeds must differ so the branches learn
/// complementary solutions.
pub fn init_dual(arch: &Architecture, seed1: u64, seed2: u64) -> Result<DualBranch> {
    if seed1 == seed2 {
        return Err(Error::Config(format!(
            "branch seeds must differ (both are {seed1})"
        )));
    }
    let branch1 = init_mlp(arch, seed1);
    let branch2 = init_mlp(arch, seed2);
    let differ = branch1
        .layers
        .iter()
        .zip(branch2.layers.iter())
        .any(|(a, b)| a.weights != b.weights);
    if !differ {
        return Err(Error::Config(
            "differential initialization produced identical branches".into(),
        ));
    }
    Ok(DualBranch { branch1, branch2 })
}

impl MlpParams {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input {
            return Err(Error::Domain(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.arch.input
            )));
        }
        Ok(())
    }

    /// Forward pass returning logits and softmax probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ProbDist)> {
        let cache = self.forward_cached(x)?;
        let probs = softmax(&cache.logits)?;
        Ok((cache.logits, probs))
    }

    /// Forward pass that keeps the per-layer activations for backprop.
    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let mut scratch = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            inputs.push(current.clone());
            layer.affine(&current, &mut scratch);
            if idx + 1 < self.layers.len() {
                for v in scratch.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut scratch);
        }
        Ok(ForwardCache {
            inputs,
            logits: current,
        })
    }

    /// Backpropagates a logit-space gradient through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Result<Gradients> {
        if dlogits.len() != self.arch.output {
            return Err(Error::Domain(format!(
                "gradient has {} entries, model outputs {}",
                dlogits.len(),
                self.arch.output
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = dlogits.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[idx];
            let dw = &mut grads.weights[idx];
            for row in 0..layer.fan_out {
                let d = delta[row];
                grads.biases[idx][row] = d;
                let target = &mut dw[row * layer.fan_in..(row + 1) * layer.fan_in];
                for (t, &xi) in target.iter_mut().zip(input.iter()) {
                    *t = d * xi;
                }
            }
            if idx > 0 {
                // Propagate through the layer and its rectifier: the cached
                // input of this layer is the rectifier output, so its zeros
                // mark inactive units.
                let mut next = vec![0.0; layer.fan_in];
                for row in 0..layer.fan_out {
                    let d = delta[row];
                    let w = &layer.weights[row * layer.fan_in..(row + 1) * layer.fan_in];
                    for (n, &wi) in next.iter_mut().zip(w.iter()) {
                        *n += d * wi;
                    }
                }
                for (n, &a) in next.iter_mut().zip(input.iter()) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Serializes the parameters: magic `MLP1`, u32 version, u32 dim count,
    /// u32 dims, then f64 weights (row-major) and biases per layer.
    pub fn checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        let dims = self.arch.dims();
        out.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            out.write_all(&(*d as u32).to_le_bytes())?;
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(layer.biases.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Restores parameters written by [`checkpoint`](Self::checkpoint).
    pub fn restore<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("truncated model header: {e}")))?;
        if magic != MODEL_MAGIC {
            return Err(Error::Format(format!(
                "bad model magic {magic:02x?}, expected {MODEL_MAGIC:02x?} (\"MLP1\")"
            )));
        }
        let mut u32buf = [0u8; 4];
        input
            .read_exact(&mut u32buf)
            .map_err(|e| Error::Format(format!("truncated model version: {e}")))?;
        let version = u32::from_le_bytes(u32buf);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version: expected {MODEL_VERSION}, found {version}"
            )));
        }
        input
            .read_exact(&mut u32buf)
            .map_err(|e| Error::Format(format!("truncated dim count: {e}")))?;
        let ndims = u32::from_le_bytes(u32buf) as usize;
        if ndims < 2 {
            return Err(Error::Format(format!("model needs >= 2 dims, found {ndims}")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            input
                .read_exact(&mut u32buf)
                .map_err(|e| Error::Format(format!("truncated dim table: {e}")))?;
            dims.push(u32::from_le_bytes(u32buf) as usize);
        }
        let arch = Architecture::new(
            dims[0],
            dims[1..ndims - 1].to_vec(),
            dims[ndims - 1],
        )
        .map_err(|e| Error::Format(format!("bad model architecture: {e}")))?;
        let mut layers = Vec::with_capacity(ndims - 1);
        let mut f64buf = [0u8; 8];
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                input
                    .read_exact(&mut f64buf)
                    .map_err(|e| Error::Format(format!("truncated weights: {e}")))?;
                weights.push(f64::from_le_bytes(f64buf));
            }
            let mut biases = Vec::with_capacity(fan_out);
            for _ in 0..fan_out {
                input
                    .read_exact(&mut f64buf)
                    .map_err(|e| Error::Format(format!("truncated biases: {e}")))?;
                biases.push(f64::from_le_bytes(f64buf));
            }
            layers.push(DenseLayer {
                weights,
                biases,
                fan_in,
                fan_out,
            });
        }
        if input.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after model payload".into()));
        }
        Ok(Self { arch, layers })
    }
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Keeps the base rate through `start_epoch`, then decays linearly so
    /// the final epoch trains at `1/(total - start_epoch + 1)` of the base.
    LinearDecay { start_epoch: u64 },
}

impl LrSchedule {
    pub fn factor(&self, epoch: u64, total_epochs: u64) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::LinearDecay { start_epoch } => {
                if epoch <= *start_epoch || total_epochs <= *start_epoch {
                    1.0
                } else {
                    let span = (total_epochs - start_epoch) as f64 + 1.0;
                    ((total_epochs - epoch) as f64 + 1.0) / span
                }
            }
        }
    }
}

/// SGD with momentum. Velocity buffers are shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub base_lr: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    lr: f64,
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(base_lr: f64, momentum: f64, schedule: LrSchedule, params: &MlpParams) -> Result<Self> {
        if !(base_lr > 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "need base_lr > 0 and momentum in [0, 1), got {base_lr} and {momentum}"
            )));
        }
        Ok(Self {
            base_lr,
            momentum,
            schedule,
            lr: base_lr,
            velocity_w: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            velocity_b: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.biases.len()])
                .collect(),
        })
    }

    /// Sets the effective rate for an epoch from the schedule.
    pub fn enter_epoch(&mut self, epoch: u64, total_epochs: u64) {
        self.lr = self.base_lr * self.schedule.factor(epoch, total_epochs);
    }

    pub fn current_lr(&self) -> f64 {
        self.lr
    }

    /// Overrides the effective rate (used by tests and the zero-step guard).
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }
}

/// One optimizer step: `v = momentum * v + g`, `theta -= lr * v`.
/// A zero learning rate leaves the parameters unchanged.
pub fn backward_step(params: &mut MlpParams, opt: &mut Sgd, grads: &Gradients) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradients reached the optimizer".into(),
        ));
    }
    for (idx, layer) in params.layers.iter_mut().enumerate() {
        let vw = &mut opt.velocity_w[idx];
        for ((w, v), &g) in layer
            .weights
            .iter_mut()
            .zip(vw.iter_mut())
            .zip(grads.weights[idx].iter())
        {
            *v = opt.momentum * *v + g;
            *w -= opt.lr * *v;
        }
        let vb = &mut opt.velocity_b[idx];
        for ((b, v), &g) in layer
            .biases
            .iter_mut()
            .zip(vb.iter_mut())
            .zip(grads.biases[idx].iter())
        {
            *v = opt.momentum * *v + g;
            *b -= opt.lr * *v;
        }
    }
    Ok(())
}

/// Augmentation context for a dataset-wide prediction pass.
#[derive(Debug, Clone, Copy)]
pub struct AugmentDraw<'a> {
    pub spec: &'a AugmentSpec,
    pub feature_stds: &'a [f64],
    /// Root for the pass; per-sample streams derive from it by sample id.
    pub seed: u64,
}

/// Runs the branch over every sample under the view's augmentation.
/// Deterministic given parameters, dataset, and the augmentation seed.
pub fn predict_dataset(
    params: &MlpParams,
    dataset: &NoisyDataset,
    view: ViewTag,
    draw: &AugmentDraw<'_>,
) -> Result<Vec<ProbDist>> {
    if dataset.is_empty() {
        return Err(Error::Domain("predict_dataset over an empty dataset".into()));
    }
    let mut out = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let mut rng = seeding::stream(draw.seed, &[view.index() as u64, i as u64]);
        let x = augment(dataset.feature(i), view, draw.spec, draw.feature_stds, &mut rng);
        let (_, probs) = params.forward(&x)?;
        out.push(probs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ce_grad_logits;
    use crate::prob::PROB_FLOOR;

    fn arch() -> Architecture {
        Architecture::new(3, vec![4], 3).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seeds_differ() {
        let a = init_mlp(&arch(), 1);
        let b = init_mlp(&arch(), 1);
        assert_eq!(a, b);
        let dual = init_dual(&arch(), 1, 2).unwrap();
        assert_ne!(dual.branch1, dual.branch2);
        assert!(matches!(
            init_dual(&arch(), 7, 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let mut params = init_mlp(&arch(), 1);
        for layer in params.layers.iter_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let (_, probs) = params.forward(&[0.3, -1.0, 2.0]).unwrap();
        for &p in probs.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_linear_layer_matches_hand_math() {
        let arch = Architecture::new(2, vec![], 2).unwrap();
        let mut params = init_mlp(&arch, 1);
        params.layers[0].weights = vec![1.0, 2.0, -1.0, 0.5]; // rows: [1,2], [-1,0.5]
        params.layers[0].biases = vec![0.0, 0.0];
        let (logits, probs) = params.forward(&[1.0, 0.0]).unwrap();
        assert_eq!(logits, vec![1.0, -1.0]);
        let e = (2.0f64).exp();
        assert!((probs.values()[0] - e / (1.0 + e)).abs() < 1e-12);
        assert!(params.forward(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn probs_always_on_simplex() {
        let params = init_mlp(&Architecture::new(5, vec![8, 8], 4).unwrap(), 3);
        let mut rng = seeding::stream(11, &[]);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let (_, probs) = params.forward(&x).unwrap();
            let sum: f64 = probs.values().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let mut params = init_mlp(&arch(), 5);
        let reference = params.clone();
        let mut opt = Sgd::new(0.1, 0.9, LrSchedule::Constant, &params).unwrap();
        opt.set_lr(0.0);
        let cache = params.forward_cached(&[1.0, 2.0, 3.0]).unwrap();
        let dlogits = ce_grad_logits(&cache.logits, 0, PROB_FLOOR).unwrap();
        let grads = params.backward(&cache, &dlogits).unwrap();
        backward_step(&mut params, &mut opt, &grads).unwrap();
        assert_eq!(params, reference);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut params = init_mlp(&arch(), 5);
        let mut opt = Sgd::new(0.1, 0.9, LrSchedule::Constant, &params).unwrap();
        let mut grads = Gradients::zeros_like(&params);
        grads.weights[0][0] = f64::NAN;
        assert!(matches!(
            backward_step(&mut params, &mut opt, &grads),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let arch = Architecture::new(3, vec![5, 4], 3).unwrap();
        let params = init_mlp(&arch, 9);
        let mut rng = seeding::stream(12, &[]);
        for trial in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let label = (rng.random::<u32>() as usize) % 3;
            let cache = params.forward_cached(&x).unwrap();
            let dlogits = ce_grad_logits(&cache.logits, label, PROB_FLOOR).unwrap();
            let grads = params.backward(&cache, &dlogits).unwrap();

            let loss_of = |p: &MlpParams| -> f64 {
                let (_, probs) = p.forward(&x).unwrap();
                -probs.values()[label].max(PROB_FLOOR).ln()
            };
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            let mut diff_sq = 0.0;
            let mut norm_sq = 0.0;
            for layer in 0..params.layers().len() {
                for wi in 0..params.layers()[layer].weights.len() {
                    let mut plus = params.clone();
                    plus.layers[layer].weights[wi] += h;
                    let mut minus = params.clone();
                    minus.layers[layer].weights[wi] -= h;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let an = grads.weights[layer][wi];
                    diff_sq += (fd - an) * (fd - an);
                    norm_sq += fd * fd;
                }
                for bi in 0..params.layers()[layer].biases.len() {
                    let mut plus = params.clone();
                    plus.layers[layer].biases[bi] += h;
                    let mut minus = params.clone();
                    minus.layers[layer].biases[bi] -= h;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let an = grads.biases[layer][bi];
                    diff_sq += (fd - an) * (fd - an);
                    norm_sq += fd * fd;
                }
            }
            max_rel = max_rel.max(diff_sq.sqrt() / norm_sq.sqrt().max(1e-8));
            assert!(max_rel < 1e-5, "trial {trial}: rel err {max_rel}");
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        // 100 steps of full-batch SGD on separable 2-class blobs lowers the
        // training cross-entropy.
        let data = crate::corpus::make_blobs(2, 40, 2, 8.0, 1.0, 6).unwrap();
        let arch = Architecture::new(2, vec![8], 2).unwrap();
        let mut params = init_mlp(&arch, 2);
        let mut opt = Sgd::new(0.2, 0.9, LrSchedule::Constant, &params).unwrap();
        let ce_all = |p: &MlpParams| -> f64 {
            let mut total = 0.0;
            for i in 0..data.len() {
                let (_, probs) = p.forward(data.feature(i)).unwrap();
                total += -probs.values()[data.noisy_labels()[i]].max(PROB_FLOOR).ln();
            }
            total / data.len() as f64
        };
        let before = ce_all(&params);
        for _ in 0..100 {
            let mut grads = Gradients::zeros_like(&params);
            for i in 0..data.len() {
                let cache = params.forward_cached(data.feature(i)).unwrap();
                let dlogits =
                    ce_grad_logits(&cache.logits, data.noisy_labels()[i], PROB_FLOOR).unwrap();
                let g = params.backward(&cache, &dlogits).unwrap();
                grads.add_scaled(&g, 1.0 / data.len() as f64);
            }
            backward_step(&mut params, &mut opt, &grads).unwrap();
        }
        let after = ce_all(&params);
        assert!(after < before, "{after} !< {before}");
        assert!(after < 0.1, "training CE still {after}");
    }

    #[test]
    fn model_checkpoint_roundtrip() {
        let params = init_mlp(&Architecture::new(4, vec![6, 5], 3).unwrap(), 77);
        let mut bytes = Vec::new();
        params.checkpoint(&mut bytes).unwrap();
        let restored = MlpParams::restore(&bytes[..]).unwrap();
        assert_eq!(params, restored);

        match MlpParams::restore(&bytes[..bytes.len() / 2]) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn predict_dataset_is_deterministic() {
        let data = crate::corpus::make_blobs(3, 10, 4, 6.0, 1.0, 8).unwrap();
        let stds = data.feature_stds();
        let spec = AugmentSpec::default();
        let params = init_mlp(&Architecture::new(4, vec![6], 3).unwrap(), 4);
        let draw = AugmentDraw {
            spec: &spec,
            feature_stds: &stds,
            seed: 99,
        };
        let a = predict_dataset(&params, &data, ViewTag::Weak, &draw).unwrap();
        let b = predict_dataset(&params, &data, ViewTag::Weak, &draw).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), data.len());
        let strong = predict_dataset(&params, &data, ViewTag::Strong, &draw).unwrap();
        assert_ne!(a, strong);
        // Ensemble mean stays on the simplex.
        for (wp, sp) in a.iter().zip(strong.iter()) {
            let mean: Vec<f64> = wp
                .values()
                .iter()
                .zip(sp.values())
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            assert!(ProbDist::new(mean).is_ok());
        }
    }
}
