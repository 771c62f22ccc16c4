//! Experiment configuration: JSON schema, validation, and dotted-path
//! overrides.
//!
//! Configs are strict: unknown keys anywhere in the document are rejected.
//! The effective (post-override) config is echoed into every run directory
//! so runs are self-describing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{AugmentSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::losses::LossParams;
use crate::model::LrSchedule;

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic Gaussian blobs, split per class into train/test.
    Blobs {
        classes: usize,
        features: usize,
        train_per_class: usize,
        test_per_class: usize,
        center_separation: f64,
        cluster_std: f64,
    },
    /// IDX file pairs (big-endian binary, unsigned-byte payload).
    Idx {
        train_features: PathBuf,
        train_labels: PathBuf,
        test_features: PathBuf,
        test_labels: PathBuf,
    },
}

/// Label-noise section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Symmetric {
        rate: f64,
    },
    Asymmetric {
        rate: f64,
        pair_map: Vec<usize>,
    },
    InstanceDependent {
        rate: f64,
        #[serde(default = "default_idn_std")]
        idn_std: f64,
    },
}

fn default_idn_std() -> f64 {
    0.1
}

impl NoiseConfig {
    pub fn to_spec(&self) -> NoiseSpec {
        match self {
            NoiseConfig::Symmetric { rate } => NoiseSpec::Symmetric { rate: *rate },
            NoiseConfig::Asymmetric { rate, pair_map } => NoiseSpec::Asymmetric {
                rate: *rate,
                pair_map: pair_map.clone(),
            },
            NoiseConfig::InstanceDependent { rate, idn_std } => NoiseSpec::InstanceDependent {
                rate: *rate,
                idn_std: *idn_std,
            },
        }
    }
}

/// Augmentation section (fractions of per-feature std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    pub mask_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let spec = AugmentSpec::default();
        Self {
            sigma_weak: spec.sigma_weak,
            sigma_strong: spec.sigma_strong,
            mask_prob: spec.mask_prob,
        }
    }
}

impl AugmentConfig {
    pub fn to_spec(&self) -> AugmentSpec {
        AugmentSpec {
            sigma_weak: self.sigma_weak,
            sigma_strong: self.sigma_strong,
            mask_prob: self.mask_prob,
        }
    }
}

/// Model section: hidden layer widths (input/output come from the data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
        }
    }
}

/// Learning-rate schedule section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant,
    LinearDecay { start_epoch: u64 },
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> LrSchedule {
        match self {
            ScheduleConfig::Constant => LrSchedule::Constant,
            ScheduleConfig::LinearDecay { start_epoch } => LrSchedule::LinearDecay {
                start_epoch: *start_epoch,
            },
        }
    }
}

/// Optimizer section: SGD with momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleConfig,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_schedule() -> ScheduleConfig {
    ScheduleConfig::Constant
}

/// Loss section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_lambda_b")]
    pub lambda_b: f64,
    #[serde(default = "default_lambda_n")]
    pub lambda_n: f64,
    #[serde(default = "default_clamp")]
    pub clamp: f64,
}

fn default_q() -> f64 {
    0.7
}
fn default_lambda_b() -> f64 {
    1.0
}
fn default_lambda_n() -> f64 {
    0.1
}
fn default_clamp() -> f64 {
    crate::prob::PROB_FLOOR
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            q: default_q(),
            lambda_b: default_lambda_b(),
            lambda_n: default_lambda_n(),
            clamp: default_clamp(),
        }
    }
}

impl LossConfig {
    pub fn to_params(&self) -> LossParams {
        LossParams {
            q: self.q,
            lambda_b: self.lambda_b,
            lambda_n: self.lambda_n,
            clamp: self.clamp,
        }
    }
}

/// All random seeds of a run. Every seed is explicit; there are no implicit
/// entropy sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub data: u64,
    pub branch1: u64,
    pub branch2: u64,
    pub augmentation: u64,
}

impl SeedConfig {
    /// Derived seed block for multi-seed sweeps: `data = base`, branches and
    /// augmentation offset deterministically.
    pub fn derive(base: u64) -> Self {
        Self {
            data: base,
            branch1: base.wrapping_add(1),
            branch2: base.wrapping_add(2),
            augmentation: base.wrapping_add(3),
        }
    }
}

/// Which subsets participate in training after warm-up. All three flags
/// false selects the no-split baseline: every sample trains with
/// cross-entropy as if clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "default_true")]
    pub use_clean: bool,
    #[serde(default = "default_true")]
    pub use_boundary: bool,
    #[serde(default = "default_true")]
    pub use_noisy: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            use_clean: true,
            use_boundary: true,
            use_noisy: true,
        }
    }
}

impl AblationConfig {
    pub fn is_no_split_baseline(&self) -> bool {
        !self.use_clean && !self.use_boundary && !self.use_noisy
    }
}

/// The full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Total epochs; selection starts at epoch 5.
    pub epochs: u64,
    pub batch_size: usize,
    #[serde(default)]
    pub loss: LossConfig,
    pub seeds: SeedConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    /// Permits runs shorter than 5 epochs (warm-up only, no selection).
    #[serde(default)]
    pub allow_warmup_only: bool,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.epochs < 5 && !self.allow_warmup_only {
            return Err(Error::Config(format!(
                "epochs = {} gives no selection epoch (needs >= 5); set allow_warmup_only for a warm-up-only run",
                self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.seeds.branch1 == self.seeds.branch2 {
            return Err(Error::Config(format!(
                "branch seeds must differ (both are {})",
                self.seeds.branch1
            )));
        }
        if let DatasetConfig::Blobs {
            classes,
            features,
            train_per_class,
            test_per_class,
            center_separation,
            cluster_std,
        } = &self.dataset
        {
            if *classes < 2 || *features < 2 {
                return Err(Error::Config(format!(
                    "blobs need classes >= 2 and features >= 2, got {classes} and {features}"
                )));
            }
            if *train_per_class == 0 || *test_per_class == 0 {
                return Err(Error::Config(
                    "blobs need non-empty train and test splits".into(),
                ));
            }
            if *center_separation < 0.0 || *cluster_std <= 0.0 {
                return Err(Error::Config(format!(
                    "blobs need center_separation >= 0 and cluster_std > 0, got {center_separation} and {cluster_std}"
                )));
            }
            let k = *classes;
            self.noise.to_spec().validate(k)?;
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be > 0",
                self.optimizer.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.optimizer.momentum
            )));
        }
        self.augment
            .to_spec()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.loss.to_params().validate()?;
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Top-level keys accepted by [`apply_overrides`], for error messages.
pub const TOP_LEVEL_KEYS: &[&str] = &[
    "dataset",
    "noise",
    "augment",
    "model",
    "optimizer",
    "epochs",
    "batch_size",
    "loss",
    "seeds",
    "ablation",
    "allow_warmup_only",
    "output_dir",
];

/// Applies `key=value` overrides onto a config JSON document. Keys are
/// dotted paths (`noise.rate`, `seeds.data`, `epochs`); values parse as JSON
/// scalars, falling back to strings. The patched document re-validates
/// against the strict schema, so unknown keys are rejected.
pub fn apply_overrides(json: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: serde_json::Value = serde_json::from_str(json)
        .map_err(|e| Error::Config(format!("invalid config JSON: {e}")))?;
    for entry in overrides {
        let (path, raw_value) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {entry:?} is not of the form key=value"))
        })?;
        let value: serde_json::Value = serde_json::from_str(raw_value)
            .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
        let segments: Vec<&str> = path.split('.').collect();
        let (last, parents) = segments.split_last().expect("split produced a segment");
        let mut node = &mut doc;
        for (idx, segment) in parents.iter().enumerate() {
            node = match node {
                serde_json::Value::Object(map) => map
                    .entry(segment.to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default())),
                _ => {
                    return Err(Error::Config(format!(
                        "override {path:?}: {} is not an object",
                        segments[..=idx].join(".")
                    )))
                }
            };
        }
        match node {
            serde_json::Value::Object(map) => {
                map.insert(last.to_string(), value.clone());
            }
            _ => {
                return Err(Error::Config(format!(
                    "override {path:?}: parent is not an object"
                )))
            }
        }
    }
    let patched = serde_json::to_string(&doc).expect("value serializes");
    serde_json::from_str::<ExperimentConfig>(&patched).map_err(|e| {
        Error::Config(format!(
            "override produced an invalid config ({e}); valid top-level keys: {}",
            TOP_LEVEL_KEYS.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> String {
        r#"{
            "dataset": {"blobs": {"classes": 3, "features": 8, "train_per_class": 50,
                         "test_per_class": 20, "center_separation": 6.0, "cluster_std": 1.0}},
            "noise": {"kind": "symmetric", "rate": 0.2},
            "optimizer": {"learning_rate": 0.05},
            "epochs": 8,
            "batch_size": 32,
            "seeds": {"data": 1, "branch1": 2, "branch2": 3, "augmentation": 4},
            "output_dir": "runs/test"
        }"#
        .to_string()
    }

    #[test]
    fn parses_with_defaults() {
        let config = ExperimentConfig::from_json(&base_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.loss.q, 0.7);
        assert_eq!(config.loss.lambda_b, 1.0);
        assert_eq!(config.loss.lambda_n, 0.1);
        assert_eq!(config.model.hidden, vec![64, 64]);
        assert!(config.ablation.use_clean);
    }

    #[test]
    fn rejects_unknown_keys() {
        let json = base_json().replace("\"epochs\": 8", "\"epochs\": 8, \"nosuch\": 1");
        assert!(matches!(
            ExperimentConfig::from_json(&json),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overrides_apply_and_typecheck() {
        let config = apply_overrides(
            &base_json(),
            &["noise.rate=0.4".into(), "epochs=12".into()],
        )
        .unwrap();
        assert_eq!(config.epochs, 12);
        match config.noise {
            NoiseConfig::Symmetric { rate } => assert_eq!(rate, 0.4),
            other => panic!("unexpected noise config {other:?}"),
        }

        let err = apply_overrides(&base_json(), &["nosuch.key=1".into()]);
        match err {
            Err(Error::Config(msg)) => assert!(msg.contains("valid top-level keys"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn short_runs_need_explicit_allowance() {
        let mut config = ExperimentConfig::from_json(&base_json()).unwrap();
        config.epochs = 3;
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.allow_warmup_only = true;
        config.validate().unwrap();
    }

    #[test]
    fn equal_branch_seeds_rejected() {
        let mut config = ExperimentConfig::from_json(&base_json()).unwrap();
        config.seeds.branch2 = config.seeds.branch1;
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }
}
