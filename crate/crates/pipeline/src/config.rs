//! Experiment configuration in TOML.
//!
//! Every table rejects unknown keys. Sections other than `[dataset]` and
//! `[[layer]]` may be omitted and take their defaults. A minimal file:
//!
//! ```toml
//! seed = 1
//! timesteps = 20
//!
//! [dataset]
//! name = "synthetic"
//!
//! [[layer]]
//! type = "conv"
//! out = 16
//!
//! [[layer]]
//! type = "avgpool"
//! size = 2
//!
//! [[layer]]
//! type = "linear"
//! out = 4
//! ```
//!
//! Input channels and linear fan-in are inferred from the dataset shape.
//! The last weighted layer is always the non-spiking output accumulator.
//! Per-section `seed` keys default to values derived from the global seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikeprune_core::snn::{LayerSpec, NetworkConfig, Shape3};
use spikeprune_core::spatial::SpatialConfig;
use spikeprune_core::temporal::TemporalPruneConfig;
use spikeprune_core::train::{AnnTrainConfig, SnnTrainConfig, BALANCE_PERCENTILE};

use crate::error::{PipelineError, Result};

/// Environment variable that replaces `dataset.path`.
pub const DATA_ROOT_ENV: &str = "SPIKEPRUNE_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Simulation length of the unpruned networks.
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    pub dataset: DatasetConfig,
    #[serde(rename = "layer")]
    pub layers: Vec<ArchLayer>,
    #[serde(default)]
    pub ann: AnnTrainConfig,
    #[serde(default)]
    pub snn: SnnTrainConfig,
    #[serde(default)]
    pub convert: ConvertConfig,
    #[serde(default)]
    pub spatial: SpatialConfig,
    #[serde(default)]
    pub temporal: TemporalSection,
    #[serde(default)]
    pub quantize: QuantizeSection,
    #[serde(default)]
    pub noise: NoiseSection,
}

fn default_timesteps() -> usize {
    20
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Synthetic,
    Mnist,
    Cifar10,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    /// Directory holding the raw files (MNIST, CIFAR-10).
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Keep only the first n training (before the split) / test samples.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
}

fn default_val_fraction() -> f64 {
    0.1
}

/// Bar-pattern generator: each class is one bar orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub size: usize,
    /// 2 to 4: horizontal, vertical, diagonal, anti-diagonal.
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    /// Std of the additive pixel noise, in raw [0, 1] intensity units.
    pub noise: f64,
    /// Number of random distractor pixels lit per image.
    pub clutter: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            size: 8,
            classes: 4,
            train: 1200,
            test: 400,
            noise: 0.2,
            clutter: 4,
        }
    }
}

/// One architecture entry. Channel and fan-in counts come from the
/// preceding layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArchLayer {
    Conv {
        out: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "one")]
        padding: usize,
    },
    Linear {
        out: usize,
    },
    #[serde(rename = "avgpool")]
    AvgPool {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
}

fn default_kernel() -> usize {
    3
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertConfig {
    pub percentile: f64,
    /// Training samples used for threshold calibration.
    pub samples: usize,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        Self {
            percentile: BALANCE_PERCENTILE,
            samples: 256,
        }
    }
}

/// Temporal pruning settings; the minimum accuracy is expressed relative to
/// the validation accuracy of the spatially pruned net at full length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalSection {
    pub step: usize,
    pub epochs_per_iter: usize,
    /// Allowed drop below the starting validation accuracy, in points.
    pub max_drop_points: f64,
}

impl Default for TemporalSection {
    fn default() -> Self {
        Self {
            step: 1,
            epochs_per_iter: 1,
            max_drop_points: 3.0,
        }
    }
}

impl TemporalSection {
    pub fn to_core(&self, t_start: usize, baseline: f64) -> TemporalPruneConfig {
        TemporalPruneConfig {
            step: self.step,
            epochs_per_iter: self.epochs_per_iter,
            min_accuracy: (baseline - self.max_drop_points / 100.0).max(f64::MIN_POSITIVE),
            t_start,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeSection {
    pub bits: u32,
}

impl Default for QuantizeSection {
    fn default() -> Self {
        Self { bits: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigmas: Vec<f64>,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document. Relative dataset paths are
    /// resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let has_seed = |section: &str| {
            raw.get(section)
                .and_then(|v| v.as_table())
                .is_some_and(|t| t.contains_key("seed"))
        };
        let (ann_seed, snn_seed, noise_seed) = (has_seed("ann"), has_seed("snn"), has_seed("noise"));
        cfg.apply_seed(cfg.seed, !ann_seed, !snn_seed, !noise_seed);
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                cfg.dataset.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Replaces the global seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.apply_seed(seed, true, true, true);
    }

    fn apply_seed(&mut self, seed: u64, ann: bool, snn: bool, noise: bool) {
        // TOML integers are signed 64-bit
        let seed = seed & i64::MAX as u64;
        let derive = |k: u64| (seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k) & i64::MAX as u64;
        self.seed = seed;
        if ann {
            self.ann.seed = seed;
        }
        if snn {
            self.snn.seed = derive(0x5);
        }
        if noise {
            self.noise.seed = derive(0x0153);
        }
    }

    /// Applies the data-root override and checks every setting that can be
    /// checked without touching the data.
    pub fn resolve(&mut self, data_root: Option<PathBuf>) -> Result<()> {
        if let Some(root) = data_root {
            self.dataset.path = Some(root);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.timesteps < 2 {
            return bad(format!("timesteps must be at least 2, got {}", self.timesteps));
        }
        if !(0.0..1.0).contains(&self.dataset.val_fraction) {
            return bad(format!("val_fraction {} outside [0, 1)", self.dataset.val_fraction));
        }
        match self.dataset.name {
            DatasetName::Synthetic => {
                let s = &self.dataset.synthetic;
                if !(2..=4).contains(&s.classes) {
                    return bad(format!("synthetic classes must be 2..=4, got {}", s.classes));
                }
                if s.size < 4 || s.train == 0 || s.test == 0 || !(s.noise >= 0.0) {
                    return bad("synthetic dataset needs size >= 4, non-empty splits and noise >= 0".into());
                }
            }
            DatasetName::Mnist | DatasetName::Cifar10 => match &self.dataset.path {
                None => {
                    return bad(format!(
                        "dataset {:?} needs dataset.path or {DATA_ROOT_ENV}",
                        self.dataset.name
                    ))
                }
                Some(p) if !p.is_dir() => return bad(format!("dataset path {} does not exist", p.display())),
                _ => {}
            },
        }
        if self.layers.is_empty() {
            return bad("architecture has no layers".into());
        }
        if !(1..=32).contains(&self.quantize.bits) {
            return bad(format!("quantize.bits {} outside [1, 32]", self.quantize.bits));
        }
        if self.noise.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise sigmas must be finite and non-negative".into());
        }
        if !(0.0..=100.0).contains(&self.convert.percentile) || self.convert.samples == 0 {
            return bad("convert needs a percentile in [0, 100] and at least one sample".into());
        }
        if !(self.temporal.max_drop_points >= 0.0) {
            return bad("temporal.max_drop_points must be non-negative".into());
        }
        self.ann.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.snn.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn input_shape(&self) -> Shape3 {
        match self.dataset.name {
            DatasetName::Synthetic => {
                let n = self.dataset.synthetic.size;
                Shape3::new(1, n, n)
            }
            DatasetName::Mnist => Shape3::new(1, 28, 28),
            DatasetName::Cifar10 => Shape3::new(3, 32, 32),
        }
    }

    /// The concrete network described by `[[layer]]`.
    pub fn network(&self) -> Result<NetworkConfig> {
        build_network(self.input_shape(), &self.layers)
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn build_network(input: Shape3, layers: &[ArchLayer]) -> Result<NetworkConfig> {
    let cfg_err = |m: String| PipelineError::Config(m);
    let last_weighted = layers
        .iter()
        .rposition(|l| matches!(l, ArchLayer::Conv { .. } | ArchLayer::Linear { .. }))
        .ok_or_else(|| cfg_err("architecture has no conv or linear layer".into()))?;
    let mut shape = input;
    let mut specs = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let mut spec = match *l {
            ArchLayer::Conv {
                out,
                kernel,
                stride,
                padding,
            } => LayerSpec::conv(shape.c, out, kernel, stride, padding),
            ArchLayer::Linear { out } => LayerSpec::linear(shape.len(), out),
            ArchLayer::AvgPool { size } => LayerSpec::avgpool(size),
            ArchLayer::Dropout { rate } => LayerSpec::dropout(rate),
        };
        if i == last_weighted {
            spec = spec.non_spiking();
        }
        shape = spec
            .output_shape(shape)
            .map_err(|e| cfg_err(format!("layer {i}: {e}")))?;
        specs.push(spec);
    }
    NetworkConfig::new(input, specs).map_err(|e| cfg_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[dataset]
name = "synthetic"
[[layer]]
type = "conv"
out = 4
[[layer]]
type = "avgpool"
size = 2
[[layer]]
type = "linear"
out = 4
"#;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(cfg.timesteps, 20);
        assert_eq!(cfg.ann.seed, 3);
        assert_eq!(cfg.quantize.bits, 5);
        let net = cfg.network().unwrap();
        assert_eq!(net.layers.len(), 3);
        assert!(!net.layers[2].spiking);
        assert_eq!(net.num_classes(), 4);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MINIMAL.replace("seed = 3", "seed = 3\n[snn]\nlearning_rate = 0.1");
        assert!(matches!(
            ExperimentConfig::from_toml(&typo, Path::new(".")),
            Err(PipelineError::Config(_))
        ));
        let layer_typo = MINIMAL.replace("out = 4\n[[layer]]\ntype = \"avgpool\"", "outs = 4\n[[layer]]\ntype = \"avgpool\"");
        assert!(ExperimentConfig::from_toml(&layer_typo, Path::new(".")).is_err());
    }

    #[test]
    fn explicit_section_seed_survives() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\n[ann]\nseed = 11");
        let cfg = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.ann.seed, 11);
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml(), Path::new(".")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn missing_dataset_dir_is_config_error() {
        let text = MINIMAL.replace("\"synthetic\"", "\"mnist\"\npath = \"/nonexistent/mnist\"");
        let mut cfg = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(matches!(cfg.resolve(None), Err(PipelineError::Config(_))));
    }
}
