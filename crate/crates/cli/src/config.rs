//! Experiment configuration: flat TOML (or JSON) sections with every field
//! defaulted, strict about unknown keys, and serializable back out as the
//! fully resolved JSON that accompanies every run.
//!
//! The resolved JSON is itself a valid input, so a run directory always
//! contains everything needed to reproduce it. Validation failures name the
//! offending field (`kernel.sigma`, `train.momentum`, ...) rather than the
//! serde path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use decoupled_uniformity::data::{
    clean_prior, load_dataset, load_prior, make_gaussian_mixture, make_randbits, oracle_prior,
    shuffled_prior,
};
use decoupled_uniformity::eval::SweepConfig;
use decoupled_uniformity::{
    Activation, AugmentationKind, AugmentationSpec, CentroidMode, Dataset, EncoderInit,
    KernelSpec, PriorEmbedding, ProjectionHead, Schedule, TrainConfig,
};

use crate::error::{CliError, Result};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

/// Synthetic data source and train/test split sizes.
///
/// `generator = "gaussian_mixture"` draws `classes` spherical clusters with
/// mean separation `separation`; `k_bits > 0` appends that many random,
/// augmentation-invariant bit channels (scaled by `bit_scale`, bits drawn
/// from `bits_seed`; the test split uses `bits_seed + 1`). The optional test
/// split redraws the mixture from `test_seed`. `generator = "file"` loads
/// CSV datasets from `path`/`test_path` instead and ignores the mixture
/// fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: String,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
    pub k_bits: usize,
    pub bit_scale: f64,
    pub bits_seed: u64,
    pub test_per_class: usize,
    pub test_seed: u64,
    pub path: String,
    pub test_path: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            generator: "gaussian_mixture".into(),
            classes: 2,
            per_class: 8,
            dim: 8,
            separation: 3.0,
            seed: 0,
            k_bits: 0,
            bit_scale: 1.0,
            bits_seed: 1,
            test_per_class: 0,
            test_seed: 101,
            path: String::new(),
            test_path: String::new(),
        }
    }
}

/// View-sampling noise. `radius` applies to the ball kinds and is ignored by
/// `mask_one_coordinate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub kind: String,
    pub radius: f64,
    pub bit_preserving: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig { kind: "uniform_ball".into(), radius: 0.5, bit_preserving: true }
    }
}

/// Where the prior embedding for kernel centroids comes from: `none`,
/// `oracle` (one-hot class vectors blurred by Gaussian noise of `sigma_z`),
/// `clean` (the uncontaminated sample coordinates), `shuffled` (an oracle
/// prior with permuted rows, i.e. a worthless kernel), or `file`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub source: String,
    pub sigma_z: f64,
    pub seed: u64,
    pub path: String,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { source: "none".into(), sigma_z: 0.0, seed: 7, path: String::new() }
    }
}

/// Kernel on prior vectors. The ridge regularizer follows the batch-size
/// rule `lambda = lambda_scale / sqrt(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: String,
    pub sigma: f64,
    pub lambda_scale: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { kind: "rbf".into(), sigma: 1.0, lambda_scale: 0.01 }
    }
}

/// MLP architecture: `input -> hidden... -> output_dim`, optionally followed
/// by a two-layer projection head. `head_hidden = 0` disables the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: String,
    pub head_hidden: usize,
    pub head_output: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: vec![16],
            output_dim: 8,
            activation: "tanh".into(),
            head_hidden: 0,
            head_output: 0,
            seed: 0,
        }
    }
}

/// SGD hyperparameters; mirrors the library trainer field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub views: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub schedule: String,
    pub momentum: f64,
    pub centroids: String,
    pub seed: u64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            epochs: 10,
            batch_size: 32,
            views: 2,
            temperature: 2.0,
            learning_rate: 0.1,
            schedule: "constant".into(),
            momentum: 0.0,
            centroids: "view_average".into(),
            seed: 0,
        }
    }
}

/// Post-training diagnostics toggles plus the grids the sweep command uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub probe: bool,
    pub probe_seed: u64,
    pub bounds: bool,
    /// Kernel-graph threshold used by the bound report's union-graph row.
    pub bounds_epsilon: f64,
    pub sweep_sigma_grid: Vec<f64>,
    pub sweep_m: usize,
    pub sweep_knn: usize,
    pub sweep_prior_seed: u64,
    pub sweep_probe_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            probe: false,
            probe_seed: 0,
            bounds: false,
            bounds_epsilon: 0.5,
            sweep_sigma_grid: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            sweep_m: 100,
            sweep_knn: 10,
            sweep_prior_seed: 7,
            sweep_probe_seed: 0,
        }
    }
}

/// One experiment, fully specified. Every run hashes the resolved form of
/// this struct into its `run_id`, so two directories with equal ids ran
/// byte-identical configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Recorded for the determinism contract; current kernels are
    /// single-threaded, so this only tags outputs.
    pub threads: usize,
    pub dataset: DatasetConfig,
    pub augmentation: AugmentationConfig,
    pub prior: PriorConfig,
    pub kernel: KernelConfig,
    pub encoder: EncoderConfig,
    pub train: TrainBlock,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            threads: 1,
            dataset: DatasetConfig::default(),
            augmentation: AugmentationConfig::default(),
            prior: PriorConfig::default(),
            kernel: KernelConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainBlock::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses `.json` files as JSON and everything else as TOML, then
    /// validates. Unknown keys are rejected by the deserializer.
    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: display.clone(), message: e.to_string() })?;
        let config: ExperimentConfig =
            if path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("json")) {
                serde_json::from_str(&text)
                    .map_err(|e| ConfigError::Parse { path: display, message: e.to_string() })?
            } else {
                toml::from_str(&text)
                    .map_err(|e| ConfigError::Parse { path: display, message: e.to_string() })?
            };
        config.validate()?;
        Ok(config)
    }

    /// The resolved config as pretty JSON (defaults expanded), newline
    /// terminated. These exact bytes are written next to every run's outputs
    /// and hashed into the run id.
    pub fn resolved_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let d = &self.dataset;
        match d.generator.as_str() {
            "gaussian_mixture" => {
                if d.classes < 2 {
                    return Err(invalid("dataset.classes", format!("need >= 2 classes, got {}", d.classes)));
                }
                if d.per_class == 0 {
                    return Err(invalid("dataset.per_class", "need >= 1 sample per class"));
                }
                if d.dim == 0 {
                    return Err(invalid("dataset.dim", "need >= 1 feature dimension"));
                }
                if !(d.separation.is_finite() && d.separation >= 0.0) {
                    return Err(invalid(
                        "dataset.separation",
                        format!("must be finite and >= 0, got {}", d.separation),
                    ));
                }
            }
            "file" => {
                if d.path.is_empty() {
                    return Err(invalid("dataset.path", "generator \"file\" needs a dataset path"));
                }
            }
            other => {
                return Err(invalid(
                    "dataset.generator",
                    format!("unknown generator {other:?}; expected \"gaussian_mixture\" or \"file\""),
                ));
            }
        }
        if !(d.bit_scale.is_finite() && d.bit_scale > 0.0) {
            return Err(invalid("dataset.bit_scale", format!("must be finite and > 0, got {}", d.bit_scale)));
        }

        let a = &self.augmentation;
        match a.kind.as_str() {
            "uniform_ball" | "gaussian_truncated" => {
                if !(a.radius.is_finite() && a.radius >= 0.0) {
                    return Err(invalid(
                        "augmentation.radius",
                        format!("must be finite and >= 0, got {}", a.radius),
                    ));
                }
            }
            "mask_one_coordinate" => {}
            other => {
                return Err(invalid(
                    "augmentation.kind",
                    format!(
                        "unknown kind {other:?}; expected \"uniform_ball\", \
                         \"gaussian_truncated\", or \"mask_one_coordinate\""
                    ),
                ));
            }
        }

        let p = &self.prior;
        match p.source.as_str() {
            "none" | "oracle" | "clean" | "shuffled" => {}
            "file" => {
                if p.path.is_empty() {
                    return Err(invalid("prior.path", "prior source \"file\" needs a path"));
                }
            }
            other => {
                return Err(invalid(
                    "prior.source",
                    format!(
                        "unknown source {other:?}; expected \"none\", \"oracle\", \"clean\", \
                         \"shuffled\", or \"file\""
                    ),
                ));
            }
        }
        if !(p.sigma_z.is_finite() && p.sigma_z >= 0.0) {
            return Err(invalid("prior.sigma_z", format!("must be finite and >= 0, got {}", p.sigma_z)));
        }

        let k = &self.kernel;
        match k.kind.as_str() {
            "rbf" => {
                if !(k.sigma.is_finite() && k.sigma > 0.0) {
                    return Err(invalid("kernel.sigma", format!("must be finite and > 0, got {}", k.sigma)));
                }
            }
            "cosine" | "linear" => {}
            other => {
                return Err(invalid(
                    "kernel.kind",
                    format!("unknown kind {other:?}; expected \"rbf\", \"cosine\", or \"linear\""),
                ));
            }
        }
        if !(k.lambda_scale.is_finite() && k.lambda_scale > 0.0) {
            return Err(invalid(
                "kernel.lambda_scale",
                format!("must be finite and > 0, got {}", k.lambda_scale),
            ));
        }

        let e = &self.encoder;
        if e.hidden.contains(&0) {
            return Err(invalid("encoder.hidden", "hidden widths must be >= 1"));
        }
        if e.output_dim == 0 {
            return Err(invalid("encoder.output_dim", "output dimension must be >= 1"));
        }
        match e.activation.as_str() {
            "relu" | "tanh" => {}
            other => {
                return Err(invalid(
                    "encoder.activation",
                    format!("unknown activation {other:?}; expected \"relu\" or \"tanh\""),
                ));
            }
        }
        if (e.head_hidden == 0) != (e.head_output == 0) {
            return Err(invalid(
                "encoder.head_hidden",
                "projection head needs both head_hidden and head_output (or neither)",
            ));
        }

        let t = &self.train;
        if t.batch_size < 2 {
            return Err(invalid("train.batch_size", format!("must be >= 2, got {}", t.batch_size)));
        }
        if t.views == 0 {
            return Err(invalid("train.views", "must be >= 1"));
        }
        if !(t.temperature.is_finite() && t.temperature > 0.0) {
            return Err(invalid("train.temperature", format!("must be finite and > 0, got {}", t.temperature)));
        }
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(invalid(
                "train.learning_rate",
                format!("must be finite and >= 0, got {}", t.learning_rate),
            ));
        }
        match t.schedule.as_str() {
            "constant" | "cosine" => {}
            other => {
                return Err(invalid(
                    "train.schedule",
                    format!("unknown schedule {other:?}; expected \"constant\" or \"cosine\""),
                ));
            }
        }
        if !(t.momentum.is_finite() && (0.0..1.0).contains(&t.momentum)) {
            return Err(invalid("train.momentum", format!("must lie in [0, 1), got {}", t.momentum)));
        }
        match t.centroids.as_str() {
            "view_average" => {}
            "kernel" => {
                if p.source == "none" {
                    return Err(invalid(
                        "prior.source",
                        "train.centroids = \"kernel\" needs a prior; set prior.source",
                    ));
                }
            }
            other => {
                return Err(invalid(
                    "train.centroids",
                    format!("unknown mode {other:?}; expected \"view_average\" or \"kernel\""),
                ));
            }
        }

        let ev = &self.eval;
        if !(ev.bounds_epsilon.is_finite() && ev.bounds_epsilon >= 0.0) {
            return Err(invalid(
                "eval.bounds_epsilon",
                format!("must be finite and >= 0, got {}", ev.bounds_epsilon),
            ));
        }
        if ev.sweep_sigma_grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("eval.sweep_sigma_grid", "noise levels must be finite and >= 0"));
        }
        if ev.sweep_m == 0 {
            return Err(invalid("eval.sweep_m", "must be >= 1"));
        }
        if ev.sweep_knn == 0 {
            return Err(invalid("eval.sweep_knn", "must be >= 1"));
        }
        if ev.probe && !self.has_test_split() {
            return Err(invalid(
                "dataset.test_per_class",
                "eval.probe needs a test split; set dataset.test_per_class (or test_path)",
            ));
        }

        if self.threads == 0 {
            return Err(invalid("threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn has_test_split(&self) -> bool {
        match self.dataset.generator.as_str() {
            "file" => !self.dataset.test_path.is_empty(),
            _ => self.dataset.test_per_class > 0,
        }
    }

    pub fn train_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        match d.generator.as_str() {
            "file" => Ok(load_dataset(&d.path)?),
            _ => self.mixture(d.per_class, d.seed, d.bits_seed),
        }
    }

    /// `None` when no test split is configured.
    pub fn test_dataset(&self) -> Result<Option<Dataset>> {
        let d = &self.dataset;
        match d.generator.as_str() {
            "file" => {
                if d.test_path.is_empty() {
                    return Ok(None);
                }
                Ok(Some(load_dataset(&d.test_path)?))
            }
            _ => {
                if d.test_per_class == 0 {
                    return Ok(None);
                }
                Ok(Some(self.mixture(d.test_per_class, d.test_seed, d.bits_seed.wrapping_add(1))?))
            }
        }
    }

    fn mixture(&self, per_class: usize, seed: u64, bits_seed: u64) -> Result<Dataset> {
        let d = &self.dataset;
        let base = make_gaussian_mixture(d.classes, per_class, d.dim, d.separation, seed)?;
        if d.k_bits == 0 {
            return Ok(base);
        }
        let mut ds = make_randbits(base, d.k_bits, bits_seed)?;
        ds.set_bit_scale(d.bit_scale)?;
        Ok(ds)
    }

    pub fn augmentation_spec(&self) -> AugmentationSpec {
        let a = &self.augmentation;
        let kind = match a.kind.as_str() {
            "gaussian_truncated" => AugmentationKind::GaussianTruncated { radius: a.radius },
            "mask_one_coordinate" => AugmentationKind::MaskOneCoordinate,
            _ => AugmentationKind::UniformBall { radius: a.radius },
        };
        AugmentationSpec { kind, bit_preserving: a.bit_preserving }
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        match self.kernel.kind.as_str() {
            "cosine" => KernelSpec::Cosine,
            "linear" => KernelSpec::Linear,
            _ => KernelSpec::Rbf { sigma: self.kernel.sigma },
        }
    }

    /// `None` when `prior.source = "none"`.
    pub fn prior(&self, ds: &Dataset) -> Result<Option<PriorEmbedding>> {
        let p = &self.prior;
        let prior = match p.source.as_str() {
            "none" => return Ok(None),
            "clean" => clean_prior(ds)?,
            "shuffled" => shuffled_prior(ds, p.seed)?,
            "file" => load_prior(&p.path)?,
            _ => oracle_prior(ds, p.sigma_z, p.seed)?,
        };
        Ok(Some(prior))
    }

    pub fn encoder_init(&self, input_dim: usize) -> EncoderInit {
        let e = &self.encoder;
        let mut dims = Vec::with_capacity(e.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&e.hidden);
        dims.push(e.output_dim);
        let activation =
            if e.activation == "relu" { Activation::Relu } else { Activation::Tanh };
        let mut init = EncoderInit::new(dims, activation, e.seed);
        if e.head_hidden > 0 {
            init = init
                .with_projection_head(ProjectionHead { hidden: e.head_hidden, output: e.head_output });
        }
        init
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            views: t.views,
            temperature: t.temperature,
            learning_rate: t.learning_rate,
            schedule: if t.schedule == "cosine" { Schedule::Cosine } else { Schedule::Constant },
            momentum: t.momentum,
            centroids: if t.centroids == "kernel" {
                CentroidMode::Kernel { spec: self.kernel_spec(), lambda_scale: self.kernel.lambda_scale }
            } else {
                CentroidMode::ViewAverage
            },
            seed: t.seed,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let ev = &self.eval;
        SweepConfig {
            sigma_grid: ev.sweep_sigma_grid.clone(),
            m: ev.sweep_m,
            knn: ev.sweep_knn,
            prior_seed: ev.sweep_prior_seed,
            probe_seed: ev.sweep_probe_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("decunif-config-{}-{name}", std::process::id()));
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn defaults_fill_an_empty_toml() {
        let path = write_temp("empty.toml", "");
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let path = write_temp("partial.toml", "[train]\nepochs = 3\n\n[kernel]\nsigma = 2.5\n");
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.kernel.sigma, 2.5);
        assert_eq!(cfg.dataset.classes, 2);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn unknown_keys_are_rejected_in_both_formats() {
        let path = write_temp("unknown.toml", "[train]\nepochz = 3\n");
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
        std::fs::remove_file(path).ok();

        let path = write_temp("unknown.json", "{\"train\": {\"epochz\": 3}}");
        let err = ExperimentConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn resolved_json_round_trips_exactly() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.epochs = 4;
        cfg.kernel.sigma = 0.75;
        cfg.eval.sweep_sigma_grid = vec![0.0, 0.1, 0.2, 0.4, 0.8];
        let json = cfg.resolved_json();
        let path = write_temp("resolved.json", &json);
        let reloaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(reloaded, cfg);
        assert_eq!(reloaded.resolved_json(), json);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn validation_errors_name_their_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.kernel.sigma = -1.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("kernel.sigma"), "{err}");

        let mut cfg = ExperimentConfig::default();
        cfg.train.momentum = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("train.momentum"));

        let mut cfg = ExperimentConfig::default();
        cfg.train.centroids = "kernel".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("prior.source"));

        let mut cfg = ExperimentConfig::default();
        cfg.eval.probe = true;
        assert!(cfg.validate().unwrap_err().to_string().contains("dataset.test_per_class"));

        let mut cfg = ExperimentConfig::default();
        cfg.augmentation.kind = "rotate".into();
        assert!(cfg.validate().unwrap_err().to_string().contains("augmentation.kind"));
    }

    #[test]
    fn sigma_validation_skips_non_rbf_kernels() {
        let mut cfg = ExperimentConfig::default();
        cfg.kernel.kind = "cosine".into();
        cfg.kernel.sigma = -1.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn randbits_wiring_applies_bits_and_scale() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.k_bits = 4;
        cfg.dataset.bit_scale = 2.0;
        cfg.dataset.test_per_class = 3;
        let train = cfg.train_dataset().unwrap();
        assert_eq!(train.k_bits(), 4);
        assert_eq!(train.input_dim(), cfg.dataset.dim + 4);
        assert_eq!(train.bit_scale(), 2.0);
        let test = cfg.test_dataset().unwrap().unwrap();
        assert_eq!(test.n(), 2 * 3);
        // Different bit seeds: the splits almost surely disagree somewhere.
        assert_ne!(train.bit_channels().unwrap().row(0), test.bit_channels().unwrap().row(0));
    }

    #[test]
    fn encoder_init_chains_dimensions() {
        let cfg = ExperimentConfig::default();
        let init = cfg.encoder_init(11);
        assert_eq!(init.layer_dims, vec![11, 16, 8]);
        let params = init.build().unwrap();
        assert_eq!(params.output_dim(), 8);
    }

    #[test]
    fn train_config_maps_kernel_mode() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.centroids = "kernel".into();
        cfg.prior.source = "oracle".into();
        cfg.validate().unwrap();
        match cfg.train_config().centroids {
            CentroidMode::Kernel { spec: KernelSpec::Rbf { sigma }, lambda_scale } => {
                assert_eq!(sigma, 1.0);
                assert_eq!(lambda_scale, 0.01);
            }
            other => panic!("expected kernel mode, got {other:?}"),
        }
    }
}
