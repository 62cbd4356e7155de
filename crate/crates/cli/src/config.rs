//! Experiment configuration: one TOML file with a section per concern.
//! Every field has a default, so an empty file is a valid config.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

const SIGMA25: f64 = 25.0 / 255.0;
const LEVEL: f64 = 1.0 / 255.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub typical_set: VerifySection,
    pub sample: SampleSection,
    pub strategy: StrategySection,
    pub corpus: CorpusSection,
    pub train: TrainSection,
    pub dataset: DatasetSection,
    pub attack: AttackSection,
    pub probe: ProbeSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub dim: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Perturbation budget, measured in `budget_norm`.
    pub eta: f64,
    pub budget_norm: String,
    pub trials: u64,
    /// Largest acceptable violation rate per check.
    pub max_rate: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            dim: 4096,
            sigma: SIGMA25,
            epsilon: 0.05,
            delta: 1e-3,
            eta: 3.0 * 64.0 * LEVEL,
            budget_norm: "l2".into(),
            trials: 10_000,
            max_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    /// `normal`, `ts-pres`, `ts-def` or `mixed`.
    pub kind: String,
    pub sigma: f64,
    pub iterations: usize,
    /// Second noise level, used by `mixed` only.
    pub sigma2: Option<f64>,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            kind: "normal".into(),
            sigma: SIGMA25,
            iterations: tslab::ts_sampler::DEFAULT_TS_ITERATIONS,
            sigma2: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub dim: usize,
    pub draws: u64,
    pub bins: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            dim: 4096,
            draws: 2000,
            bins: tslab::ts_sampler::DEFAULT_HISTOGRAM_BINS,
        }
    }
}

/// Clean images: PGM files when `images` is nonempty, else the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub images: Vec<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
    pub synthetic_seed: u64,
    /// `all`, `first-half` or `second-half` of the image list.
    pub split: String,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            synthetic_count: 32,
            synthetic_size: 64,
            synthetic_seed: 1,
            split: "all".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub layers: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub epochs: usize,
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiply the learning rate by `lr_decay` every `lr_every` steps (0 = constant).
    pub lr_decay: f64,
    pub lr_every: usize,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub momentum: f64,
    pub validation_patches: usize,
    /// Start from this model file instead of a fresh initialization.
    pub resume: Option<PathBuf>,
    /// Output file name inside the output directory.
    pub model_file: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            layers: 5,
            channels: 16,
            patch_size: 24,
            stride: 12,
            epochs: 4,
            steps_per_epoch: Some(500),
            batch_size: 8,
            lr: 1e-3,
            lr_decay: 0.5,
            lr_every: 500,
            optimizer: "adam".into(),
            momentum: 0.9,
            validation_patches: 32,
            resume: None,
            model_file: "model.tsdn".into(),
        }
    }
}

/// Held-out noisy test set shared by `attack`, `probe` and `eval`: random
/// crops of the corpus with seeded Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    /// Crop size; 0 uses whole images.
    pub patch_size: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            count: 12,
            patch_size: 32,
            sigma: SIGMA25,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub model: PathBuf,
    /// `linf` or `l2`.
    pub norm: String,
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub random_init: bool,
    pub clamp: bool,
    /// Write 16-bit PGMs of every adversarial image.
    pub write_images: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            model: "model.tsdn".into(),
            norm: "linf".into(),
            epsilon: 3.0 * LEVEL,
            alpha: 2.0 * LEVEL,
            steps: 5,
            random_init: false,
            clamp: true,
            write_images: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    /// `radar`, `sphere`, `blend` or `patch`.
    pub mode: String,
    pub model: PathBuf,
    /// Dataset sample to probe.
    pub index: usize,
    pub angular: usize,
    pub radial: usize,
    /// Sphere radius; defaults to `‖v₁‖₂`.
    pub radius: Option<f64>,
    pub lambdas: Vec<f64>,
    pub region_row: usize,
    pub region_col: usize,
    pub region_size: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            mode: "radar".into(),
            model: "model.tsdn".into(),
            index: 0,
            angular: tslab::probe::DEFAULT_ANGULAR,
            radial: tslab::probe::DEFAULT_RADIAL,
            radius: None,
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            region_row: 12,
            region_col: 12,
            region_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Source model: adversarial inputs are crafted on it.
    pub model: PathBuf,
    /// Optional second model for the transferability check.
    pub model_b: Option<PathBuf>,
    /// Loss-increase threshold M.
    pub margin: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            model: "model.tsdn".into(),
            model_b: None,
            margin: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative file paths in the config are relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.images.iter_mut().for_each(fix);
        fix(&mut self.attack.model);
        fix(&mut self.probe.model);
        fix(&mut self.eval.model);
        if let Some(p) = self.eval.model_b.as_mut() {
            fix(p);
        }
        if let Some(p) = self.train.resume.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
    }

    /// The fully resolved config, re-loadable with `--config`.
    pub fn manifest(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = ExperimentConfig::parse("seed = 9\n[train]\nepochs = 2\n[eval]\nmodel_b = \"b.tsdn\"\n").unwrap();
        cfg.typical_set.sigma = 0.1 + 0.2;
        let back = ExperimentConfig::parse(&cfg.manifest()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_usage_errors() {
        assert!(matches!(ExperimentConfig::parse("[train]\nepoch = 2\n"), Err(CliError::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("seed = \"x\""), Err(CliError::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("[train"), Err(CliError::Usage(_))));
    }
}
