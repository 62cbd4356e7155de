//! Fixtures for the acceptance suite: the trained toy models and the
//! held-out test patches, built with the CLI's default settings.
//!
//! Models: normal and TS-Def trained on corpus half A with seed 1, and a
//! second normal model on half B with seed 2 as the transfer target.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use tslab::attack::Sample;
use tslab::denoiser::{train, Denoiser};
use tslab::ts_sampler::NoiseStrategy;
use tslab_cli::commands::{build_dataset, load_corpus, train_config};
use tslab_cli::config::{CorpusSection, DatasetSection};
use tslab_cli::ExperimentConfig;

pub const SIGMA: f64 = 25.0 / 255.0;

pub struct Trained {
    pub model: Denoiser,
    /// Final-epoch validation PSNR on Gaussian noise.
    pub val_psnr: f64,
    pub noisy_psnr: f64,
    pub elapsed: Duration,
}

pub struct Models {
    pub normal: Trained,
    pub ts_def: Trained,
    pub seed2: Trained,
}

pub fn train_model(kind: &str, split: &str, seed: u64) -> Trained {
    let mut cfg = ExperimentConfig::default();
    cfg.strategy.kind = kind.into();
    cfg.corpus.split = split.into();
    let start = Instant::now();
    let s = &cfg.strategy;
    let strategy = NoiseStrategy::new(s.kind.parse().unwrap(), s.sigma, s.iterations, s.sigma2).unwrap();
    let tc = train_config(&cfg.train, strategy, seed).unwrap();
    let corpus = load_corpus(&cfg.corpus).unwrap();
    let (model, hist) = train(&tc, &corpus).unwrap();
    Trained {
        model,
        val_psnr: *hist.val_psnr.last().unwrap(),
        noisy_psnr: hist.noisy_psnr,
        elapsed: start.elapsed(),
    }
}

/// Trained once per process on first use.
pub fn models() -> &'static Models {
    static MODELS: OnceLock<Models> = OnceLock::new();
    MODELS.get_or_init(|| Models {
        normal: train_model("normal", "first-half", 1),
        ts_def: train_model("ts-def", "first-half", 1),
        seed2: train_model("normal", "second-half", 2),
    })
}

/// Held-out noisy patches from a corpus seed never used for training.
pub fn test_set(count: usize, patch_size: usize) -> Vec<Sample> {
    let corpus = CorpusSection {
        synthetic_count: 16,
        synthetic_seed: 99,
        ..CorpusSection::default()
    };
    let data = DatasetSection {
        count,
        patch_size,
        sigma: SIGMA,
        seed: 7,
    };
    build_dataset(&load_corpus(&corpus).unwrap(), &data).unwrap()
}
