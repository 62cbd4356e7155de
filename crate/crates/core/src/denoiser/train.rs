//! Minibatch training over patches of a clean corpus.

use super::{Arch, Denoiser, Gradients};
use crate::error::{Error, Result};
use crate::grid::{add_noise, gaussian_noise, PixelGrid};
use crate::metrics::{psnr, MAX_I};
use crate::rng::SeededRng;
use crate::ts_sampler::NoiseStrategy;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Learning rate as a function of the global step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `base · factor^(step / every)`.
    Step { base: f64, factor: f64, every: usize },
}

impl LrSchedule {
    pub fn rate(&self, step: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Step { base, factor, every } => base * factor.powi((step / every.max(1)) as i32),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub arch: Arch,
    pub strategy: NoiseStrategy,
    pub patch_size: usize,
    pub stride: usize,
    pub epochs: usize,
    /// Optimizer steps per epoch; `None` means one pass over the training patches.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub optimizer: Optimizer,
    /// Patches held out (with fixed Gaussian noise) for validation PSNR.
    pub validation_patches: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(strategy: NoiseStrategy, seed: u64) -> Self {
        Self {
            arch: Arch::default(),
            strategy,
            patch_size: 40,
            stride: 20,
            epochs: 1,
            steps_per_epoch: None,
            batch_size: 8,
            lr: LrSchedule::Constant(1e-3),
            optimizer: Optimizer::adam(),
            validation_patches: 16,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 8 {
            return Err(Error::arg(format!("patch size must be at least 8, got {}", self.patch_size)));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        if self.stride == 0 || self.batch_size == 0 {
            return Err(Error::arg("stride and batch size must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::arg("steps per epoch must be positive"));
        }
        let lr_ok = match self.lr {
            LrSchedule::Constant(lr) => lr > 0.0 && lr.is_finite(),
            LrSchedule::Step { base, factor, .. } => base > 0.0 && base.is_finite() && factor > 0.0,
        };
        if !lr_ok {
            return Err(Error::arg("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    /// Mean validation PSNR of the denoised patches after each epoch.
    pub val_psnr: Vec<f64>,
    /// Mean PSNR of the noisy validation patches (fixed across epochs).
    pub noisy_psnr: f64,
    /// Batch loss at every optimizer step.
    pub step_loss: Vec<f64>,
}

/// Every `size`×`size` window at multiples of `stride`, per image.
pub fn extract_patches(corpus: &[PixelGrid], size: usize, stride: usize) -> Result<Vec<PixelGrid>> {
    let mut out = Vec::new();
    for img in corpus {
        if img.height() < size || img.width() < size {
            continue;
        }
        for r in (0..=img.height() - size).step_by(stride) {
            for c in (0..=img.width() - size).step_by(stride) {
                out.push(img.crop(r, c, size, size)?);
            }
        }
    }
    Ok(out)
}

struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptState {
    fn step(&mut self, model: &mut Denoiser, grads: &Gradients, opt: Optimizer, lr: f64) {
        let g = grads.flatten();
        self.t += 1;
        for (i, &gi) in g.iter().enumerate() {
            let delta = match opt {
                Optimizer::SgdMomentum { momentum } => {
                    self.m[i] = momentum * self.m[i] + gi;
                    lr * self.m[i]
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * gi;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * gi * gi;
                    let mh = self.m[i] / (1.0 - beta1.powi(self.t));
                    let vh = self.v[i] / (1.0 - beta2.powi(self.t));
                    lr * mh / (vh.sqrt() + eps)
                }
            };
            *model.param_mut(i) -= delta;
        }
    }
}

/// Train a fresh model on patches of `corpus`.
pub fn train(config: &TrainConfig, corpus: &[PixelGrid]) -> Result<(Denoiser, TrainHistory)> {
    train_from(None, config, corpus)
}

/// Continue training `initial` (or a fresh model when `None`). Optimizer
/// state always starts from zero.
pub fn train_from(initial: Option<Denoiser>, config: &TrainConfig, corpus: &[PixelGrid]) -> Result<(Denoiser, TrainHistory)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::arg("training corpus is empty"));
    }
    let mut patches = extract_patches(corpus, config.patch_size, config.stride)?;
    if patches.is_empty() {
        return Err(Error::arg(format!("no image is at least {0}x{0}", config.patch_size)));
    }
    let root = SeededRng::new(config.seed, 0);
    let mut order_rng = root.fork(1);
    let mut noise_rng = root.fork(2);
    let mut val_rng = root.fork(3);
    order_rng.shuffle(&mut patches);

    // Hold out validation patches only when some remain for training.
    let n_val = config.validation_patches.min(patches.len().saturating_sub(1));
    let train_set = patches.split_off(n_val);
    let sigma = config.strategy.sigma;
    let dim = config.patch_size * config.patch_size;
    let validation: Vec<(PixelGrid, PixelGrid)> = patches
        .into_iter()
        .map(|clean| {
            let noise = gaussian_noise(dim, sigma, &mut val_rng)?;
            Ok((add_noise(&clean, &noise)?, clean))
        })
        .collect::<Result<_>>()?;

    let mut model = match initial {
        Some(m) => m,
        None => Denoiser::init(config.arch, config.seed)?,
    };
    model.set_sigma_trained(sigma);
    let mut strategy = config.strategy.clone();
    let n_params = model.param_count();
    let mut state = OptState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut history = TrainHistory {
        noisy_psnr: mean_psnr(validation.iter().map(|(noisy, clean)| psnr(noisy, clean, MAX_I).expect("same patch shape"))),
        ..TrainHistory::default()
    };

    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| train_set.len().div_ceil(config.batch_size));
    let mut cursor = 0;
    let mut perm: Vec<usize> = (0..train_set.len()).collect();
    let mut global_step = 0;
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps {
            let mut batch = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                if cursor == 0 {
                    order_rng.shuffle(&mut perm);
                }
                let clean = &train_set[perm[cursor]];
                cursor = (cursor + 1) % perm.len();
                let noise = strategy.next_noise(dim, &mut noise_rng)?;
                let noisy = add_noise(clean, &noise)?;
                batch.push((noisy.into_grid(), clean.as_grid().clone()));
            }
            let (loss, grads) = model.grad_wrt_params(&batch)?;
            state.step(&mut model, &grads, config.optimizer, config.lr.rate(global_step));
            if !model.is_finite() {
                return Err(Error::Degenerate(format!(
                    "non-finite weights after step {global_step} (epoch {epoch}); lower the learning rate"
                )));
            }
            history.step_loss.push(loss);
            epoch_loss += loss;
            global_step += 1;
        }
        history.epoch_loss.push(epoch_loss / steps as f64);
        history.val_psnr.push(validation_psnr(&model, &validation));
    }
    Ok((model, history))
}

fn validation_psnr(model: &Denoiser, validation: &[(PixelGrid, PixelGrid)]) -> f64 {
    mean_psnr(
        validation
            .iter()
            .map(|(noisy, clean)| psnr(&model.forward(noisy.as_grid()), clean, MAX_I).expect("same patch shape")),
    )
}

fn mean_psnr(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
