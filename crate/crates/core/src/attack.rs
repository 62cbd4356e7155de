//! Denoising-PGD: projected gradient ascent on `MSE(f(x), clean)` inside a
//! norm ball around the noisy observation.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::grid::{Grid, PixelGrid};
use crate::linalg::{norm_sq, sign, NormKind};
use crate::metrics::MetricReport;
use crate::rng::SeededRng;
use crate::LEVEL;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    pub norm: NormKind,
    /// L∞: per-pixel bound. L2: per-pixel scale; the ball radius is `ε·√n`.
    pub epsilon: f64,
    /// L∞: per-pixel step. L2: the step length is `α·√n`.
    pub alpha: f64,
    pub steps: usize,
    pub random_init: bool,
    pub clamp_valid_range: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            norm: NormKind::Linf,
            epsilon: 3.0 * LEVEL,
            alpha: 2.0 * LEVEL,
            steps: 5,
            random_init: false,
            clamp_valid_range: true,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::arg(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.norm == NormKind::L1 {
            return Err(Error::Unsupported("L1 attacks".into()));
        }
        Ok(())
    }

    /// L2 ball radius `ε·√n` for `n` pixels.
    pub fn l2_radius(&self, n: usize) -> f64 {
        self.epsilon * (n as f64).sqrt()
    }
}

fn check_inputs(clean: &Grid, noisy: &Grid, cfg: &AttackConfig, expect: NormKind) -> Result<()> {
    cfg.validate()?;
    if cfg.norm != expect {
        return Err(Error::arg(format!("attack expects a {expect} budget, config has {}", cfg.norm)));
    }
    noisy.check_shape(clean)
}

/// Project onto `{x : |x - noisy|∞ ≤ ε}`, then optionally onto `[0,1]ⁿ`.
fn project_linf(x: &mut [f64], noisy: &[f64], eps: f64, clamp: bool) {
    for (v, &c) in x.iter_mut().zip(noisy) {
        *v = v.clamp(c - eps, c + eps);
        if clamp {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Project onto `{x : ‖x - noisy‖₂ ≤ ρ}`, then optionally onto `[0,1]ⁿ`.
/// Clamping towards `noisy ∈ [0,1]ⁿ` only shrinks the displacement, so the
/// result stays feasible.
fn project_l2(x: &mut [f64], noisy: &[f64], rho: f64, clamp: bool) {
    let mut d: Vec<f64> = x.iter().zip(noisy).map(|(a, b)| a - b).collect();
    let len = norm_sq(&d).sqrt();
    if len > rho {
        let s = rho / len;
        d.iter_mut().for_each(|v| *v *= s);
    }
    for ((v, c), dv) in x.iter_mut().zip(noisy).zip(&d) {
        *v = c + dv;
        if clamp {
            *v = v.clamp(0.0, 1.0);
        }
    }
    // Rounding in c + dv can push the norm a hair past ρ; pull back once.
    let len = x.iter().zip(noisy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if len > rho {
        let s = rho / len * (1.0 - 1e-15);
        for (v, c) in x.iter_mut().zip(noisy) {
            *v = c + (*v - c) * s;
        }
    }
}

fn random_start(noisy: &Grid, cfg: &AttackConfig, rng: &mut SeededRng) -> Vec<f64> {
    let mut x: Vec<f64> = noisy
        .values()
        .iter()
        .map(|v| v + rng.uniform_range(-cfg.epsilon, cfg.epsilon))
        .collect();
    let rho = cfg.l2_radius(x.len());
    match cfg.norm {
        NormKind::L2 => project_l2(&mut x, noisy.values(), rho, cfg.clamp_valid_range),
        _ => project_linf(&mut x, noisy.values(), cfg.epsilon, cfg.clamp_valid_range),
    }
    x
}

/// L∞ Denoising-PGD: `x ← Π(x + α·sign(∇ₓ MSE(f(x), clean)))` for `T` steps.
pub fn denoising_pgd(model: &Denoiser, clean: &Grid, noisy: &Grid, cfg: &AttackConfig, rng: &mut SeededRng) -> Result<Grid> {
    check_inputs(clean, noisy, cfg, NormKind::Linf)?;
    let mut x = if cfg.random_init {
        random_start(noisy, cfg, rng)
    } else {
        noisy.values().to_vec()
    };
    for _ in 0..cfg.steps {
        let g = model.grad_wrt_input(&noisy.with_values(x.clone()), clean)?;
        for (v, gi) in x.iter_mut().zip(g.values()) {
            *v += cfg.alpha * sign(*gi);
        }
        project_linf(&mut x, noisy.values(), cfg.epsilon, cfg.clamp_valid_range);
    }
    Ok(noisy.with_values(x))
}

/// L2 Denoising-PGD: steps of length `α·√n` along the unit gradient,
/// projected onto the ball of radius `ε·√n`. A zero gradient ends the ascent.
pub fn l2_denoising_pgd(model: &Denoiser, clean: &Grid, noisy: &Grid, cfg: &AttackConfig, rng: &mut SeededRng) -> Result<Grid> {
    check_inputs(clean, noisy, cfg, NormKind::L2)?;
    let n = noisy.len();
    let rho = cfg.l2_radius(n);
    let step = cfg.alpha * (n as f64).sqrt();
    let mut x = if cfg.random_init {
        random_start(noisy, cfg, rng)
    } else {
        noisy.values().to_vec()
    };
    for _ in 0..cfg.steps {
        let g = model.grad_wrt_input(&noisy.with_values(x.clone()), clean)?;
        let len = norm_sq(g.values()).sqrt();
        if len == 0.0 {
            break;
        }
        for (v, gi) in x.iter_mut().zip(g.values()) {
            *v += step * gi / len;
        }
        project_l2(&mut x, noisy.values(), rho, cfg.clamp_valid_range);
    }
    Ok(noisy.with_values(x))
}

/// Dispatch on `cfg.norm`.
pub fn attack(model: &Denoiser, clean: &Grid, noisy: &Grid, cfg: &AttackConfig, rng: &mut SeededRng) -> Result<Grid> {
    match cfg.norm {
        NormKind::L2 => l2_denoising_pgd(model, clean, noisy, cfg, rng),
        _ => denoising_pgd(model, clean, noisy, cfg, rng),
    }
}

/// One attacked image: metrics of the denoised benign and adversarial inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackRow {
    pub id: String,
    pub adversarial: PixelGrid,
    pub before: MetricReport,
    pub after: MetricReport,
    /// `‖adv − noisy‖` in the configured norm.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<AttackRow>,
    pub mean_psnr_before: f64,
    pub mean_psnr_after: f64,
    pub mean_ssim_before: f64,
    pub mean_ssim_after: f64,
}

impl SuiteReport {
    /// Mean PSNR drop caused by the attack (positive = degradation).
    pub fn mean_drop(&self) -> f64 {
        self.mean_psnr_before - self.mean_psnr_after
    }
}

/// A clean image and its noisy observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub clean: PixelGrid,
    pub noisy: PixelGrid,
}

/// Attack every sample. Image `i` uses rng stream `fork(i)` of the config
/// seed, so results do not depend on evaluation order.
pub fn attack_suite(model: &Denoiser, dataset: &[Sample], cfg: &AttackConfig) -> Result<SuiteReport> {
    if dataset.is_empty() {
        return Err(Error::arg("attack suite needs at least one image"));
    }
    cfg.validate()?;
    let root = SeededRng::new(cfg.seed, 0xa77);
    let rows = dataset
        .iter()
        .enumerate()
        .map(|(i, s)| attack_one(model, s, cfg, &mut root.fork(i as u64)).map_err(|e| e.for_item(&s.id)))
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: &dyn Fn(&AttackRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(SuiteReport {
        mean_psnr_before: mean(&|r| r.before.psnr),
        mean_psnr_after: mean(&|r| r.after.psnr),
        mean_ssim_before: mean(&|r| r.before.ssim),
        mean_ssim_after: mean(&|r| r.after.ssim),
        rows,
    })
}

fn attack_one(model: &Denoiser, s: &Sample, cfg: &AttackConfig, rng: &mut SeededRng) -> Result<AttackRow> {
    let adv = attack(model, &s.clean, &s.noisy, cfg, rng)?;
    let before = MetricReport::compute(&model.forward(&s.noisy), &s.clean)?;
    let after = MetricReport::compute(&model.forward(&adv), &s.clean)?;
    let diff = adv.sub(&s.noisy)?;
    let distance = crate::linalg::norm(diff.values(), cfg.norm)?;
    let adversarial = if cfg.clamp_valid_range {
        PixelGrid::try_from_grid(adv)?
    } else {
        adv.clamp_unit()
    };
    Ok(AttackRow {
        id: s.id.clone(),
        adversarial,
        before,
        after,
        distance,
    })
}
