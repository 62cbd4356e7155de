//! Image quality metrics and the transferability condition.

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Peak value of unit-range images.
pub const MAX_I: f64 = 1.0;

/// `10·log10(max_i² / MSE)`; `+∞` when the inputs are identical.
pub fn psnr(a: &Grid, b: &Grid, max_i: f64) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, max_i))
}

pub fn psnr_from_mse(mse: f64, max_i: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_i * max_i / mse).log10()
    }
}

pub fn mse(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_shape(b)?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// Mean absolute error on the 0–255 scale.
pub fn mae(a: &Grid, b: &Grid) -> Result<f64> {
    a.check_shape(b)?;
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(255.0 * s / a.len() as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5).
pub fn ssim(a: &Grid, b: &Grid, max_i: f64) -> Result<f64> {
    a.check_shape(b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::arg(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    if a.values() == b.values() {
        return Ok(1.0);
    }
    let c1 = (SSIM_K1 * max_i).powi(2);
    let c2 = (SSIM_K2 * max_i).powi(2);
    let g = gaussian_window();
    let (h, w) = (a.height(), a.width());
    let (win_h, win_w, off_h, off_w) = (SSIM_WINDOW, SSIM_WINDOW, 0, 0);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - win_h {
        for c0 in 0..=w - win_w {
            let (mut wsum, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win_h {
                for j in 0..win_w {
                    let k = g[i + off_h] * g[j + off_w];
                    let x = a.get(r0 + i, c0 + j);
                    let y = b.get(r0 + i, c0 + j);
                    wsum += k;
                    ma += k * x;
                    mb += k * y;
                    saa += k * x * x;
                    sbb += k * y * y;
                    sab += k * x * y;
                }
            }
            ma /= wsum;
            mb /= wsum;
            let va = saa / wsum - ma * ma;
            let vb = sbb / wsum - mb * mb;
            let cov = sab / wsum - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR, SSIM and MAE of an estimate against its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
}

impl MetricReport {
    pub fn compute(estimate: &Grid, reference: &Grid) -> Result<Self> {
        Ok(Self {
            psnr: psnr(estimate, reference, MAX_I)?,
            ssim: ssim(estimate, reference, MAX_I)?,
            mae: mae(estimate, reference)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transferability {
    Transferable,
    NotTransferable,
    /// The source model does not denoise the benign input, so the
    /// adversarial condition is undefined for this sample.
    AttackFailed,
}

/// MSE losses of one model's output on the benign input `x` and on the
/// adversarial input `x'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelLosses {
    pub on_input: f64,
    pub on_adversarial: f64,
}

impl ModelLosses {
    pub fn measure(model: &Denoiser, clean: &Grid, noisy: &Grid, adv: &Grid) -> Result<Self> {
        Ok(Self {
            on_input: mse(&model.forward(noisy), clean)?,
            on_adversarial: mse(&model.forward(adv), clean)?,
        })
    }

    fn improves(&self, input_loss: f64) -> bool {
        self.on_input < input_loss
    }

    fn degrades(&self, margin: f64) -> bool {
        self.on_adversarial - self.on_input > margin
    }
}

/// Two-model transferability condition with `L = MSE` from precomputed losses.
/// `input_loss` is `L(x, y)`.
pub fn transfer_condition(input_loss: f64, source: ModelLosses, target: ModelLosses, margin: f64) -> Result<Transferability> {
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::arg(format!("margin must be nonnegative, got {margin}")));
    }
    Ok(if !source.improves(input_loss) {
        Transferability::AttackFailed
    } else if source.degrades(margin) && target.improves(input_loss) && target.degrades(margin) {
        Transferability::Transferable
    } else {
        Transferability::NotTransferable
    })
}

/// Does `adv`, crafted on `source`, satisfy the four transfer conditions
/// (both models improve on `noisy`; both lose more than `margin` on `adv`)?
pub fn transferability_check(
    source: &Denoiser,
    target: &Denoiser,
    clean: &Grid,
    noisy: &Grid,
    adv: &Grid,
    margin: f64,
) -> Result<Transferability> {
    let input_loss = mse(noisy, clean)?;
    let a = ModelLosses::measure(source, clean, noisy, adv)?;
    let b = ModelLosses::measure(target, clean, noisy, adv)?;
    transfer_condition(input_loss, a, b, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn noise_grid(n: usize, sigma: f64, seed: u64) -> Grid {
        let mut rng = SeededRng::new(seed, 0);
        Grid::new(n, n, (0..n * n).map(|_| 0.5 + sigma * rng.standard_normal()).collect()).unwrap()
    }

    #[test]
    fn psnr_of_constant_offset() {
        let a = Grid::filled(16, 16, 0.3);
        let b = Grid::filled(16, 16, 0.4);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((mae(&a, &b).unwrap() - 25.5).abs() < 1e-9);
        assert!(psnr(&a, &Grid::zeros(16, 8), 1.0).is_err());
        assert!(mae(&a, &Grid::zeros(16, 8)).is_err());
    }

    #[test]
    fn ssim_identity_and_bounds() {
        let a = noise_grid(24, 0.1, 1);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let b = noise_grid(24, 0.1, 2);
        let s = ssim(&a, &b, 1.0).unwrap();
        assert!(s < 0.5 && s > -1.0, "{s}");
        assert!(ssim(&a, &a.map(|v| v + 1e-3), 1.0).unwrap() < 1.0);
        assert!(ssim(&Grid::zeros(12, 12), &Grid::zeros(12, 13), 1.0).is_err());
        assert!(ssim(&Grid::zeros(10, 10), &Grid::zeros(10, 10), 1.0).is_err());
        let zero_one = ssim(&Grid::zeros(11, 11), &Grid::filled(11, 11, 1.0), 1.0).unwrap();
        // Zero variances: c1 / (1 + c1).
        assert!((zero_one - 1e-4 / (1.0 + 1e-4)).abs() < 1e-15 && zero_one < 0.01);
    }

    #[test]
    fn ssim_matches_direct_formula_on_single_window() {
        // 11×11 images: one window, so SSIM is the closed-form weighted statistic.
        let a = noise_grid(11, 0.2, 3);
        let b = a.map(|v| 0.8 * v + 0.05);
        let s = ssim(&a, &b, 1.0).unwrap();
        // Affine map: means m, 0.8m+0.05; variance scales by 0.64; covariance by 0.8.
        let g = gaussian_window();
        let (mut m, mut q) = (0.0, 0.0);
        for i in 0..11 {
            for j in 0..11 {
                let k = g[i] * g[j];
                m += k * a.get(i, j);
                q += k * a.get(i, j) * a.get(i, j);
            }
        }
        let v = q - m * m;
        let mb = 0.8 * m + 0.05;
        let (c1, c2) = (1e-4, 9e-4);
        let expect = (2.0 * m * mb + c1) * (1.6 * v + c2) / ((m * m + mb * mb + c1) * (1.64 * v + c2));
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
    }

    #[test]
    fn mae_of_gaussian_residual() {
        let sigma = 0.05;
        let a = noise_grid(128, sigma, 4);
        let b = Grid::filled(128, 128, 0.5);
        let expect = sigma * (2.0 / std::f64::consts::PI).sqrt() * 255.0;
        assert!((mae(&a, &b).unwrap() / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn transferability_cases() {
        let good = ModelLosses { on_input: 0.001, on_adversarial: 0.002 };
        let flat = ModelLosses { on_input: 0.001, on_adversarial: 0.001 };
        let worse = ModelLosses { on_input: 0.02, on_adversarial: 0.03 };
        use Transferability::*;
        assert_eq!(transfer_condition(0.01, good, good, 0.0).unwrap(), Transferable);
        assert_eq!(transfer_condition(0.01, good, flat, 0.0).unwrap(), NotTransferable);
        assert_eq!(transfer_condition(0.01, good, worse, 0.0).unwrap(), NotTransferable);
        assert_eq!(transfer_condition(0.01, flat, good, 0.0).unwrap(), NotTransferable);
        assert_eq!(transfer_condition(0.01, worse, good, 0.0).unwrap(), AttackFailed);
        assert_eq!(transfer_condition(0.01, good, good, 0.01).unwrap(), NotTransferable);
        assert!(transfer_condition(0.01, good, good, -1.0).is_err());
    }

    #[test]
    fn unperturbed_input_does_not_transfer() {
        use crate::denoiser::{Arch, Denoiser};
        // Zero-weight model with a bias pulling towards the clean value 0.5 improves the input.
        let mut m = Denoiser::init(Arch { layers: 2, channels: 2 }, 0).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
        }
        m.layers_mut()[1].bias[0] = 0.05;
        let clean = Grid::filled(8, 8, 0.5);
        let noisy = Grid::filled(8, 8, 0.56);
        let t = transferability_check(&m, &m, &clean, &noisy, &noisy, 0.0).unwrap();
        assert_eq!(t, Transferability::NotTransferable);
        let adv = Grid::filled(8, 8, 0.58);
        let t = transferability_check(&m, &m, &clean, &noisy, &adv, 0.0).unwrap();
        assert_eq!(t, Transferability::Transferable);
    }

    #[test]
    fn psnr_monotone_in_mse() {
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let p = psnr_from_mse(k as f64 * 1e-3, 1.0);
            assert!(p < prev);
            prev = p;
        }
    }
}
