//! Neighborhood geometry probes: radar and sphere maps of PSNR degradation
//! around a noisy input, variance-preserving noise blends, adversarial
//! convex paths, and region-restricted attacks.

use crate::attack::{attack, AttackConfig};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::grid::{Grid, NoiseField, PixelGrid};
use crate::linalg::{gram_schmidt, norm_sq, SubspaceBasis};
use crate::metrics::{psnr, MAX_I};
use crate::rng::SeededRng;
use std::f64::consts::PI;
use std::fmt::Write as _;

pub const DEFAULT_ANGULAR: usize = 72;
pub const DEFAULT_RADIAL: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Radar,
    Sphere,
}

/// Scores on an `Nᵢ × Nⱼ` grid. Row `i` is the azimuth `θᵢ = 2πi/Nᵢ`;
/// column `j` is the radius `γⱼ = j/(Nⱼ−1)` (radar) or the elevation
/// `φⱼ = πj/(Nⱼ−1) − π/2` (sphere). Scores are PSNR drops in dB relative to
/// the unperturbed input: positive means the perturbation hurts.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    pub kind: ProbeKind,
    pub thetas: Vec<f64>,
    pub second: Vec<f64>,
    pub scores: Vec<f64>,
    pub basis: SubspaceBasis,
    pub origin: String,
}

impl ProbeGrid {
    pub fn angular(&self) -> usize {
        self.thetas.len()
    }

    pub fn radial(&self) -> usize {
        self.second.len()
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.radial() + j]
    }

    /// Azimuth index with the largest score in column `j` (first on ties).
    pub fn argmax_theta(&self, j: usize) -> usize {
        (0..self.angular()).fold(0, |best, i| if self.score(i, j) > self.score(best, j) { i } else { best })
    }

    /// Cells `(i, j)` with the overall largest score (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let k = (0..self.scores.len()).fold(0, |b, k| if self.scores[k] > self.scores[b] { k } else { b });
        (k / self.radial(), k % self.radial())
    }

    /// `theta,gamma_or_phi,score` rows in grid order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,gamma_or_phi,score\n");
        for (i, t) in self.thetas.iter().enumerate() {
            for (j, g) in self.second.iter().enumerate() {
                writeln!(out, "{t},{g},{}", self.score(i, j)).unwrap();
            }
        }
        out
    }
}

fn check_grid(ni: usize, nj: usize) -> Result<()> {
    if ni == 0 || nj < 2 {
        return Err(Error::arg(format!("probe grid needs Ni >= 1 and Nj >= 2, got {ni}x{nj}")));
    }
    Ok(())
}

fn thetas(ni: usize) -> Vec<f64> {
    (0..ni).map(|i| 2.0 * PI * i as f64 / ni as f64).collect()
}

/// Evaluate `PSNR(f(center), u) − PSNR(f(center + d), u)` for each direction.
fn degradation(model: &Denoiser, u: &PixelGrid, center: &Grid, reference: f64, d: &[f64]) -> Result<f64> {
    let s: Vec<f64> = center.values().iter().zip(d).map(|(c, v)| c + v).collect();
    let out = model.forward(&center.with_values(s));
    Ok(reference - psnr(&out, u, MAX_I)?)
}

fn center_of(u: &PixelGrid, n: &[f64]) -> Result<Grid> {
    if n.len() != u.len() {
        return Err(Error::shape(u.len(), n.len()));
    }
    Ok(u.with_values(u.values().iter().zip(n).map(|(a, b)| a + b).collect()))
}

/// Radar map `s = (e₁cosθ + e₂sinθ)·γ‖v‖₂ + n + u` with `e₁ = n/‖n‖₂` and
/// `e₂` the unit component of `v` orthogonal to `n`.
pub fn radar_probe(model: &Denoiser, u: &PixelGrid, n: &[f64], v: &[f64], ni: usize, nj: usize) -> Result<ProbeGrid> {
    check_grid(ni, nj)?;
    let basis = gram_schmidt(&[n, v])?;
    let center = center_of(u, n)?;
    let reference = psnr(&model.forward(&center), u, MAX_I)?;
    let vnorm = norm_sq(v).sqrt();
    let thetas = thetas(ni);
    let gammas: Vec<f64> = (0..nj).map(|j| j as f64 / (nj - 1) as f64).collect();
    let mut scores = Vec::with_capacity(ni * nj);
    for &t in &thetas {
        for &g in &gammas {
            let r = g * vnorm;
            let d = basis.combine(&[r * t.cos(), r * t.sin()]);
            scores.push(degradation(model, u, &center, reference, &d)?);
        }
    }
    Ok(ProbeGrid {
        kind: ProbeKind::Radar,
        thetas,
        second: gammas,
        scores,
        basis,
        origin: "u+n".into(),
    })
}

/// Sphere map `s = (e₁cosφcosθ + e₂cosφsinθ + e₃sinφ)·radius + n_k + u`
/// with `(e₁, e₂, e₃)` the Gram–Schmidt basis of `(n₁, n₂, v₁)`.
#[allow(clippy::too_many_arguments)]
pub fn sphere_probe(
    model: &Denoiser,
    u: &PixelGrid,
    n_k: &[f64],
    basis_inputs: [&[f64]; 3],
    ni: usize,
    nj: usize,
    radius: f64,
) -> Result<ProbeGrid> {
    check_grid(ni, nj)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::arg(format!("sphere radius must be nonnegative, got {radius}")));
    }
    let basis = gram_schmidt(&basis_inputs)?;
    let center = center_of(u, n_k)?;
    let reference = psnr(&model.forward(&center), u, MAX_I)?;
    let thetas = thetas(ni);
    let phis: Vec<f64> = (0..nj).map(|j| PI * j as f64 / (nj - 1) as f64 - PI / 2.0).collect();
    let mut scores = Vec::with_capacity(ni * nj);
    for &t in &thetas {
        for &p in &phis {
            let d = basis.combine(&[radius * p.cos() * t.cos(), radius * p.cos() * t.sin(), radius * p.sin()]);
            scores.push(degradation(model, u, &center, reference, &d)?);
        }
    }
    Ok(ProbeGrid {
        kind: ProbeKind::Sphere,
        thetas,
        second: phis,
        scores,
        basis,
        origin: "u+n_k".into(),
    })
}

/// `√λ·n₁ + √(1−λ)·n₂`: unit-variance-preserving mix of independent noises.
pub fn blend_noises(n1: &NoiseField, n2: &NoiseField, lambda: f64) -> Result<NoiseField> {
    check_lambda(lambda)?;
    if n1.dim() != n2.dim() {
        return Err(Error::shape(n1.dim(), n2.dim()));
    }
    if n1.sigma() != n2.sigma() {
        return Err(Error::arg(format!("noise levels differ: {} vs {}", n1.sigma(), n2.sigma())));
    }
    let (a, b) = (lambda.sqrt(), (1.0 - lambda).sqrt());
    let values = n1.values().iter().zip(n2.values()).map(|(x, y)| a * x + b * y).collect();
    NoiseField::new(n1.sigma(), values)
}

/// `u + √λ(a₁−u) + √(1−λ)(a₂−u)`, a point on the path between two
/// adversarial inputs written in noise coordinates. Not clipped.
pub fn blend_adversarials(u: &Grid, a1: &Grid, a2: &Grid, lambda: f64) -> Result<Grid> {
    check_lambda(lambda)?;
    u.check_shape(a1)?;
    u.check_shape(a2)?;
    if lambda == 1.0 {
        return Ok(a1.clone());
    }
    if lambda == 0.0 {
        return Ok(a2.clone());
    }
    let (a, b) = (lambda.sqrt(), (1.0 - lambda).sqrt());
    let values = u
        .values()
        .iter()
        .zip(a1.values().iter().zip(a2.values()))
        .map(|(c, (x, y))| c + a * (x - c) + b * (y - c))
        .collect();
    Ok(u.with_values(values))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    fn check(&self, img: &Grid) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::arg("patch region has zero area"));
        }
        if self.row + self.height > img.height() || self.col + self.width > img.width() {
            return Err(Error::arg(format!(
                "region {}x{} at ({}, {}) exceeds the {}x{} image",
                self.height,
                self.width,
                self.row,
                self.col,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchMethod {
    /// Attack the cropped sub-image alone and splice the result back.
    LocalCraft,
    /// Attack the whole image and keep the perturbation inside the region only.
    CropGlobal,
}

/// Adversarial input whose perturbation is confined to `region`. Pixels
/// outside the region are copied from `noisy` unchanged.
pub fn patch_attack(
    model: &Denoiser,
    clean: &Grid,
    noisy: &Grid,
    region: Region,
    method: PatchMethod,
    cfg: &AttackConfig,
    rng: &mut SeededRng,
) -> Result<Grid> {
    noisy.check_shape(clean)?;
    region.check(noisy)?;
    match method {
        PatchMethod::LocalCraft => {
            let sub_clean = clean.crop(region.row, region.col, region.height, region.width)?;
            let sub_noisy = noisy.crop(region.row, region.col, region.height, region.width)?;
            let sub_adv = attack(model, &sub_clean, &sub_noisy, cfg, rng)?;
            let mut out = noisy.clone();
            out.paste(&sub_adv, region.row, region.col)?;
            Ok(out)
        }
        PatchMethod::CropGlobal => {
            let adv = attack(model, clean, noisy, cfg, rng)?;
            let w = noisy.width();
            let values = (0..noisy.len())
                .map(|k| {
                    if region.contains(k / w, k % w) {
                        adv.values()[k]
                    } else {
                        noisy.values()[k]
                    }
                })
                .collect();
            Ok(noisy.with_values(values))
        }
    }
}

/// PSNR restricted to pixels inside (or outside) `region`.
pub fn region_psnr(a: &Grid, b: &Grid, region: Region, inside: bool) -> Result<f64> {
    a.check_shape(b)?;
    region.check(a)?;
    let w = a.width();
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if region.contains(k / w, k % w) == inside {
            sum += (x - y) * (x - y);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::arg("no pixels on the requested side of the region"));
    }
    Ok(crate::metrics::psnr_from_mse(sum / count as f64, MAX_I))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::Arch;
    use crate::grid::gaussian_noise;

    fn setup() -> (Denoiser, PixelGrid, Vec<f64>, Vec<f64>) {
        let m = Denoiser::init(Arch { layers: 2, channels: 3 }, 4).unwrap();
        let mut rng = SeededRng::new(4, 0);
        let u = PixelGrid::new(12, 12, (0..144).map(|_| rng.uniform_range(0.3, 0.7)).collect()).unwrap();
        let n = gaussian_noise(144, 0.1, &mut rng).unwrap().into_values();
        let v: Vec<f64> = (0..144).map(|_| 0.01 * rng.standard_normal()).collect();
        (m, u, n, v)
    }

    #[test]
    fn radar_origin_column_is_zero() {
        let (m, u, n, v) = setup();
        let g = radar_probe(&m, &u, &n, &v, 8, 4).unwrap();
        assert_eq!(g.scores.len(), 32);
        for i in 0..8 {
            assert_eq!(g.score(i, 0), 0.0);
        }
        assert_eq!(g.second, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let csv = g.to_csv();
        assert!(csv.starts_with("theta,gamma_or_phi,score\n0,0,0\n"));
        assert_eq!(csv.lines().count(), 33);
    }

    #[test]
    fn radar_rejects_parallel_perturbation() {
        let (m, u, n, _) = setup();
        let v: Vec<f64> = n.iter().map(|x| -2.0 * x).collect();
        assert!(matches!(radar_probe(&m, &u, &n, &v, 4, 3), Err(Error::Degenerate(_))));
        assert!(radar_probe(&m, &u, &n, &n, 4, 1).is_err());
    }

    #[test]
    fn sphere_zero_radius_and_purity() {
        let (m, u, n, v) = setup();
        let mut rng = SeededRng::new(5, 0);
        let n2 = gaussian_noise(144, 0.1, &mut rng).unwrap().into_values();
        let g = sphere_probe(&m, &u, &n, [&n, &n2, &v], 6, 5, 0.0).unwrap();
        assert!(g.scores.iter().all(|s| *s == 0.0));
        let a = sphere_probe(&m, &u, &n, [&n, &n2, &v], 6, 5, 0.5).unwrap();
        let b = sphere_probe(&m, &u, &n, [&n, &n2, &v], 6, 5, 0.5).unwrap();
        assert_eq!(a, b);
        assert!((a.second[0] + PI / 2.0).abs() < 1e-15 && (a.second[4] - PI / 2.0).abs() < 1e-15);
        assert!(sphere_probe(&m, &u, &n, [&n, &n, &v], 6, 5, 0.5).is_err());
    }

    #[test]
    fn noise_blend_endpoints_and_variance() {
        let mut rng = SeededRng::new(6, 0);
        let sigma = 0.1;
        let n1 = gaussian_noise(1000, sigma, &mut rng).unwrap();
        let n2 = gaussian_noise(1000, sigma, &mut rng).unwrap();
        assert_eq!(blend_noises(&n1, &n2, 1.0).unwrap(), n1);
        assert_eq!(blend_noises(&n1, &n2, 0.0).unwrap(), n2);
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            // 10³ trials of 64-pixel fields; relative sd of the estimate ≈ 0.56%.
            let mut acc = 0.0;
            for _ in 0..1000 {
                let a = gaussian_noise(64, sigma, &mut rng).unwrap();
                let b = gaussian_noise(64, sigma, &mut rng).unwrap();
                acc += norm_sq(blend_noises(&a, &b, lambda).unwrap().values());
            }
            let var = acc / 64000.0;
            assert!((var / (sigma * sigma) - 1.0).abs() < 0.03, "lambda {lambda}: {var}");
        }
        let short = gaussian_noise(10, sigma, &mut rng).unwrap();
        assert!(blend_noises(&n1, &short, 0.5).is_err());
        assert!(blend_noises(&n1, &n2, 1.5).is_err());
    }

    #[test]
    fn adversarial_blend_endpoints() {
        let u = Grid::filled(4, 4, 0.5);
        let a1 = Grid::filled(4, 4, 0.6);
        let a2 = Grid::filled(4, 4, 0.3);
        assert_eq!(blend_adversarials(&u, &a1, &a2, 1.0).unwrap(), a1);
        assert_eq!(blend_adversarials(&u, &a1, &a2, 0.0).unwrap(), a2);
        let mid = blend_adversarials(&u, &a1, &a2, 0.5).unwrap();
        let h = 0.5f64.sqrt();
        assert!((mid.values()[0] - (0.5 + h * 0.1 - h * 0.2)).abs() < 1e-15);
        assert!(blend_adversarials(&u, &a1, &Grid::zeros(4, 3), 0.5).is_err());
    }

    #[test]
    fn patch_attacks_leave_outside_untouched() {
        let (m, u, n, _) = setup();
        let noisy = crate::add_noise(&u, &NoiseField::new(0.1, n).unwrap()).unwrap();
        let region = Region { row: 2, col: 3, height: 5, width: 6 };
        let cfg = AttackConfig::default();
        for method in [PatchMethod::LocalCraft, PatchMethod::CropGlobal] {
            let mut rng = SeededRng::new(0, 0);
            let adv = patch_attack(&m, &u, &noisy, region, method, &cfg, &mut rng).unwrap();
            for k in 0..144 {
                if !region.contains(k / 12, k % 12) {
                    assert_eq!(adv.values()[k].to_bits(), noisy.values()[k].to_bits());
                }
            }
        }
        let full = Region { row: 0, col: 0, height: 12, width: 12 };
        let mut r1 = SeededRng::new(0, 0);
        let mut r2 = SeededRng::new(0, 0);
        assert_eq!(
            patch_attack(&m, &u, &noisy, full, PatchMethod::CropGlobal, &cfg, &mut r1).unwrap(),
            attack(&m, &u, &noisy, &cfg, &mut r2).unwrap()
        );
        let mut rng = SeededRng::new(0, 0);
        let empty = Region { row: 0, col: 0, height: 0, width: 3 };
        assert!(patch_attack(&m, &u, &noisy, empty, PatchMethod::LocalCraft, &cfg, &mut rng).is_err());
        let out = Region { row: 8, col: 8, height: 5, width: 2 };
        assert!(patch_attack(&m, &u, &noisy, out, PatchMethod::CropGlobal, &cfg, &mut rng).is_err());
    }
}
