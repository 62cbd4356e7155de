//! Typical sets of i.i.d. Gaussian noise and of its bounded perturbations.
//!
//! Densities are handled as natural logs; entropies and typicality radii are
//! reported in bits. The single conversion point is [`LOG2_E`] applied to a
//! per-dimension log-density.
//!
//! For `X ~ N(0, σ²Iₙ)` the per-symbol statistic is
//! `-(1/n) ln f(x) = ½ln(2πσ²) + ‖x‖²/(2nσ²)`, so typicality is a statement
//! about `‖x‖²` alone: the typical set is a thin spherical shell of radius
//! `√(nσ²)`. Perturbations of bounded L2 or L∞ norm move a sample at most a
//! computable distance in log-density, which yields enlarged radii `B₂` and
//! `B∞` whose typical sets still capture the perturbed noise.

use crate::error::{Error, Result};
use crate::grid::NoiseField;
use crate::linalg::{norm_sq, sign, NormKind};
use crate::rng::SeededRng;
use std::f64::consts::{E, LN_2, LOG2_E, PI, TAU};

/// `√(2/π)`, the mean of a standard folded normal.
pub const FOLDED_NORMAL_MEAN: f64 = 0.797_884_560_802_865_4;

/// Parameters of a Gaussian typical set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypicalSetSpec {
    /// Dimension n.
    pub dim: usize,
    /// Noise standard deviation σ.
    pub sigma: f64,
    /// Typicality tolerance ε, in bits.
    pub epsilon: f64,
    /// Target failure probability δ used to size Monte Carlo tolerances.
    pub delta: f64,
}

impl TypicalSetSpec {
    pub fn new(dim: usize, sigma: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let spec = Self {
            dim,
            sigma,
            epsilon,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::arg("typical set dimension must be >= 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::arg(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::arg(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::arg(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.dim as f64
    }

    /// `nσ²`, the squared radius of the typical shell.
    pub fn shell_sq(&self) -> f64 {
        self.n() * self.sigma * self.sigma
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits_unchecked(self.sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    Epsilon,
    B2,
    Binf,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::Epsilon => "epsilon",
            BoundKind::B2 => "B2",
            BoundKind::Binf => "Binf",
        }
    }
}

/// A typicality radius in bits, with the perturbation budget that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationBound {
    pub kind: BoundKind,
    pub value: f64,
    pub budget: Option<f64>,
    pub budget_norm: Option<NormKind>,
}

impl DeviationBound {
    pub fn epsilon(spec: &TypicalSetSpec) -> Self {
        Self {
            kind: BoundKind::Epsilon,
            value: spec.epsilon,
            budget: None,
            budget_norm: None,
        }
    }
}

/// Natural-log density of `N(0, σ²Iₙ)` at `x`.
pub fn log_density(x: &[f64], sigma: f64) -> f64 {
    let n = x.len() as f64;
    -0.5 * n * (TAU * sigma * sigma).ln() - norm_sq(x) / (2.0 * sigma * sigma)
}

pub fn log_pdf(x: &NoiseField) -> f64 {
    log_density(x.values(), x.sigma())
}

fn entropy_bits_unchecked(sigma: f64) -> f64 {
    ((TAU * E).sqrt() * sigma).log2()
}

/// `h(X) = log₂(√(2πe)·σ)` for `X ~ N(0, σ²)`.
pub fn differential_entropy_bits(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    Ok(entropy_bits_unchecked(sigma))
}

/// `-(1/n) ln f(x) - h(X)` in nats, signed. Positive means lower density
/// than typical (larger norm).
pub fn signed_deviation_nats(x: &[f64], sigma: f64) -> f64 {
    let n = x.len() as f64;
    norm_sq(x) / (2.0 * n * sigma * sigma) - 0.5
}

/// `|-(1/n) log₂ f(x) - h(X)|` in bits; `x ∈ A_ε` iff this is `≤ ε`.
pub fn typicality_radius(x: &NoiseField) -> f64 {
    typicality_radius_of(x.values(), x.sigma())
}

pub fn typicality_radius_of(x: &[f64], sigma: f64) -> f64 {
    LOG2_E * signed_deviation_nats(x, sigma).abs()
}

/// Same statistic measured in nats. Membership `≤ ε` here is exactly the
/// squared-norm interval of [`l2_concentration_bounds`].
pub fn typicality_radius_nats(x: &NoiseField) -> f64 {
    signed_deviation_nats(x.values(), x.sigma()).abs()
}

/// `(nσ²(1-2ε), nσ²(1+2ε))`: the squared-L2 interval holding a typical draw.
pub fn l2_concentration_bounds(spec: &TypicalSetSpec) -> (f64, f64) {
    let s = spec.shell_sq();
    (s * (1.0 - 2.0 * spec.epsilon), s * (1.0 + 2.0 * spec.epsilon))
}

/// Squared-norm interval equivalent to `typicality_radius ≤ ε` with ε in bits.
pub fn typical_shell_bits(spec: &TypicalSetSpec) -> (f64, f64) {
    let s = spec.shell_sq();
    let w = 2.0 * spec.epsilon * LN_2;
    (s * (1.0 - w), s * (1.0 + w))
}

/// `(nσ√(2/π) - tol, nσ√(2/π) + tol)` for `‖x‖₁`; `tol` is in L1 units.
pub fn l1_concentration_bounds(spec: &TypicalSetSpec, tol: f64) -> (f64, f64) {
    let c = spec.n() * spec.sigma * FOLDED_NORMAL_MEAN;
    (c - tol, c + tol)
}

/// Chebyshev-sized L1 tolerance: `P(|‖x‖₁ - nσ√(2/π)| ≥ tol) ≤ δ` using
/// `Var|X| = σ²(1 - 2/π)`.
pub fn l1_tolerance(spec: &TypicalSetSpec) -> f64 {
    spec.sigma * (spec.n() * (1.0 - 2.0 / PI) / spec.delta).sqrt()
}

fn check_budget(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("perturbation budget must be positive, got {eta}")))
    }
}

/// Largest log-density drop (nats) from an L2 perturbation of norm ≤ η at a
/// typical sample: `(η² + 2η√(nσ²(1+2ε))) / (2σ²)`.
fn l2_shift_nats(spec: &TypicalSetSpec, eta: f64) -> f64 {
    let r = (spec.shell_sq() * (1.0 + 2.0 * spec.epsilon)).sqrt();
    (eta * eta + 2.0 * eta * r) / (2.0 * spec.sigma * spec.sigma)
}

/// `B₂ = log₂e · (η² + 2η√(nσ²(1+2ε)))/(2nσ²) + ε` bits.
pub fn b2_bound(spec: &TypicalSetSpec, eta: f64) -> Result<DeviationBound> {
    check_budget(eta)?;
    Ok(DeviationBound {
        kind: BoundKind::B2,
        value: LOG2_E * l2_shift_nats(spec, eta) / spec.n() + spec.epsilon,
        budget: Some(eta),
        budget_norm: Some(NormKind::L2),
    })
}

/// `B∞ = log₂e · (η²/(2σ²) + √(2/π)·η/σ) + (1 + 1/(2nσ²))·ε` bits.
///
/// The ε term keeps the merged form, combining the typicality tolerance
/// and the L1 concentration slack into one coefficient.
pub fn binf_bound(spec: &TypicalSetSpec, eta: f64) -> Result<DeviationBound> {
    check_budget(eta)?;
    let s2 = spec.sigma * spec.sigma;
    let shift = eta * eta / (2.0 * s2) + FOLDED_NORMAL_MEAN * eta / spec.sigma;
    Ok(DeviationBound {
        kind: BoundKind::Binf,
        value: LOG2_E * shift + (1.0 + 1.0 / (2.0 * spec.shell_sq())) * spec.epsilon,
        budget: Some(eta),
        budget_norm: Some(NormKind::Linf),
    })
}

/// log₂ of the volume bounds of the typical set with radius `r` bits:
/// `hi = n(h + r)`, `lo = log₂(1 - r) + n(h - r)`. `lo` is `-∞` for `r ≥ 1`.
pub fn log2_volume_bounds(radius: f64, spec: &TypicalSetSpec) -> (f64, f64) {
    let n = spec.n();
    let h = spec.entropy_bits();
    let hi = n * (h + radius);
    let lo = if radius < 1.0 {
        (1.0 - radius).log2() + n * (h - radius)
    } else {
        f64::NEG_INFINITY
    };
    (lo, hi)
}

/// `sign(x)·η` elementwise: the maximizer of `‖x + ξ‖₂²` over `‖ξ‖∞ ≤ η`.
pub fn worst_case_linf_shift(x: &[f64], eta: f64) -> Vec<f64> {
    x.iter().map(|&v| sign(v) * eta).collect()
}

/// Interval (nats) holding `ln f(x+ξ) - ln f(x)` for typical `x` and
/// `‖ξ‖ ≤ η` in the given norm.
///
/// L2: `(-(η² + 2ηR)/(2σ²), -(η² - 2ηR)/(2σ²))` with `R = √(nσ²(1+2ε))`.
/// L∞: `(-(nη² + 2ηS)/(2σ²), -(nη² - 2ηS)/(2σ²))` with
/// `S = nσ√(2/π) + tol` and `tol` from [`l1_tolerance`].
pub fn logpdf_shift_bounds(spec: &TypicalSetSpec, eta: f64, budget_norm: NormKind) -> Result<(f64, f64)> {
    check_budget(eta)?;
    let two_s2 = 2.0 * spec.sigma * spec.sigma;
    match budget_norm {
        NormKind::L2 => {
            let r = (spec.shell_sq() * (1.0 + 2.0 * spec.epsilon)).sqrt();
            Ok((-(eta * eta + 2.0 * eta * r) / two_s2, -(eta * eta - 2.0 * eta * r) / two_s2))
        }
        NormKind::Linf => {
            let n = spec.n();
            let s = n * spec.sigma * FOLDED_NORMAL_MEAN + l1_tolerance(spec);
            Ok((-(n * eta * eta + 2.0 * eta * s) / two_s2, -(n * eta * eta - 2.0 * eta * s) / two_s2))
        }
        NormKind::L1 => Err(Error::arg("log-density shift bounds are defined for L2 and Linf budgets")),
    }
}

/// Outcome of one Monte Carlo check.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifierReport {
    pub bound_tested: String,
    pub trials: u64,
    pub violations: u64,
    pub spec: TypicalSetSpec,
    pub eta: f64,
    pub budget_norm: NormKind,
    /// Value of the bound being tested (interval endpoints or radius).
    pub bound_value: String,
}

impl VerifierReport {
    pub fn empirical_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.violations as f64 / self.trials as f64
        }
    }

    pub fn passes(&self, max_rate: f64) -> bool {
        self.empirical_rate() <= max_rate
    }
}

/// Reports for the four checks run by [`monte_carlo_verify`].
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    /// Clean draws inside the squared-L2 interval.
    pub l2_interval: VerifierReport,
    /// Clean draws inside the L1 interval.
    pub l1_interval: VerifierReport,
    /// Log-density shifts of perturbed draws inside the shift interval.
    pub logpdf_shift: VerifierReport,
    /// Perturbed draws inside the enlarged typical set (B₂ or B∞).
    pub perturbed_membership: VerifierReport,
}

impl MonteCarloReport {
    pub fn reports(&self) -> [&VerifierReport; 4] {
        [&self.l2_interval, &self.l1_interval, &self.logpdf_shift, &self.perturbed_membership]
    }
}

/// Perturbations applied to each clean draw: the worst case for the budget,
/// its mirror image, and one random feasible perturbation.
fn perturbations(x: &[f64], eta: f64, budget_norm: NormKind, rng: &mut SeededRng) -> [Vec<f64>; 3] {
    match budget_norm {
        NormKind::Linf => {
            let worst = worst_case_linf_shift(x, eta);
            let mirror = worst.iter().map(|v| -v).collect();
            let random = x.iter().map(|_| rng.uniform_range(-eta, eta)).collect();
            [worst, mirror, random]
        }
        _ => {
            let nx = norm_sq(x).sqrt();
            let worst: Vec<f64> = x.iter().map(|v| eta * v / nx).collect();
            let mirror = worst.iter().map(|v| -v).collect();
            let dir: Vec<f64> = x.iter().map(|_| rng.standard_normal()).collect();
            let nd = norm_sq(&dir).sqrt();
            let random = dir.iter().map(|v| eta * v / nd).collect();
            [worst, mirror, random]
        }
    }
}

/// Empirically test the concentration and perturbation bounds.
///
/// Each trial draws a fresh `N(0, σ²Iₙ)` field from its own forked stream
/// (so trial `t` is reproducible independently of the others), checks the
/// clean L2 and L1 intervals, then applies three perturbations within the
/// budget and checks the log-density shift interval and membership in the
/// enlarged typical set. Rates are reported; nothing is asserted here.
pub fn monte_carlo_verify(
    spec: &TypicalSetSpec,
    eta: f64,
    budget_norm: NormKind,
    trials: u64,
    rng: &SeededRng,
) -> Result<MonteCarloReport> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::arg("monte_carlo_verify needs at least one trial"));
    }
    let bound = match budget_norm {
        NormKind::L2 => b2_bound(spec, eta)?,
        NormKind::Linf => binf_bound(spec, eta)?,
        NormKind::L1 => return Err(Error::arg("perturbation budget must be L2 or Linf")),
    };
    let (l2_lo, l2_hi) = l2_concentration_bounds(spec);
    let tol = l1_tolerance(spec);
    let (l1_lo, l1_hi) = l1_concentration_bounds(spec, tol);
    let (sh_lo, sh_hi) = logpdf_shift_bounds(spec, eta, budget_norm)?;

    let mut v = [0u64; 4];
    let mut perturbed_checks = 0u64;
    let mut xi_sum = vec![0.0; spec.dim];
    for t in 0..trials {
        let mut trial_rng = rng.fork(t);
        let x: Vec<f64> = (0..spec.dim).map(|_| spec.sigma * trial_rng.standard_normal()).collect();
        let sq = norm_sq(&x);
        if !(l2_lo < sq && sq < l2_hi) {
            v[0] += 1;
        }
        let l1: f64 = x.iter().map(|a| a.abs()).sum();
        if !(l1_lo < l1 && l1 < l1_hi) {
            v[1] += 1;
        }
        let base = log_density(&x, spec.sigma);
        for xi in perturbations(&x, eta, budget_norm, &mut trial_rng) {
            for ((s, a), b) in xi_sum.iter_mut().zip(&x).zip(&xi) {
                *s = a + b;
            }
            let shift = log_density(&xi_sum, spec.sigma) - base;
            if !(sh_lo <= shift && shift <= sh_hi) {
                v[2] += 1;
            }
            if typicality_radius_of(&xi_sum, spec.sigma) > bound.value {
                v[3] += 1;
            }
            perturbed_checks += 1;
        }
    }

    let report = |name: &str, trials: u64, violations: u64, value: String| VerifierReport {
        bound_tested: name.to_string(),
        trials,
        violations,
        spec: *spec,
        eta,
        budget_norm,
        bound_value: value,
    };
    Ok(MonteCarloReport {
        l2_interval: report("l2_interval", trials, v[0], format!("[{l2_lo};{l2_hi}]")),
        l1_interval: report("l1_interval", trials, v[1], format!("[{l1_lo};{l1_hi}]")),
        logpdf_shift: report("logpdf_shift", perturbed_checks, v[2], format!("[{sh_lo};{sh_hi}]")),
        perturbed_membership: report(
            &format!("membership_{}", bound.kind.name()),
            perturbed_checks,
            v[3],
            format!("{}", bound.value),
        ),
    })
}
