//! Vector norms and small orthonormal bases.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::Linf => "linf",
        })
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "linf" | "l_inf" | "inf" => Ok(NormKind::Linf),
            other => Err(Error::arg(format!("unknown norm {other:?}"))),
        }
    }
}

/// Sign with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn norm(x: &[f64], kind: NormKind) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::arg("norm of an empty vector"));
    }
    Ok(match kind {
        NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => norm_sq(x).sqrt(),
        NormKind::Linf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

/// Orthonormal vectors `e₁ … e_k` (k ≤ 3) of a common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    /// `Σ coeffs[i]·e_i`.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.vectors.len());
        let mut out = vec![0.0; self.dim];
        for (c, e) in coeffs.iter().zip(&self.vectors) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += c * v;
            }
        }
        out
    }
}

const RANK_TOL: f64 = 1e-12;

/// Modified Gram–Schmidt with one re-orthogonalization pass.
///
/// `e₁ = raw[0]/‖raw[0]‖₂`; each later vector has its projections onto the
/// previous basis vectors removed twice before normalizing. A residual
/// whose norm falls below `1e-12` (absolute, or relative to the input
/// vector's norm) is reported as a degeneracy.
pub fn gram_schmidt(raw: &[&[f64]]) -> Result<SubspaceBasis> {
    if raw.is_empty() || raw.len() > 3 {
        return Err(Error::arg(format!("gram_schmidt takes 1 to 3 vectors, got {}", raw.len())));
    }
    let dim = raw[0].len();
    if dim == 0 {
        return Err(Error::arg("gram_schmidt on empty vectors"));
    }
    if let Some(v) = raw.iter().find(|v| v.len() != dim) {
        return Err(Error::shape(dim, v.len()));
    }

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for (k, v) in raw.iter().enumerate() {
        let input_norm = norm_sq(v).sqrt();
        let mut w = v.to_vec();
        for _pass in 0..2 {
            for e in &basis {
                let c = dot(&w, e);
                for (wi, ei) in w.iter_mut().zip(e) {
                    *wi -= c * ei;
                }
            }
        }
        let r = norm_sq(&w).sqrt();
        if r < RANK_TOL || r < RANK_TOL * input_norm {
            return Err(Error::Degenerate(format!(
                "vector {k} is linearly dependent on the previous ones (residual {r:e})"
            )));
        }
        w.iter_mut().for_each(|x| *x /= r);
        basis.push(w);
    }
    Ok(SubspaceBasis { dim, vectors: basis })
}
