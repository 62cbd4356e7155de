//! Typical-set analysis of Gaussian denoising noise, TS out-of-distribution
//! noise sampling, and PGD-family attacks and neighborhood probes against a
//! small residual CNN denoiser.

pub mod attack;
pub mod corpus;
pub mod denoiser;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod pgm;
pub mod probe;
pub mod rng;
pub mod ts_sampler;
pub mod typical_set;

pub use error::{Error, Result};
pub use grid::{add_noise, gaussian_noise, Grid, NoiseField, PixelGrid};
pub use linalg::{gram_schmidt, norm, NormKind, SubspaceBasis};
pub use rng::SeededRng;

/// 8-bit intensity step, for writing budgets like `3/255`.
pub const LEVEL: f64 = 1.0 / 255.0;
