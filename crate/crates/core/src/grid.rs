//! Image and noise containers.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use std::ops::Deref;

/// Row-major H×W field of reals with no range constraint: noisy inputs,
/// perturbed probe samples, gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg(format!("grid dimensions must be positive, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::shape(height * width, values.len()));
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn check_shape(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ))
        }
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.check_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(self.with_values(values))
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.check_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(self.with_values(values))
    }

    /// Copy of the rectangle `[row, row+h) × [col, col+w)`.
    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<Grid> {
        if h == 0 || w == 0 || row + h > self.height || col + w > self.width {
            return Err(Error::arg(format!(
                "crop {h}x{w} at ({row},{col}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(h * w);
        for r in row..row + h {
            let start = r * self.width + col;
            values.extend_from_slice(&self.values[start..start + w]);
        }
        Ok(Grid { height: h, width: w, values })
    }

    /// Write `patch` into `self` with its top-left corner at `(row, col)`.
    pub fn paste(&mut self, patch: &Grid, row: usize, col: usize) -> Result<()> {
        if row + patch.height > self.height || col + patch.width > self.width {
            return Err(Error::arg("paste region outside grid"));
        }
        for r in 0..patch.height {
            let dst = (row + r) * self.width + col;
            let src = r * patch.width;
            self.values[dst..dst + patch.width].copy_from_slice(&patch.values[src..src + patch.width]);
        }
        Ok(())
    }

    pub fn clamp_unit(&self) -> PixelGrid {
        let values = self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        PixelGrid(self.with_values(values))
    }

    /// Same shape, new values. Panics on length mismatch.
    pub fn with_values(&self, values: Vec<f64>) -> Grid {
        assert_eq!(values.len(), self.values.len(), "with_values length");
        Grid {
            height: self.height,
            width: self.width,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Grayscale image with every value in `[0, 1]`: clean images `u` and the
/// (clipped) noisy observations `f` that are stored or attacked.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid(Grid);

impl PixelGrid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::try_from_grid(Grid::new(height, width, values)?)
    }

    pub fn try_from_grid(grid: Grid) -> Result<Self> {
        if let Some((i, v)) = grid.values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::arg(format!("pixel {i} = {v} outside [0, 1]")));
        }
        Ok(PixelGrid(grid))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::try_from_grid(Grid::filled(height, width, value))
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn crop(&self, row: usize, col: usize, h: usize, w: usize) -> Result<PixelGrid> {
        Ok(PixelGrid(self.0.crop(row, col, h, w)?))
    }
}

impl Deref for PixelGrid {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

impl AsRef<Grid> for PixelGrid {
    fn as_ref(&self) -> &Grid {
        &self.0
    }
}

/// A realization of i.i.d. `N(0, σ²)` noise, flattened to `dim` values.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    sigma: f64,
    values: Vec<f64>,
}

impl NoiseField {
    pub fn new(sigma: f64, values: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
        }
        if values.is_empty() {
            return Err(Error::arg("noise field must have at least one value"));
        }
        Ok(Self { sigma, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Reshape into an H×W grid.
    pub fn to_grid(&self, height: usize, width: usize) -> Result<Grid> {
        Grid::new(height, width, self.values.clone())
    }
}

/// `dim` i.i.d. draws from `N(0, σ²)`.
pub fn gaussian_noise(dim: usize, sigma: f64, rng: &mut SeededRng) -> Result<NoiseField> {
    if dim == 0 {
        return Err(Error::arg("noise dimension must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    let values = (0..dim).map(|_| sigma * rng.standard_normal()).collect();
    Ok(NoiseField { sigma, values })
}

/// Observation `clip(u + n, 0, 1)`.
pub fn add_noise(clean: &PixelGrid, noise: &NoiseField) -> Result<PixelGrid> {
    if noise.dim() != clean.len() {
        return Err(Error::shape(clean.len(), noise.dim()));
    }
    let values = clean
        .values()
        .iter()
        .zip(noise.values())
        .map(|(u, n)| (u + n).clamp(0.0, 1.0))
        .collect();
    Ok(PixelGrid(clean.as_grid().with_values(values)))
}
