//! Seeded synthetic grayscale images: smooth gradients, piecewise-constant
//! shapes with sharp edges, and textured regions. Stands in for natural-image
//! training and test sets.

use crate::error::{Error, Result};
use crate::grid::PixelGrid;
use crate::rng::SeededRng;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusConfig {
    pub count: usize,
    pub size: usize,
    /// Shapes per image, drawn uniformly from `[min_shapes, max_shapes]`.
    pub min_shapes: usize,
    pub max_shapes: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            count: 24,
            size: 64,
            min_shapes: 3,
            max_shapes: 8,
        }
    }
}

enum Shape {
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
    Disk { r: f64, c: f64, radius: f64 },
    /// Half-plane through `(r, c)` with normal angle `angle`.
    Edge { r: f64, c: f64, angle: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, r1, c1 } => y >= r0 && y < r1 && x >= c0 && x < c1,
            Shape::Disk { r, c, radius } => (y - r).powi(2) + (x - c).powi(2) <= radius * radius,
            Shape::Edge { r, c, angle } => (y - r) * angle.sin() + (x - c) * angle.cos() >= 0.0,
        }
    }
}

enum Fill {
    Flat(f64),
    Grating { base: f64, amp: f64, freq: f64, angle: f64, phase: f64 },
}

impl Fill {
    fn value(&self, y: f64, x: f64) -> f64 {
        match *self {
            Fill::Flat(v) => v,
            Fill::Grating { base, amp, freq, angle, phase } => {
                base + amp * (freq * (x * angle.cos() + y * angle.sin()) + phase).sin()
            }
        }
    }
}

/// One `size`×`size` synthetic image.
pub fn synthetic_image(size: usize, cfg: &CorpusConfig, rng: &mut SeededRng) -> Result<PixelGrid> {
    if size < 8 {
        return Err(Error::arg(format!("synthetic images must be at least 8x8, got {size}")));
    }
    if cfg.min_shapes > cfg.max_shapes {
        return Err(Error::arg("min_shapes exceeds max_shapes"));
    }
    let s = size as f64;
    // Smooth background: linear ramp plus one low-frequency wave.
    let base = rng.uniform_range(0.2, 0.8);
    let slope = rng.uniform_range(-0.3, 0.3);
    let dir = rng.uniform_range(0.0, 2.0 * PI);
    let wave_amp = rng.uniform_range(0.0, 0.1);
    let wave_freq = rng.uniform_range(0.5, 2.0) * 2.0 * PI / s;
    let wave_phase = rng.uniform_range(0.0, 2.0 * PI);
    let mut values: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 / s - 0.5, (i % size) as f64 / s - 0.5);
            base + slope * (x * dir.cos() + y * dir.sin()) + wave_amp * (wave_freq * s * (x + y) + wave_phase).sin()
        })
        .collect();

    let n_shapes = cfg.min_shapes + rng.below((cfg.max_shapes - cfg.min_shapes + 1) as u64) as usize;
    for _ in 0..n_shapes {
        let shape = match rng.below(3) {
            0 => {
                let (a, b) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
                let (c, d) = (rng.uniform_range(0.0, s), rng.uniform_range(0.0, s));
                Shape::Rect { r0: a.min(b), r1: a.max(b), c0: c.min(d), c1: c.max(d) }
            }
            1 => Shape::Disk {
                r: rng.uniform_range(0.0, s),
                c: rng.uniform_range(0.0, s),
                radius: rng.uniform_range(0.08, 0.35) * s,
            },
            _ => Shape::Edge {
                r: rng.uniform_range(0.0, s),
                c: rng.uniform_range(0.0, s),
                angle: rng.uniform_range(0.0, 2.0 * PI),
            },
        };
        let level = rng.uniform_range(0.05, 0.95);
        let fill = if rng.uniform() < 0.3 {
            Fill::Grating {
                base: level,
                amp: rng.uniform_range(0.03, 0.15),
                freq: rng.uniform_range(0.3, 1.2),
                angle: rng.uniform_range(0.0, PI),
                phase: rng.uniform_range(0.0, 2.0 * PI),
            }
        } else {
            Fill::Flat(level)
        };
        for (i, v) in values.iter_mut().enumerate() {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            if shape.contains(y, x) {
                *v = fill.value(y, x);
            }
        }
    }
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    PixelGrid::new(size, size, values)
}

/// `cfg.count` images; image `i` depends only on `(seed, i)`.
pub fn synthetic_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Vec<PixelGrid>> {
    let root = SeededRng::new(seed, 0xc0);
    (0..cfg.count)
        .map(|i| synthetic_image(cfg.size, cfg, &mut root.fork(i as u64)))
        .collect()
}

/// `count` random `size`×`size` crops drawn uniformly over images and positions.
pub fn random_patches(corpus: &[PixelGrid], size: usize, count: usize, rng: &mut SeededRng) -> Result<Vec<PixelGrid>> {
    let usable: Vec<&PixelGrid> = corpus.iter().filter(|g| g.height() >= size && g.width() >= size).collect();
    if usable.is_empty() {
        return Err(Error::arg(format!("no image in the corpus is at least {size}x{size}")));
    }
    (0..count)
        .map(|_| {
            let img = usable[rng.below(usable.len() as u64) as usize];
            let r = rng.below((img.height() - size + 1) as u64) as usize;
            let c = rng.below((img.width() - size + 1) as u64) as usize;
            img.crop(r, c, size, size)
        })
        .collect()
}
