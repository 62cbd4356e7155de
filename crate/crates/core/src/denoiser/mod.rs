//! Residual convolutional denoiser with hand-written backpropagation.
//!
//! Architecture: `depth` 3×3 same-padded convolutions, ReLU after every layer
//! but the last, 1 input and 1 output channel. The network predicts the
//! noise; the denoised image is `clamp(x - prediction, 0, 1)`. Gradients of
//! the clamp are zero where it saturates.

mod conv;
pub mod io;
pub mod train;

use crate::error::{Error, Result};
use crate::grid::{Grid, PixelGrid};
use crate::rng::SeededRng;

pub use io::{load_model, save_model};
pub use train::{extract_patches, train, train_from, LrSchedule, Optimizer, TrainConfig, TrainHistory};

/// Layer count and hidden channel width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    pub layers: usize,
    pub channels: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Self { layers: 5, channels: 16 }
    }
}

/// One 3×3 convolution. Weights are laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    layers: Vec<ConvLayer>,
    residual: bool,
    sigma_trained: f64,
    seed: u64,
}

/// Parameter-shaped gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ConvLayer>,
}

impl Gradients {
    fn zeros_like(model: &Denoiser) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_channels, l.out_channels))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    /// Flattened view, layer by layer, weights before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Activations kept for the backward pass.
struct Trace {
    /// Input to each layer (`acts[0]` is the image itself).
    acts: Vec<Vec<f64>>,
    /// Last-layer output: the predicted noise (or image, when not residual).
    prediction: Vec<f64>,
}

impl Denoiser {
    /// He-normal initialization (`std = √(2 / (9·in))`), zero biases.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        if arch.layers < 2 {
            return Err(Error::arg(format!("denoiser needs at least 2 layers, got {}", arch.layers)));
        }
        if arch.channels == 0 {
            return Err(Error::arg("denoiser channel width must be positive"));
        }
        let mut rng = SeededRng::new(seed, 0x1417);
        let layers = (0..arch.layers)
            .map(|i| {
                let cin = if i == 0 { 1 } else { arch.channels };
                let cout = if i + 1 == arch.layers { 1 } else { arch.channels };
                let std = (2.0 / (9 * cin) as f64).sqrt();
                let mut l = ConvLayer::zeros(cin, cout);
                l.weights.iter_mut().for_each(|w| *w = std * rng.standard_normal());
                l
            })
            .collect();
        Ok(Self {
            layers,
            residual: true,
            sigma_trained: 0.0,
            seed,
        })
    }

    /// Build from explicit layers; checks channel chaining and finiteness.
    pub fn from_layers(layers: Vec<ConvLayer>, residual: bool, sigma_trained: f64, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("denoiser needs at least one layer"));
        }
        if layers[0].in_channels != 1 || layers.last().map(|l| l.out_channels) != Some(1) {
            return Err(Error::arg("first layer must take 1 channel and last layer must emit 1"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::arg(format!("layer {i} emits {} channels but layer {} takes {}",
                    pair[0].out_channels, i + 1, pair[1].in_channels)));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_channels * l.out_channels * 9 || l.bias.len() != l.out_channels {
                return Err(Error::arg(format!("layer {i} has mis-sized parameters")));
            }
        }
        let model = Self {
            layers,
            residual,
            sigma_trained,
            seed,
        };
        if !model.is_finite() {
            return Err(Error::arg("non-finite weights"));
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn sigma_trained(&self) -> f64 {
        self.sigma_trained
    }

    pub fn set_sigma_trained(&mut self, sigma: f64) {
        self.sigma_trained = sigma;
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Flattened parameters, in [`Gradients::flatten`] order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Mutable access to flattened parameter `index`.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn trace(&self, x: &Grid) -> Trace {
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.values().to_vec());
        let last = self.layers.len() - 1;
        let mut prediction = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_channels * hw];
            conv::forward(&acts[i], layer.in_channels, h, w, &layer.weights, &layer.bias, &mut out);
            if i == last {
                prediction = out;
            } else {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                acts.push(out);
            }
        }
        Trace { acts, prediction }
    }

    fn raw_output(&self, x: &Grid, trace: &Trace) -> Vec<f64> {
        if self.residual {
            x.values().iter().zip(&trace.prediction).map(|(a, p)| a - p).collect()
        } else {
            trace.prediction.clone()
        }
    }

    /// Denoised estimate `clamp(x - f(x), 0, 1)`.
    pub fn forward(&self, x: &Grid) -> PixelGrid {
        let t = self.trace(x);
        x.with_values(self.raw_output(x, &t)).clamp_unit()
    }

    /// Backpropagate `∂L/∂(last-layer output)` through the network.
    /// Returns `∂L/∂input` through the network path when requested.
    fn backprop(&self, x: &Grid, trace: &Trace, d_pred: Vec<f64>, grads: Option<&mut Gradients>, want_input: bool) -> Option<Vec<f64>> {
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let mut scratch;
        let grads = match grads {
            Some(g) => g,
            None => {
                scratch = Gradients::zeros_like(self);
                &mut scratch
            }
        };
        let mut d_out = d_pred;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let need_in = i > 0 || want_input;
            let mut d_in = if need_in { vec![0.0; layer.in_channels * hw] } else { Vec::new() };
            let g = &mut grads.layers[i];
            conv::backward(
                &trace.acts[i],
                layer.in_channels,
                h,
                w,
                &layer.weights,
                &d_out,
                &mut g.weights,
                &mut g.bias,
                if need_in { Some(&mut d_in) } else { None },
            );
            if i > 0 {
                // ReLU: acts[i] is the post-activation of layer i-1
                for (d, a) in d_in.iter_mut().zip(&trace.acts[i]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            d_out = d_in;
        }
        want_input.then_some(d_out)
    }

    /// MSE between the denoised output and `clean`, plus `∂MSE/∂output`
    /// (already masked by the clamp).
    fn loss_and_output_grad(&self, x: &Grid, trace: &Trace, clean: &Grid) -> (f64, Vec<f64>) {
        let raw = self.raw_output(x, trace);
        let n = raw.len() as f64;
        let mut loss = 0.0;
        let g = raw
            .iter()
            .zip(clean.values())
            .map(|(&r, &c)| {
                let out = r.clamp(0.0, 1.0);
                let e = out - c;
                loss += e * e;
                if (0.0..=1.0).contains(&r) {
                    2.0 * e / n
                } else {
                    0.0
                }
            })
            .collect();
        (loss / n, g)
    }

    pub fn loss(&self, x: &Grid, clean: &Grid) -> Result<f64> {
        x.check_shape(clean)?;
        let t = self.trace(x);
        Ok(self.loss_and_output_grad(x, &t, clean).0)
    }

    /// Loss of one `(noisy, clean)` pair and its parameter gradient,
    /// accumulated into `grads`.
    pub fn accumulate_param_grad(&self, noisy: &Grid, clean: &Grid, grads: &mut Gradients) -> Result<f64> {
        noisy.check_shape(clean)?;
        let t = self.trace(noisy);
        let (loss, g_out) = self.loss_and_output_grad(noisy, &t, clean);
        let d_pred = if self.residual { g_out.iter().map(|v| -v).collect() } else { g_out };
        self.backprop(noisy, &t, d_pred, Some(grads), false);
        Ok(loss)
    }

    /// Mean MSE over the batch and its exact parameter gradient.
    pub fn grad_wrt_params(&self, batch: &[(Grid, Grid)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::arg("gradient of an empty batch"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (noisy, clean) in batch {
            loss += self.accumulate_param_grad(noisy, clean, &mut grads)?;
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((loss * inv, grads))
    }

    /// `∂ MSE(forward(x), clean) / ∂x`.
    pub fn grad_wrt_input(&self, x: &Grid, clean: &Grid) -> Result<Grid> {
        Ok(self.loss_and_input_grad(x, clean)?.1)
    }

    pub fn loss_and_input_grad(&self, x: &Grid, clean: &Grid) -> Result<(f64, Grid)> {
        x.check_shape(clean)?;
        let t = self.trace(x);
        let (loss, g_out) = self.loss_and_output_grad(x, &t, clean);
        let grad = if self.residual {
            let d_pred: Vec<f64> = g_out.iter().map(|v| -v).collect();
            let through = self.backprop(x, &t, d_pred, None, true).expect("input gradient requested");
            g_out.iter().zip(&through).map(|(a, b)| a + b).collect()
        } else {
            self.backprop(x, &t, g_out, None, true).expect("input gradient requested")
        };
        Ok((loss, x.with_values(grad)))
    }
}

/// Convenience wrapper for [`Denoiser::init`].
pub fn init_model(arch: Arch, seed: u64) -> Result<Denoiser> {
    Denoiser::init(arch, seed)
}
