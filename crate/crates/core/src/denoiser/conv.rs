//! 3×3 stride-1 zero-padded convolution on CHW planes.

/// Rows/columns of the output that a tap offset `d ∈ {-1, 0, 1}` reads from
/// inside the input.
#[inline]
fn valid_range(d: isize, len: usize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { len - d as usize } else { len };
    (lo, hi.max(lo))
}

#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Dot product with four fixed-order partial sums.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Unfold `input` into `in_ch·9` shifted planes (zero outside the image):
/// `col[(ic·9 + ky·3 + kx)·hw + y·w + x] = input[ic, y + ky - 1, x + kx - 1]`.
fn im2col(input: &[f64], in_ch: usize, h: usize, w: usize, col: &mut Vec<f64>) {
    let hw = h * w;
    col.clear();
    col.resize(in_ch * 9 * hw, 0.0);
    for ic in 0..in_ch {
        let src = &input[ic * hw..(ic + 1) * hw];
        for ky in 0..3 {
            let dy = ky as isize - 1;
            let (y0, y1) = valid_range(dy, h);
            for kx in 0..3 {
                let dx = kx as isize - 1;
                let (x0, x1) = valid_range(dx, w);
                let plane = &mut col[(ic * 9 + ky * 3 + kx) * hw..][..hw];
                for y in y0..y1 {
                    let s0 = ((y as isize + dy) as usize * w) as isize + x0 as isize + dx;
                    plane[y * w + x0..y * w + x1].copy_from_slice(&src[s0 as usize..s0 as usize + (x1 - x0)]);
                }
            }
        }
    }
}

thread_local! {
    // Reused unfold buffer; avoids a fresh large allocation per layer call.
    static COL: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn with_col<R>(input: &[f64], in_ch: usize, h: usize, w: usize, f: impl FnOnce(&[f64]) -> R) -> R {
    COL.with(|cell| {
        let mut col = cell.take();
        im2col(input, in_ch, h, w, &mut col);
        let r = f(&col);
        cell.replace(col);
        r
    })
}

/// `dst += a0·s0 + a1·s1 + a2·s2 + a3·s3`, one pass over `dst`.
#[inline]
fn axpy4(dst: &mut [f64], a: [f64; 4], s: [&[f64]; 4]) {
    let n = dst.len();
    let (s0, s1, s2, s3) = (&s[0][..n], &s[1][..n], &s[2][..n], &s[3][..n]);
    for p in 0..n {
        dst[p] += a[0] * s0[p] + a[1] * s1[p] + a[2] * s2[p] + a[3] * s3[p];
    }
}

/// Four dot products sharing one operand.
#[inline]
fn dot_x4(a: &[f64], b: [&[f64]; 4]) -> [f64; 4] {
    let n = a.len();
    let (b0, b1, b2, b3) = (&b[0][..n], &b[1][..n], &b[2][..n], &b[3][..n]);
    let mut acc = [0.0f64; 4];
    for p in 0..n {
        let x = a[p];
        acc[0] += x * b0[p];
        acc[1] += x * b1[p];
        acc[2] += x * b2[p];
        acc[3] += x * b3[p];
    }
    acc
}

/// `out[oc] = bias[oc] + Σ_ic w[oc, ic] ⋆ input[ic]`.
pub(crate) fn forward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let hw = h * w;
    let taps = in_ch * 9;
    debug_assert_eq!(input.len(), in_ch * hw);
    debug_assert_eq!(out.len(), bias.len() * hw);
    with_col(input, in_ch, h, w, |col| {
        let planes: Vec<&[f64]> = col.chunks_exact(hw).collect();
        for (oc, dst) in out.chunks_exact_mut(hw).enumerate() {
            dst.fill(bias[oc]);
            let k = &weights[oc * taps..(oc + 1) * taps];
            let mut t = 0;
            while t + 4 <= taps {
                axpy4(dst, [k[t], k[t + 1], k[t + 2], k[t + 3]], [planes[t], planes[t + 1], planes[t + 2], planes[t + 3]]);
                t += 4;
            }
            for t in t..taps {
                axpy(dst, k[t], planes[t]);
            }
        }
    })
}

/// Accumulate `∂L/∂w`, `∂L/∂b` and optionally `∂L/∂input` given `∂L/∂out`.
/// The input gradient is the convolution of `∂L/∂out` with the transposed,
/// 180°-rotated kernels.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    d_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    d_in: Option<&mut [f64]>,
) {
    let hw = h * w;
    let taps = in_ch * 9;
    let out_ch = grad_b.len();
    let grads: Vec<&[f64]> = d_out.chunks_exact(hw).collect();
    for (oc, g) in grads.iter().enumerate() {
        grad_b[oc] += g.iter().sum::<f64>();
    }
    with_col(input, in_ch, h, w, |col| {
        for (t, plane) in col.chunks_exact(hw).enumerate() {
            let mut oc = 0;
            while oc + 4 <= out_ch {
                let d = dot_x4(plane, [grads[oc], grads[oc + 1], grads[oc + 2], grads[oc + 3]]);
                for (i, v) in d.into_iter().enumerate() {
                    grad_w[(oc + i) * taps + t] += v;
                }
                oc += 4;
            }
            for oc in oc..out_ch {
                grad_w[oc * taps + t] += dot4(grads[oc], plane);
            }
        }
    });
    if let Some(d_in) = d_in {
        let mut flipped = vec![0.0; weights.len()];
        for oc in 0..out_ch {
            for ic in 0..in_ch {
                for k in 0..9 {
                    flipped[(ic * out_ch + oc) * 9 + (8 - k)] = weights[(oc * in_ch + ic) * 9 + k];
                }
            }
        }
        let mut tmp = vec![0.0; in_ch * hw];
        forward(d_out, out_ch, h, w, &flipped, &vec![0.0; in_ch], &mut tmp);
        for (d, t) in d_in.iter_mut().zip(&tmp) {
            *d += t;
        }
    }
}
