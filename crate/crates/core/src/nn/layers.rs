//! Forward and backward passes for single CHW samples.

use rand::Rng;

use super::gemm::gemm;
use super::{Activation, NnError, Tensor};

/// Probabilities are clipped to `[BCE_CLIP, 1 − BCE_CLIP]` before the log.
pub const BCE_CLIP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Identity => z,
        Activation::Relu => z.max(0.0),
        Activation::Sigmoid => sigmoid(z),
    }
}

/// Derivative expressed through the activation's output.
fn activation_grad(act: Activation, out: f64) -> f64 {
    match act {
        Activation::Identity => 1.0,
        Activation::Relu => {
            if out > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Sigmoid => out * (1.0 - out),
    }
}

fn chain_activation(act: Activation, out: &[f64], dout: &[f64]) -> Vec<f64> {
    out.iter()
        .zip(dout)
        .map(|(&o, &g)| g * activation_grad(act, o))
        .collect()
}

/// `−[y ln p + (1 − y) ln(1 − p)]` with clipped `p`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn dims3(t: &Tensor, what: &str) -> Result<(usize, usize, usize), NnError> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(NnError::ShapeMismatch(format!(
            "{what} expects a CHW tensor, got {s:?}"
        ))),
    }
}

/// Same-padding offsets; even kernels put the extra row/column at the end.
fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}

fn im2col(input: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<f64> {
    let (pt, pl) = (same_pad(kh), same_pad(kw));
    let hw = h * w;
    let mut cols = vec![0.0; c * kh * kw * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                // valid x range: 0 <= x + kj - pl < w
                let x_lo = pl.saturating_sub(kj);
                let x_hi = (w + pl).saturating_sub(kj).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let iy = y + ki;
                    if iy < pt || iy - pt >= h {
                        continue;
                    }
                    let iy = iy - pt;
                    let src_start = iy * w + x_lo + kj - pl;
                    dst[y * w + x_lo..y * w + x_hi]
                        .copy_from_slice(&plane[src_start..src_start + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize) -> Vec<f64> {
    let (pt, pl) = (same_pad(kh), same_pad(kw));
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh + ki) * kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                let x_lo = pl.saturating_sub(kj);
                let x_hi = (w + pl).saturating_sub(kj).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let iy = y + ki;
                    if iy < pt || iy - pt >= h {
                        continue;
                    }
                    let base = (iy - pt) * w + kj + x_lo - pl;
                    let dst = &mut plane[base..base + (x_hi - x_lo)];
                    for (d, s) in dst.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<f64>,
    /// Post-activation output.
    out: Vec<f64>,
    input_shape: (usize, usize, usize),
    kh: usize,
    kw: usize,
    activation: Activation,
}

/// Stride-1, zero same-padding cross-correlation plus bias, then activation.
///
/// `weight` is `[filters, channels, kh, kw]`, `bias` is `[filters]`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<(Tensor, ConvCache), NnError> {
    let (c, h, w) = dims3(input, "conv2d")?;
    let (f, wc, kh, kw) = match *weight.shape() {
        [f, wc, kh, kw] => (f, wc, kh, kw),
        ref s => return Err(NnError::ShapeMismatch(format!("conv weight shape {s:?}"))),
    };
    if wc != c {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d: input has {c} channels, kernel expects {wc}"
        )));
    }
    if bias.shape() != [f] {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d: bias shape {:?}, expected [{f}]",
            bias.shape()
        )));
    }
    let hw = h * w;
    let ck = c * kh * kw;
    let cols = im2col(input.data(), c, h, w, kh, kw);
    let mut out = vec![0.0; f * hw];
    gemm(f, ck, hw, weight.data(), false, &cols, false, 0.0, &mut out);
    for (row, &b) in out.chunks_exact_mut(hw).zip(bias.data()) {
        for v in row {
            *v = activate(activation, *v + b);
        }
    }
    let t = Tensor::new(vec![f, h, w], out.clone())?;
    Ok((
        t,
        ConvCache {
            cols,
            out,
            input_shape: (c, h, w),
            kh,
            kw,
            activation,
        },
    ))
}

/// Returns `(d_input, d_weight, d_bias)`; `d_input` is skipped unless asked for.
pub fn conv2d_backward(
    cache: &ConvCache,
    weight: &Tensor,
    dout: &Tensor,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor), NnError> {
    let (c, h, w) = cache.input_shape;
    let hw = h * w;
    let f = weight.shape()[0];
    if dout.len() != f * hw {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d backward: gradient has {} values, expected {}",
            dout.len(),
            f * hw
        )));
    }
    let dz = chain_activation(cache.activation, &cache.out, dout.data());
    let ck = c * cache.kh * cache.kw;
    let mut dw = vec![0.0; f * ck];
    gemm(f, hw, ck, &dz, false, &cache.cols, true, 0.0, &mut dw);
    let db: Vec<f64> = dz.chunks_exact(hw).map(|r| r.iter().sum()).collect();
    let dinput = if need_input_grad {
        let mut dcols = vec![0.0; ck * hw];
        gemm(ck, f, hw, weight.data(), true, &dz, false, 0.0, &mut dcols);
        let d = col2im(&dcols, c, h, w, cache.kh, cache.kw);
        Some(Tensor::new(vec![c, h, w], d)?)
    } else {
        None
    };
    Ok((
        dinput,
        Tensor::new(weight.shape().to_vec(), dw)?,
        Tensor::new(vec![f], db)?,
    ))
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<u32>,
    input_shape: (usize, usize, usize),
}

/// Non-overlapping max pooling (stride = window, floor division).
/// Ties go to the first element in row-major order.
pub fn maxpool_forward(input: &Tensor, ph: usize, pw: usize) -> Result<(Tensor, PoolCache), NnError> {
    let (c, h, w) = dims3(input, "maxpool")?;
    if ph == 0 || pw == 0 || h < ph || w < pw {
        return Err(NnError::ShapeMismatch(format!(
            "maxpool {ph}x{pw} on a {h}x{w} input"
        )));
    }
    let (oh, ow) = (h / ph, w / pw);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * ph * w + ox * pw;
                for dy in 0..ph {
                    let row = base + (oy * ph + dy) * w + ox * pw;
                    for idx in row..row + pw {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolCache {
            argmax,
            input_shape: (c, h, w),
        },
    ))
}

pub fn maxpool_backward(cache: &PoolCache, dout: &Tensor) -> Result<Tensor, NnError> {
    if dout.len() != cache.argmax.len() {
        return Err(NnError::ShapeMismatch("maxpool backward".into()));
    }
    let (c, h, w) = cache.input_shape;
    let mut d = vec![0.0; c * h * w];
    for (&i, &g) in cache.argmax.iter().zip(dout.data()) {
        d[i as usize] += g;
    }
    Tensor::new(vec![c, h, w], d)
}

/// Inverted dropout. Returns the mask (0 or `1/(1−rate)`) when one was applied;
/// inference mode and `rate == 0` are exact identities.
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    train: bool,
    rng: &mut R,
) -> (Tensor, Option<Vec<f64>>) {
    if !train || rate == 0.0 {
        return (input.clone(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    (
        Tensor::new(input.shape().to_vec(), data).expect("same shape"),
        Some(mask),
    )
}

pub fn dropout_backward(mask: Option<&[f64]>, dout: &Tensor) -> Tensor {
    match mask {
        None => dout.clone(),
        Some(m) => {
            let data = dout.data().iter().zip(m).map(|(g, k)| g * k).collect();
            Tensor::new(dout.shape().to_vec(), data).expect("same shape")
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    out: Vec<f64>,
    activation: Activation,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

/// `act(W·x + b)` with `W: [units, inputs]`.
pub fn dense_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<(Tensor, DenseCache), NnError> {
    let (units, n) = match *weight.shape() {
        [u, n] => (u, n),
        ref s => return Err(NnError::ShapeMismatch(format!("dense weight shape {s:?}"))),
    };
    if input.len() != n {
        return Err(NnError::ShapeMismatch(format!(
            "dense: input has {} values, weight expects {n}",
            input.len()
        )));
    }
    if bias.shape() != [units] {
        return Err(NnError::ShapeMismatch("dense bias".into()));
    }
    let mut z = bias.data().to_vec();
    gemm(units, n, 1, weight.data(), false, input.data(), false, 1.0, &mut z);
    let out: Vec<f64> = z.iter().map(|&v| activate(activation, v)).collect();
    Ok((
        Tensor::new(vec![units], out.clone())?,
        DenseCache {
            input: input.data().to_vec(),
            out,
            activation,
        },
    ))
}

/// `grad` is taken w.r.t. the pre-activation when `grad_is_preactivation` is
/// set (the fused sigmoid + BCE path), otherwise w.r.t. the output.
/// Returns `(d_input, d_weight, d_bias)`.
pub fn dense_backward(
    cache: &DenseCache,
    weight: &Tensor,
    grad: &Tensor,
    grad_is_preactivation: bool,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (units, n) = (weight.shape()[0], weight.shape()[1]);
    if grad.len() != units {
        return Err(NnError::ShapeMismatch("dense backward".into()));
    }
    let dz = if grad_is_preactivation {
        grad.data().to_vec()
    } else {
        chain_activation(cache.activation, &cache.out, grad.data())
    };
    let mut dw = vec![0.0; units * n];
    gemm(units, 1, n, &dz, false, &cache.input, false, 0.0, &mut dw);
    let mut dx = vec![0.0; n];
    gemm(n, units, 1, weight.data(), true, &dz, false, 0.0, &mut dx);
    Ok((
        Tensor::new(vec![n], dx)?,
        Tensor::new(vec![units, n], dw)?,
        Tensor::new(vec![units], dz)?,
    ))
}
