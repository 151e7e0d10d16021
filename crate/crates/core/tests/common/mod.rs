//! Central finite-difference gradient checks shared by the test targets.
#![allow(dead_code)]

use pcg_core::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, zero when both vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Numeric gradient of `f` w.r.t. every entry of `t`.
pub fn numeric_grad(t: &mut Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    (0..t.len())
        .map(|i| {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + STEP;
            let up = f(t);
            t.data_mut()[i] = orig - STEP;
            let down = f(t);
            t.data_mut()[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn dot(a: &Tensor, c: &[f64]) -> f64 {
    a.data().iter().zip(c).map(|(x, y)| x * y).sum()
}

/// Worst relative error over input, weight and bias gradients of a conv
/// layer under the loss `Σ c·out`.
pub fn check_conv(seed: u64, c: usize, h: usize, w: usize, f: usize, k: usize, act: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_tensor(&mut rng, &[c, h, w]);
    let mut wt = random_tensor(&mut rng, &[f, c, k, k]);
    let mut b = random_tensor(&mut rng, &[f]);
    let coef: Vec<f64> = (0..f * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (out, cache) = conv2d_forward(&x, &wt, &b, act).unwrap();
    let dout = Tensor::new(out.shape().to_vec(), coef.clone()).unwrap();
    let (dx, dw, db) = conv2d_backward(&cache, &wt, &dout, true).unwrap();
    let (w0, b0, x0) = (wt.clone(), b.clone(), x.clone());
    let nx = numeric_grad(&mut x, |x| dot(&conv2d_forward(x, &w0, &b0, act).unwrap().0, &coef));
    let nw = numeric_grad(&mut wt, |w| dot(&conv2d_forward(&x0, w, &b0, act).unwrap().0, &coef));
    let nb = numeric_grad(&mut b, |b| dot(&conv2d_forward(&x0, &w0, b, act).unwrap().0, &coef));
    rel_error(dx.unwrap().data(), &nx)
        .max(rel_error(dw.data(), &nw))
        .max(rel_error(db.data(), &nb))
}

pub fn check_pool(seed: u64, c: usize, h: usize, w: usize, p: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_tensor(&mut rng, &[c, h, w]);
    let (out, cache) = maxpool_forward(&x, p, p).unwrap();
    let coef: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dout = Tensor::new(out.shape().to_vec(), coef.clone()).unwrap();
    let dx = maxpool_backward(&cache, &dout).unwrap();
    let nx = numeric_grad(&mut x, |x| dot(&maxpool_forward(x, p, p).unwrap().0, &coef));
    rel_error(dx.data(), &nx)
}

pub fn check_dense(seed: u64, n: usize, units: usize, act: Activation) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_tensor(&mut rng, &[n]);
    let mut wt = random_tensor(&mut rng, &[units, n]);
    let mut b = random_tensor(&mut rng, &[units]);
    let coef: Vec<f64> = (0..units).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, cache) = dense_forward(&x, &wt, &b, act).unwrap();
    let dout = Tensor::new(vec![units], coef.clone()).unwrap();
    let (dx, dw, db) = dense_backward(&cache, &wt, &dout, false).unwrap();
    let (w0, b0, x0) = (wt.clone(), b.clone(), x.clone());
    let nx = numeric_grad(&mut x, |x| dot(&dense_forward(x, &w0, &b0, act).unwrap().0, &coef));
    let nw = numeric_grad(&mut wt, |w| dot(&dense_forward(&x0, w, &b0, act).unwrap().0, &coef));
    let nb = numeric_grad(&mut b, |b| dot(&dense_forward(&x0, &w0, b, act).unwrap().0, &coef));
    rel_error(dx.data(), &nx)
        .max(rel_error(dw.data(), &nw))
        .max(rel_error(db.data(), &nb))
}

/// Absolute error of the fused sigmoid + BCE gradient `p − y` against
/// central differences of `BCE(sigmoid(z), y)`.
pub fn check_bce(z: f64, y: f64) -> f64 {
    let l = |z: f64| bce_loss(sigmoid(z), y);
    let numeric = (l(z + STEP) - l(z - STEP)) / (2.0 * STEP);
    (sigmoid(z) - y - numeric).abs()
}

/// A miniature conv net on 8×10 inputs, dropout included.
pub fn mini_config() -> ModelConfig {
    ModelConfig {
        input_shape: [1, 8, 10],
        layers: vec![
            LayerSpec::conv(3, 3),
            LayerSpec::pool(2),
            LayerSpec::Dropout { rate: 0.25 },
            LayerSpec::Conv2d { filters: 2, kh: 2, kw: 2, activation: Activation::Relu },
            LayerSpec::pool(2),
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 1, activation: Activation::Sigmoid },
        ],
    }
}

/// Whole-model check: every parameter of the miniature net against central
/// differences of the training-mode loss (same dropout masks each call).
pub fn check_model(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = build_model(&mini_config(), seed).unwrap();
    // non-zero biases so their gradients are exercised at generic points
    for p in model.params.iter_mut().flatten() {
        p.bias.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
    }
    let x = random_tensor(&mut rng, &[1, 8, 10]);
    let y = 1.0;
    let loss = |m: &Model| {
        let mut g = Gradients::zeros_for(m);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xD0);
        m.accumulate_gradient(&x, y, 1.0, Some(&mut r), &mut g).unwrap()
    };
    let mut grads = Gradients::zeros_for(&model);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xD0);
    model.accumulate_gradient(&x, y, 1.0, Some(&mut r), &mut grads).unwrap();

    let mut worst: f64 = 0.0;
    for li in 0..model.params.len() {
        let Some(g) = grads.layers[li].clone() else { continue };
        for (is_bias, analytic) in [(false, &g.weight), (true, &g.bias)] {
            let n = analytic.len();
            let mut numeric = Vec::with_capacity(n);
            for i in 0..n {
                let orig = *param_mut(&mut model, li, is_bias, i);
                *param_mut(&mut model, li, is_bias, i) = orig + STEP;
                let up = loss(&model).0;
                *param_mut(&mut model, li, is_bias, i) = orig - STEP;
                let down = loss(&model).0;
                *param_mut(&mut model, li, is_bias, i) = orig;
                numeric.push((up - down) / (2.0 * STEP));
            }
            worst = worst.max(rel_error(analytic, &numeric));
        }
    }
    worst
}

fn param_mut(m: &mut Model, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let p = m.params[layer].as_mut().unwrap();
    let t = if bias { &mut p.bias } else { &mut p.weight };
    &mut t.data_mut()[i]
}
