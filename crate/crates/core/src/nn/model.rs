use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::layers::{
    bce_loss, conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_backward,
    dropout_forward, maxpool_backward, maxpool_forward, ConvCache, DenseCache, PoolCache,
};
use super::{Activation, LayerShape, LayerSpec, ModelConfig, NnError, Tensor};
use crate::spectrogram::SpectrogramImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub weight: Tensor,
    pub bias: Tensor,
    pub trainable: bool,
}

/// A configured network and its parameters. `params[i]` is `Some` exactly
/// for the conv and dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<Option<LayerParams>>,
}

/// Per-layer gradient buffers, flat in the parameter tensors' layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<ParamGrad>>,
}

impl Gradients {
    pub fn zeros_for(model: &Model) -> Gradients {
        Gradients {
            layers: model
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| ParamGrad {
                        weight: vec![0.0; p.weight.len()],
                        bias: vec![0.0; p.bias.len()],
                    })
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += y);
                a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.layers.iter_mut().flatten() {
            g.weight.iter_mut().for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|g| g.weight.iter().chain(&g.bias).all(|v| v.is_finite()))
    }
}

enum Cache {
    Conv(ConvCache),
    Pool(PoolCache),
    Dropout(Option<Vec<f64>>),
    Flatten(Vec<usize>),
    Dense(DenseCache),
}

/// Canonical `[1, rows, cols]` network input for an image.
pub fn image_tensor(img: &SpectrogramImage) -> Tensor {
    Tensor::new(
        vec![1, img.rows, img.cols],
        img.pixels.iter().map(|&p| p as f64).collect(),
    )
    .expect("image dimensions agree with pixel count")
}

/// Initializes parameters: He-normal for ReLU/identity layers, Glorot-uniform
/// for sigmoid layers, zero biases. Deterministic in `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model, NnError> {
    build_with(config, |fan_in, fan_out, act, n, rng| match act {
        Activation::Sigmoid => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        _ => {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| dist.sample(rng)).collect()
        }
    }, seed)
}

fn build_with<F>(config: &ModelConfig, mut init: F, seed: u64) -> Result<Model, NnError>
where
    F: FnMut(usize, usize, Activation, usize, &mut ChaCha8Rng) -> Vec<f64>,
{
    config.validate()?;
    let shapes = config.output_shapes()?;
    let names = config.param_layer_names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(config.layers.len());
    let mut prev = LayerShape::Spatial {
        c: config.input_shape[0],
        h: config.input_shape[1],
        w: config.input_shape[2],
    };
    for (i, layer) in config.layers.iter().enumerate() {
        let name = || {
            names
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, n)| n.clone())
                .unwrap_or_default()
        };
        let p = match (*layer, prev) {
            (
                LayerSpec::Conv2d {
                    filters,
                    kh,
                    kw,
                    activation,
                },
                LayerShape::Spatial { c, .. },
            ) => {
                let shape = vec![filters, c, kh, kw];
                let n = filters * c * kh * kw;
                let w = init(c * kh * kw, filters * kh * kw, activation, n, &mut rng);
                Some(LayerParams {
                    name: name(),
                    weight: Tensor::new(shape, w)?,
                    bias: Tensor::zeros(&[filters]),
                    trainable: true,
                })
            }
            (LayerSpec::Dense { units, activation }, LayerShape::Flat(n_in)) => {
                let w = init(n_in, units, activation, units * n_in, &mut rng);
                Some(LayerParams {
                    name: name(),
                    weight: Tensor::new(vec![units, n_in], w)?,
                    bias: Tensor::zeros(&[units]),
                    trainable: true,
                })
            }
            _ => None,
        };
        params.push(p);
        prev = shapes[i];
    }
    Ok(Model {
        config: config.clone(),
        params,
    })
}

impl Model {
    /// All weights and biases zero; every prediction is exactly 0.5.
    pub fn zeroed(config: &ModelConfig) -> Result<Model, NnError> {
        build_with(config, |_, _, _, n, _| vec![0.0; n], 0)
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.params.iter().flatten().map(|p| p.name.clone()).collect()
    }

    /// Marks the named layers (`conv1`, `dense1`, ...) trainable or frozen.
    pub fn set_trainable<S: AsRef<str>>(&mut self, names: &[S], trainable: bool) -> Result<(), NnError> {
        for name in names {
            let name = name.as_ref();
            let layer = self
                .params
                .iter_mut()
                .flatten()
                .find(|p| p.name == name)
                .ok_or_else(|| NnError::InvalidConfig(format!("no layer named `{name}`")))?;
            layer.trainable = trainable;
        }
        Ok(())
    }

    pub fn frozen_layers(&self) -> Vec<String> {
        self.params
            .iter()
            .flatten()
            .filter(|p| !p.trainable)
            .map(|p| p.name.clone())
            .collect()
    }

    fn forward_cached(
        &self,
        input: &Tensor,
        mut rng: Option<&mut dyn RngCore>,
        keep: bool,
    ) -> Result<(f64, Vec<Cache>), NnError> {
        let expected = self.config.input_shape;
        if input.shape() != expected {
            return Err(NnError::ShapeMismatch(format!(
                "model input {:?}, expected {expected:?}",
                input.shape()
            )));
        }
        let mut caches = Vec::with_capacity(if keep { self.config.layers.len() } else { 0 });
        let mut x = input.clone();
        for (layer, p) in self.config.layers.iter().zip(&self.params) {
            let (y, cache) = match (*layer, p) {
                (LayerSpec::Conv2d { activation, .. }, Some(p)) => {
                    let (y, c) = conv2d_forward(&x, &p.weight, &p.bias, activation)?;
                    (y, Cache::Conv(c))
                }
                (LayerSpec::MaxPool { ph, pw }, _) => {
                    let (y, c) = maxpool_forward(&x, ph, pw)?;
                    (y, Cache::Pool(c))
                }
                (LayerSpec::Dropout { rate }, _) => match rng.as_deref_mut() {
                    Some(r) => {
                        let (y, m) = dropout_forward(&x, rate, true, r);
                        (y, Cache::Dropout(m))
                    }
                    None => (x, Cache::Dropout(None)),
                },
                (LayerSpec::Flatten, _) => {
                    let shape = x.shape().to_vec();
                    let n = x.len();
                    (x.reshape(vec![n])?, Cache::Flatten(shape))
                }
                (LayerSpec::Dense { activation, .. }, Some(p)) => {
                    let (y, c) = dense_forward(&x, &p.weight, &p.bias, activation)?;
                    (y, Cache::Dense(c))
                }
                _ => return Err(NnError::InvalidConfig("parameters do not match layers".into())),
            };
            debug_assert!(y.all_finite(), "non-finite activation after {layer:?}");
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        let p = x.data()[0];
        if !p.is_finite() {
            return Err(NnError::NonFinite("forward pass".into()));
        }
        Ok((p, caches))
    }

    /// Inference-mode probability for one input tensor.
    pub fn predict(&self, input: &Tensor) -> Result<f64, NnError> {
        Ok(self.forward_cached(input, None, false)?.0)
    }

    /// One probability per image. Train mode needs `rng` for dropout masks.
    pub fn forward(
        &self,
        images: &[SpectrogramImage],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, NnError> {
        images
            .iter()
            .map(|img| {
                let x = image_tensor(img);
                match mode {
                    Mode::Infer => self.predict(&x),
                    Mode::Train => Ok(self.forward_cached(&x, Some(&mut *rng), false)?.0),
                }
            })
            .collect()
    }

    /// Forward + backward for one sample under `weight · BCE(p, target)`.
    ///
    /// Gradients are added into `grads`. With `rng` the pass runs in training
    /// mode (dropout active); without it, in inference mode. Returns the
    /// weighted loss and the predicted probability.
    pub fn accumulate_gradient(
        &self,
        input: &Tensor,
        target: f64,
        weight: f64,
        rng: Option<&mut dyn RngCore>,
        grads: &mut Gradients,
    ) -> Result<(f64, f64), NnError> {
        let first_trainable = self
            .params
            .iter()
            .position(|p| p.as_ref().map(|p| p.trainable).unwrap_or(false));
        let Some(stop) = first_trainable else {
            let p = self.forward_cached(input, rng, false)?.0;
            return Ok((weight * bce_loss(p, target), p));
        };
        let (p, caches) = self.forward_cached(input, rng, true)?;
        let loss = weight * bce_loss(p, target);

        // fused sigmoid + BCE: dL/dz = p − y
        let mut grad = Tensor::new(vec![1], vec![weight * (p - target)])?;
        let mut grad_is_preact = true;
        for i in (stop..caches.len()).rev() {
            let need_input = i > stop;
            match (&caches[i], &self.params[i]) {
                (Cache::Dense(c), Some(par)) => {
                    let (dx, dw, db) = dense_backward(c, &par.weight, &grad, grad_is_preact)?;
                    if par.trainable {
                        add_into(grads, i, &dw, &db);
                    }
                    grad = dx;
                }
                (Cache::Conv(c), Some(par)) => {
                    let (dx, dw, db) = conv2d_backward(c, &par.weight, &grad, need_input)?;
                    if par.trainable {
                        add_into(grads, i, &dw, &db);
                    }
                    match dx {
                        Some(dx) => grad = dx,
                        None => break,
                    }
                }
                (Cache::Pool(c), _) => grad = maxpool_backward(c, &grad)?,
                (Cache::Dropout(m), _) => grad = dropout_backward(m.as_deref(), &grad),
                (Cache::Flatten(shape), _) => grad = grad.reshape(shape.clone())?,
                _ => return Err(NnError::InvalidConfig("cache does not match layer".into())),
            }
            grad_is_preact = false;
        }
        Ok((loss, p))
    }
}

fn add_into(grads: &mut Gradients, layer: usize, dw: &Tensor, db: &Tensor) {
    let g = grads.layers[layer]
        .as_mut()
        .expect("gradient buffer for a parametric layer");
    g.weight.iter_mut().zip(dw.data()).for_each(|(a, b)| *a += b);
    g.bias.iter_mut().zip(db.data()).for_each(|(a, b)| *a += b);
}
