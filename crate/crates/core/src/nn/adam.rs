use super::{Gradients, Model, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(lr: f64) -> Self {
        AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        }
    }
}

/// First and second moments for one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m_weight: Vec<f64>,
    pub v_weight: Vec<f64>,
    pub m_bias: Vec<f64>,
    pub v_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Number of steps taken so far.
    pub t: u64,
    pub moments: Vec<Option<Moments>>,
}

impl AdamState {
    pub fn new(model: &Model, config: AdamConfig) -> AdamState {
        AdamState {
            config,
            t: 0,
            moments: model
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Moments {
                        m_weight: vec![0.0; p.weight.len()],
                        v_weight: vec![0.0; p.weight.len()],
                        m_bias: vec![0.0; p.bias.len()],
                        v_bias: vec![0.0; p.bias.len()],
                    })
                })
                .collect(),
        }
    }
}

/// One scalar Adam update at step `t` (already incremented). Returns the new θ.
pub fn adam_update(theta: f64, g: f64, m: &mut f64, v: &mut f64, t: u64, cfg: &AdamConfig) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let ti = t.min(i32::MAX as u64) as i32;
    let m_hat = *m / (1.0 - cfg.beta1.powi(ti));
    let v_hat = *v / (1.0 - cfg.beta2.powi(ti));
    theta - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon)
}

fn update_slice(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    for i in 0..theta.len() {
        theta[i] = adam_update(theta[i], g[i], &mut m[i], &mut v[i], t, cfg);
    }
}

/// Applies one optimizer step. Frozen layers are skipped entirely, so their
/// parameters and moments stay bitwise unchanged.
pub fn adam_step(model: &mut Model, grads: &Gradients, state: &mut AdamState) -> Result<(), NnError> {
    if grads.layers.len() != model.params.len() || state.moments.len() != model.params.len() {
        return Err(NnError::ShapeMismatch(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    state.t += 1;
    let t = state.t;
    let cfg = state.config;
    for ((p, g), mo) in model
        .params
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.moments.iter_mut())
    {
        let (p, g, mo) = match (p, g, mo) {
            (Some(p), Some(g), Some(mo)) => (p, g, mo),
            (None, None, None) => continue,
            _ => return Err(NnError::ShapeMismatch("layer structure differs".into())),
        };
        if g.weight.len() != p.weight.len()
            || g.bias.len() != p.bias.len()
            || mo.m_weight.len() != p.weight.len()
            || mo.m_bias.len() != p.bias.len()
        {
            return Err(NnError::ShapeMismatch(format!("layer {}", p.name)));
        }
        if !p.trainable {
            continue;
        }
        update_slice(p.weight.data_mut(), &g.weight, &mut mo.m_weight, &mut mo.v_weight, t, &cfg);
        update_slice(p.bias.data_mut(), &g.bias, &mut mo.m_bias, &mut mo.v_bias, t, &cfg);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_by_hand() {
        let (mut m, mut v) = (0.0, 0.0);
        let theta = adam_update(0.0, 0.1, &mut m, &mut v, 1, &AdamConfig::default());
        assert!((theta + 9.9999990e-4).abs() < 1e-9, "{theta}");
    }

    #[test]
    fn zero_gradient_fresh_state() {
        let (mut m, mut v) = (0.0, 0.0);
        let theta = 0.123_456_789_f64;
        let out = adam_update(theta, 0.0, &mut m, &mut v, 1, &AdamConfig::default());
        assert_eq!(out.to_bits(), theta.to_bits());
    }

    #[test]
    fn odd_symmetry() {
        let cfg = AdamConfig::default();
        let (mut m1, mut v1, mut m2, mut v2) = (0.0, 0.0, 0.0, 0.0);
        let mut a = 1.0;
        let mut b = 1.0;
        for t in 1..=5 {
            a = adam_update(a, 0.37, &mut m1, &mut v1, t, &cfg);
            b = adam_update(b, -0.37, &mut m2, &mut v2, t, &cfg);
        }
        assert!(((a - 1.0) + (b - 1.0)).abs() < 1e-15);
        assert!(v1 >= 0.0);
    }
}
