//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::mlp::{Gradients, MlpModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(model: &MlpModel, config: AdamWConfig) -> Self {
        Self {
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            step_count: 0,
            config,
        }
    }
}

/// One bias-corrected AdamW update:
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`.
pub fn adamw_step(
    model: &mut MlpModel,
    state: &mut AdamWState,
    grads: &Gradients,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !grads.same_shape(model) || !state.first_moment.same_shape(model) {
        return Err(invalid!(
            "gradient / optimizer state shape does not match the model"
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid!(
            "learning rate {lr} must be finite and non-negative"
        ));
    }
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(invalid!(
            "weight decay {weight_decay} must be finite and non-negative"
        ));
    }
    state.step_count += 1;
    let AdamWConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);

    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * (m_hat / (libm::sqrt(v_hat) + epsilon) + weight_decay * params[i]);
        }
    };

    let layers = model.num_layers();
    for l in 0..layers {
        update(
            &mut model.weights_mut()[l],
            &grads.weights[l],
            &mut state.first_moment.weights[l],
            &mut state.second_moment.weights[l],
        );
        update(
            &mut model.biases_mut()[l],
            &grads.biases[l],
            &mut state.first_moment.biases[l],
            &mut state.second_moment.biases[l],
        );
    }
    Ok(())
}

/// Cosine annealing without warmup or restarts:
/// `base_lr * (1 + cos(pi * epoch / total_epochs)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(invalid!("epoch {epoch} outside 0..{total_epochs}"));
    }
    let phase = core::f64::consts::PI * epoch as f64 / total_epochs as f64;
    Ok(base_lr * 0.5 * (1.0 + libm::cos(phase)))
}

/// Learning rate for every epoch of a run.
pub fn cosine_schedule(total_epochs: usize, base_lr: f64) -> Vec<f64> {
    (0..total_epochs)
        .map(|e| cosine_lr(e, total_epochs, base_lr).unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_model(w: f64) -> MlpModel {
        MlpModel::from_parts(vec![1, 1], vec![vec![w]], vec![vec![0.0]], 0.0, 0).unwrap()
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let mut m = MlpModel::init(&[3, 4, 2], 0.0, 1).unwrap();
        let before = m.clone();
        let mut st = AdamWState::new(&m, AdamWConfig::default());
        let g = Gradients::zeros_like(&m);
        adamw_step(&mut m, &mut st, &g, 0.1, 0.0).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // step 1: m_hat = g = 1, v_hat = g^2 = 1 -> theta = 1 - 0.1 * 1/(1 + 1e-8)
        let mut m = scalar_model(1.0);
        let mut st = AdamWState::new(&m, AdamWConfig::default());
        let mut g = Gradients::zeros_like(&m);
        g.fill(1.0);
        adamw_step(&mut m, &mut st, &g, 0.1, 0.0).unwrap();
        assert!((m.weights()[0][0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn pure_decay() {
        let mut m = scalar_model(2.0);
        let mut st = AdamWState::new(&m, AdamWConfig::default());
        let g = Gradients::zeros_like(&m);
        adamw_step(&mut m, &mut st, &g, 0.1, 0.01).unwrap();
        assert!((m.weights()[0][0] - 2.0 * (1.0 - 0.001)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut m = scalar_model(1.0);
        let mut st = AdamWState::new(&m, AdamWConfig::default());
        let mut g = Gradients::zeros_like(&m);
        g.weights[0][0] = f64::NAN;
        assert_eq!(
            adamw_step(&mut m, &mut st, &g, 0.1, 0.0),
            Err(Error::NonFinite("gradients"))
        );
        let other = MlpModel::init(&[2, 2], 0.0, 0).unwrap();
        let g = Gradients::zeros_like(&other);
        assert!(adamw_step(&mut m, &mut st, &g, 0.1, 0.0).is_err());
    }

    #[test]
    fn cosine_values() {
        assert_eq!(cosine_lr(0, 30, 5e-4).unwrap(), 5e-4);
        assert!((cosine_lr(15, 30, 5e-4).unwrap() - 2.5e-4).abs() < 1e-18);
        assert!((cosine_lr(29, 30, 5e-4).unwrap() - 1.370e-6).abs() < 1e-9);
        assert!(cosine_lr(30, 30, 5e-4).is_err());
    }

    #[test]
    fn cosine_is_non_increasing() {
        let s = cosine_schedule(50, 1e-3);
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }
}
