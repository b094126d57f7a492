//! Adam with optional global-norm clipping, and the learning-rate schedule.

use std::f64::consts::PI;

use super::config::{Schedule, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    pub clipped: bool,
}

pub fn global_norm<T: Scalar>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            detail: format!("{} params, {} grads", params.len(), grads.len()),
        });
    }
    let grad_norm = global_norm(grads);
    if !grad_norm.is_finite() {
        let (ti, ei) = grads
            .iter()
            .enumerate()
            .find_map(|(i, g)| g.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
            .unwrap_or((0, 0));
        return Err(Error::NonFinite {
            op: "adam_step",
            node: ti,
            diagnostics: format!(
                "gradient of tensor {ti} element {ei} is non-finite at optimizer step {}",
                state.step + 1
            ),
        });
    }
    let mut scale = 1.0;
    let mut clipped = false;
    if let Some(max_norm) = cfg.grad_clip_norm {
        if grad_norm > max_norm {
            scale = max_norm / grad_norm;
            clipped = true;
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let bc1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let bc2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let eps = T::from_f64_lossy(cfg.eps);
    let lr_t = T::from_f64_lossy(lr);
    let scale_t = T::from_f64_lossy(scale);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i][j] * scale_t;
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w = *w - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(StepStats { grad_norm, clipped })
}

/// Linear ramp from 0 to the base rate over `warmup_steps`, then constant (or cosine).
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let base = cfg.learning_rate;
    if step < cfg.warmup_steps {
        return base * step as f64 / cfg.warmup_steps as f64;
    }
    match cfg.schedule {
        Schedule::Constant => base,
        Schedule::Cosine => {
            let span = cfg.total_steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
            let progress = ((step - cfg.warmup_steps) as f64 / span).min(1.0);
            base * 0.5 * (1.0 + (PI * progress).cos())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            warmup_steps: 10,
            total_steps: 100,
            grad_clip_norm: None,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_examples() {
        let c = cfg();
        assert_eq!(lr_schedule(0, &c), 0.0);
        assert_eq!(lr_schedule(5, &c), 0.005);
        assert_eq!(lr_schedule(10, &c), 0.01);
        assert_eq!(lr_schedule(80, &c), 0.01);
        let flat = TrainConfig { warmup_steps: 0, ..c.clone() };
        assert_eq!(lr_schedule(0, &flat), 0.01);
        let cos = TrainConfig { schedule: Schedule::Cosine, ..c };
        assert!((lr_schedule(100, &cos)).abs() < 1e-15);
        assert!((lr_schedule(55, &cos) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::new(vec![3], vec![0.5f64, -1.0, 2.0]).unwrap()];
        let before = params.clone();
        let mut state = OptimizerState::new(&params);
        for _ in 0..3 {
            adam_step(&mut params, &[vec![0.0; 3]], &mut state, 0.1, &cfg()).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![Tensor::new(vec![1], vec![1.0f64]).unwrap()];
        let mut state = OptimizerState::new(&params);
        adam_step(&mut params, &[vec![1.0]], &mut state, 0.01, &cfg()).unwrap();
        assert!((params[0].data()[0] - (1.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn clipping_rescales_large_gradients() {
        let mut params = vec![Tensor::new(vec![2], vec![0.0f64, 0.0]).unwrap()];
        let mut state = OptimizerState::new(&params);
        let c = TrainConfig { grad_clip_norm: Some(1.0), ..cfg() };
        let stats = adam_step(&mut params, &[vec![3.0, 4.0]], &mut state, 0.01, &c).unwrap();
        assert_eq!(stats.grad_norm, 5.0);
        assert!(stats.clipped);
        assert!((state.m[0][0] - 0.1 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut params = vec![Tensor::new(vec![1], vec![1.0f64]).unwrap()];
        let mut state = OptimizerState::new(&params);
        let err = adam_step(&mut params, &[vec![f64::NAN]], &mut state, 0.1, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "adam_step", .. }));
        assert_eq!(params[0].data()[0], 1.0);
        assert_eq!(state.step, 0);
    }

    /// Textbook Adam written out independently for a scalar quadratic.
    fn reference_adam(x0: f64, target: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (x - target);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn ten_quadratic_steps_match_reference() {
        let targets = [1.5, -0.25, 3.0];
        let mut params = vec![Tensor::new(vec![3], vec![0.0f64, 0.5, -2.0]).unwrap()];
        let starts = params[0].data().to_vec();
        let mut state = OptimizerState::new(&params);
        for _ in 0..10 {
            let g: Vec<f64> = params[0]
                .data()
                .iter()
                .zip(&targets)
                .map(|(x, t)| 2.0 * (x - t))
                .collect();
            adam_step(&mut params, &[g], &mut state, 0.05, &cfg()).unwrap();
        }
        for i in 0..3 {
            let expect = reference_adam(starts[i], targets[i], 0.05, 10);
            assert!((params[0].data()[i] - expect).abs() < 1e-6);
        }
    }
}
