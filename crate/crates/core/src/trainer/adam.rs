use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::kernel::Tensor;

fn default_lr() -> f64 {
    4.5e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    32
}
fn default_patience() -> usize {
    30
}
fn default_max_epochs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Constant; the name leaves room for a schedule.
    #[serde(default = "default_lr", alias = "learning_rate")]
    pub initial_learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Global gradient-norm ceiling. Off unless set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    /// Optimizer-step budget across all epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut bad = Vec::new();
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            bad.push("initial_learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            bad.push("beta1 must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            bad.push("beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            bad.push("epsilon must be positive");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be at least 1");
        }
        if self.patience == 0 {
            bad.push("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            bad.push("max_epochs must be at least 1");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            bad.push("grad_clip must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(bad.join("; ")))
        }
    }
}

/// First and second moments per weight, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(weights: &[&Tensor<f32>]) -> Self {
        let m: Vec<Vec<f32>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update, `lr_override` replacing the configured
/// rate when given. Gradients are checked before anything is touched, so a
/// refused step leaves weights and state as they were.
pub fn adam_step(
    weights: &mut [&mut Tensor<f32>],
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    adam_step_with_lr(weights, grads, state, config, config.initial_learning_rate)
}

pub fn adam_step_with_lr(
    weights: &mut [&mut Tensor<f32>],
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    config: &TrainConfig,
    lr: f64,
) -> Result<(), TrainError> {
    if weights.len() != grads.len() || state.m.len() != grads.len() {
        return Err(TrainError::Shape(format!(
            "{} weights, {} gradients, {} moment buffers",
            weights.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, ((w, g), m)) in weights.iter().zip(grads).zip(&state.m).enumerate() {
        if w.shape() != g.shape() || m.len() != w.len() {
            return Err(TrainError::Shape(format!("parameter {i}")));
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient { param: i });
        }
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for ((w, g), (m, v)) in weights.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &g), m), v) in w.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g as f64;
            let m_new = b1 * *m as f64 + (1.0 - b1) * g;
            let v_new = b2 * *v as f64 + (1.0 - b2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let step = lr * (m_new / c1) / ((v_new / c2).sqrt() + config.epsilon);
            *w = (*w as f64 - step) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> Tensor<f32> {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    #[test]
    fn defaults_follow_the_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.initial_learning_rate, 4.5e-4);
        assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-8));
        assert_eq!((c.batch_size, c.patience), (32, 30));
        let aliased: TrainConfig = serde_json::from_str(r#"{"learning_rate": 0.01}"#).unwrap();
        assert_eq!(aliased.initial_learning_rate, 0.01);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.01}"#).is_err());
    }

    #[test]
    fn first_step_on_unit_gradient() {
        let mut w = scalar(0.0);
        let mut s = AdamState::zeros_like(&[&w]);
        adam_step(&mut [&mut w], &[scalar(1.0)], &mut s, &TrainConfig::default()).unwrap();
        assert!((w.data()[0] as f64 + 4.4999996e-4).abs() < 1e-10, "{}", w.data()[0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = scalar(0.25);
        let mut s = AdamState::zeros_like(&[&w]);
        adam_step(&mut [&mut w], &[scalar(0.0)], &mut s, &TrainConfig::default()).unwrap();
        assert_eq!(w.data()[0], 0.25);
    }

    #[test]
    fn zero_rate_advances_state_only() {
        let mut w = scalar(0.25);
        let mut s = AdamState::zeros_like(&[&w]);
        let c = TrainConfig::default();
        adam_step_with_lr(&mut [&mut w], &[scalar(2.0)], &mut s, &c, 0.0).unwrap();
        assert_eq!(w.data()[0], 0.25);
        assert_eq!(s.t, 1);
        assert!(s.m[0][0] > 0.0 && s.v[0][0] > 0.0);
    }

    #[test]
    fn non_finite_gradient_refused() {
        let mut w = scalar(1.0);
        let mut s = AdamState::zeros_like(&[&w]);
        let r = adam_step(&mut [&mut w], &[scalar(f32::NAN)], &mut s, &TrainConfig::default());
        assert!(matches!(r, Err(TrainError::NonFiniteGradient { param: 0 })));
        assert_eq!((w.data()[0], s.t), (1.0, 0));
    }

    #[test]
    fn invalid_configs_rejected() {
        for json in [
            r#"{"learning_rate": 0}"#,
            r#"{"beta1": 1.0}"#,
            r#"{"batch_size": 0}"#,
            r#"{"patience": 0}"#,
        ] {
            let c: TrainConfig = serde_json::from_str(json).unwrap();
            assert!(c.validate().is_err(), "{json}");
        }
    }
}
