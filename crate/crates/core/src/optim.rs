//! Adam with bias correction and L2 weight decay folded into the gradient.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// One update of `params` in place.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradients".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState) -> Result<()> {
    state.step_slice(&mut params.values, &grads.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_no_decay_leave_params() {
        let mut p = ModelParams::init(4, 2, 0).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(p.len(), 0.1, 0.0);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = [0.0];
        let mut st = AdamState::new(1, 0.1, 0.0);
        st.step_slice(&mut w, &[1.0]).unwrap();
        // m_hat / sqrt(v_hat) = 1, so the step is lr / (1 + eps)
        assert!((w[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_enters_gradient() {
        let mut w = [2.0];
        let mut st = AdamState::new(1, 0.1, 0.5);
        st.step_slice(&mut w, &[0.0]).unwrap();
        assert!(w[0] < 2.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut w = [0.0, 1.0];
        let mut st = AdamState::new(2, 0.1, 0.0);
        assert!(st.step_slice(&mut w, &[f64::NAN, 0.0]).is_err());
        assert_eq!(w, [0.0, 1.0]);
        assert_eq!(st.step, 0);
        assert!(st.step_slice(&mut w, &[0.0]).is_err());
    }
}
