//! Adam with per-network moment state.

use serde::{Deserialize, Serialize};

use crate::net::{round_f32, NetworkParams};
use crate::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Parameters stay `f32`-representable and
    /// the version counter advances.
    pub fn step(&mut self, params: &mut NetworkParams, grad: &[f64], lr: f64) -> Result<(), NeuralError> {
        if grad.len() != params.len() || self.m.len() != params.len() {
            return Err(NeuralError::Shape(format!(
                "{} parameters, {} gradients, {} moments",
                params.len(),
                grad.len(),
                self.m.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(NeuralError::NonFiniteGradient(i));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, w) in params.values_mut().iter_mut().enumerate() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            *w = round_f32(*w - lr * m_hat / (v_hat.sqrt() + self.epsilon));
        }
        params.bump_version();
        Ok(())
    }
}
