use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    ///
    /// Gradients are checked for finiteness before anything is modified.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        self.step_scaled(params, grads, self.config.step_size)
    }

    /// Same as [`AdamState::step`] with an explicit step size.
    pub fn step_scaled<P: Parameters>(&mut self, params: &mut P, grads: &P, step_size: f64) -> Result<()> {
        let g = grads.tensors();
        if g.len() != self.first.len() {
            return Err(Error::dim("Adam tensor count", self.first.len(), g.len()));
        }
        for (i, (t, m)) in g.iter().zip(&self.first).enumerate() {
            if t.len() != m.len() {
                return Err(Error::dim(format!("Adam {}", grads.tensor_name(i)), m.len(), t.len()));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", grads.tensor_name(i))));
            }
        }

        self.steps += 1;
        let AdamConfig { beta1, beta2, epsilon, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= step_size * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
