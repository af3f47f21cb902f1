//! Adaptive-moment optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first and second moments per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Gradients are checked before any
    /// parameter is touched, so a rejected update leaves everything unchanged.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), Error> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient {i} is {:?}, parameter is {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if let Some(j) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient {i} entry {j} is {}",
                    g.data()[j]
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig { rate, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((x, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
