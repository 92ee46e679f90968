use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{Dense, Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0013,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments mirror the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Dense>,
    second: Vec<Dense>,
}

impl Adam {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zeros: Vec<Dense> = params.layers().iter().map(Dense::zeros_like).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Dense] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Dense] {
        &self.second
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        let shapes_match = grads.len() == params.layers().len()
            && grads.iter().zip(params.layers()).all(|(g, p)| {
                g.weights.dim() == p.weights.dim() && g.bias.len() == p.bias.len()
            });
        if !shapes_match || self.first.len() != grads.len() {
            return Err(Error::contract("gradient shape does not match parameters"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (((p, m), v), g) in params
            .layers_mut()
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
            .zip(grads)
        {
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}
