use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let states = params
            .into_iter()
            .map(|p| AdamState::new(p.rows(), p.cols()))
            .collect();
        Self { config, states }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// One bias-corrected Adam update over every `(name, param)` with its
    /// gradient. All gradients are checked before any parameter moves.
    pub fn step(&mut self, params: &mut [(&str, &mut Matrix)], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam: {} states, {} params, {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, p), (g, s)) in params.iter().zip(grads.iter().zip(&self.states)) {
            if p.shape() != g.shape() || s.m.shape() != p.shape() {
                return Err(Error::Shape(format!("adam: `{name}` shape changed")));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        for ((_, p), (g, s)) in params.iter_mut().zip(grads.iter().zip(&mut self.states)) {
            s.step += 1;
            let t = s.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let pv = p.as_mut_slice();
            let (mv, vv) = (s.m.as_mut_slice(), s.v.as_mut_slice());
            for k in 0..pv.len() {
                let gk = g.as_slice()[k];
                mv[k] = beta1 * mv[k] + (1.0 - beta1) * gk;
                vv[k] = beta2 * vv[k] + (1.0 - beta2) * gk * gk;
                let m_hat = mv[k] / c1;
                let v_hat = vv[k] / c2;
                pv[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
