//! First-order optimisers over flat real parameter vectors.
//!
//! Complex parameters are optimised as interleaved `(re, im)` pairs, so each
//! real component gets its own moment estimates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    AdamAmsgrad,
    GradientDescent,
}

/// Adam with the amsgrad correction (running maximum of the second moment),
/// or plain gradient descent.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let (m, v, v_max) = match kind {
            OptimizerKind::AdamAmsgrad => (
                vec![0.0; n_params],
                vec![0.0; n_params],
                vec![0.0; n_params],
            ),
            OptimizerKind::GradientDescent => (Vec::new(), Vec::new(), Vec::new()),
        };
        Ok(Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m,
            v,
            v_max,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.check_len(params.len(), grads.len())?;
        self.steps += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            *p -= self.update(i, *g);
        }
        Ok(())
    }

    /// Steps complex parameters given real-pair cotangents
    /// (`dL/dRe + i dL/dIm`).
    pub fn step_complex(&mut self, params: &mut [Complex64], grads: &[Complex64]) -> Result<()> {
        self.check_len(2 * params.len(), 2 * grads.len())?;
        self.steps += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.re -= self.update(2 * i, g.re);
            p.im -= self.update(2 * i + 1, g.im);
        }
        Ok(())
    }

    fn check_len(&self, n_params: usize, n_grads: usize) -> Result<()> {
        if n_params != n_grads {
            return Err(Error::invalid(format!(
                "{n_params} parameters but {n_grads} gradient entries"
            )));
        }
        if self.kind == OptimizerKind::AdamAmsgrad && n_params != self.m.len() {
            return Err(Error::invalid(format!(
                "optimiser sized for {} parameters, got {n_params}",
                self.m.len()
            )));
        }
        Ok(())
    }

    fn update(&mut self, i: usize, g: f64) -> f64 {
        match self.kind {
            OptimizerKind::GradientDescent => self.learning_rate * g,
            OptimizerKind::AdamAmsgrad => {
                let t = self.steps as i32;
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                self.v_max[i] = self.v_max[i].max(self.v[i]);
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                let denom = self.v_max[i].sqrt() / bc2.sqrt() + self.eps;
                self.learning_rate / bc1 * self.m[i] / denom
            }
        }
    }
}
