use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid("decay must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Running mean of squared gradients for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    config: RmsPropConfig,
    mean_square: Vec<f64>,
}

impl RmsPropState {
    pub fn new(len: usize, config: RmsPropConfig) -> Self {
        Self {
            config,
            mean_square: vec![0.0; len],
        }
    }

    pub fn mean_square(&self) -> &[f64] {
        &self.mean_square
    }

    pub fn config(&self) -> &RmsPropConfig {
        &self.config
    }

    /// `v ← ρv + (1−ρ)g²`, `p ← p − η·g / (√v + ε)`.
    ///
    /// The gradient is checked before anything is modified, so on error both
    /// the parameters and the accumulator are left untouched.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || grads.len() != self.mean_square.len() {
            return Err(Error::invalid(format!(
                "rmsprop shapes: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.mean_square.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at index {i}")));
        }
        let RmsPropConfig {
            learning_rate,
            decay,
            epsilon,
        } = self.config;
        for ((p, v), &g) in params.iter_mut().zip(self.mean_square.iter_mut()).zip(grads) {
            *v = decay * *v + (1.0 - decay) * g * g;
            *p -= learning_rate * g / (v.sqrt() + epsilon);
        }
        Ok(())
    }
}
