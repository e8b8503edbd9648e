use alloc::vec;
use alloc::vec::Vec;

use super::{Gradients, Network};
use crate::error::NetError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for every parameter, in [`Network::parameters`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let n = net.topology().parameter_count();
        AdamState { config, step_count: 0, first_moment: vec![0.0; n], second_moment: vec![0.0; n] }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One bias-corrected Adam update. Non-finite gradients leave both the
    /// network and the optimizer untouched.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NetError> {
        let n = self.first_moment.len();
        let shapes_match = grads.layers.len() == net.layers.len()
            && grads
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len());
        if !shapes_match || net.topology().parameter_count() != n {
            return Err(NetError::Shape { expected: n, actual: grads.values().count() });
        }
        if !grads.is_finite() {
            return Err(NetError::NonFiniteGradient);
        }
        self.step_count += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step_count as f64;
        let correction1 = 1.0 - libm::pow(beta1, t);
        let correction2 = 1.0 - libm::pow(beta2, t);

        let mut k = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gvals = g.weights.iter().chain(g.biases.iter());
            for (p, &gi) in params.zip(gvals) {
                let m = &mut self.first_moment[k];
                let v = &mut self.second_moment[k];
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(net: &Network, adam: &AdamState, grads: &Gradients) -> Result<(Network, AdamState), NetError> {
    let mut net = net.clone();
    let mut adam = adam.clone();
    adam.step(&mut net, grads)?;
    Ok((net, adam))
}
