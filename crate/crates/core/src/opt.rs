//! First/second-moment adaptive optimizer (Adam) for the score network.
//!
//! Bias-corrected moment estimates with the usual constants; the learning
//! rate and batch size are configuration, everything else is fixed. An
//! optional per-entry magnitude bound clamps parameters after each step,
//! matching the bounded-weights hypothesis some sample-complexity schedules
//! assume.

use crate::net::{Grads, NetError, ScoreNet};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    learning_rate: f64,
    batch_size: usize,
    step: u64,
    m: Grads,
    v: Grads,
    weight_bound: Option<f64>,
}

impl OptimizerState {
    /// Fresh state with zeroed moments shaped like `net`'s parameters.
    pub fn new(learning_rate: f64, batch_size: usize, net: &ScoreNet) -> Result<Self, NetError> {
        if !(learning_rate > 0.0) {
            return Err(NetError::BadHyperparameter { what: "learning rate", value: learning_rate });
        }
        if batch_size == 0 {
            return Err(NetError::BadHyperparameter { what: "batch size", value: 0.0 });
        }
        Ok(Self {
            learning_rate,
            batch_size,
            step: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            weight_bound: None,
        })
    }

    /// Clamp every parameter to [−bound, bound] after each step.
    pub fn with_weight_bound(mut self, bound: f64) -> Self {
        self.weight_bound = Some(bound);
        self
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: moments decay toward the gradient, parameters move along
    /// the bias-corrected ratio.
    pub fn step(&mut self, net: &mut ScoreNet, grads: &Grads) -> Result<(), NetError> {
        if !grads.shape_matches(net) || !self.m.shape_matches(net) {
            return Err(NetError::ShapeMismatch);
        }
        self.step += 1;
        let t = self.step as i32;
        let mc = 1.0 / (1.0 - BETA1.powi(t));
        let vc = 1.0 / (1.0 - BETA2.powi(t));
        let lr = self.learning_rate;
        let bound = self.weight_bound;
        let (weights, biases) = net.weights_mut();
        let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..params.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] * mc;
                let v_hat = v[i] * vc;
                params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                if let Some(b) = bound {
                    params[i] = params[i].clamp(-b, b);
                }
            }
        };
        for l in 0..weights.len() {
            update(&mut weights[l], &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(&mut biases[l], &grads.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
        Ok(())
    }
}
