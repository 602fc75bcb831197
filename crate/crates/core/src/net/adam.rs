use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::net::weights::{Gradients, NetworkWeights};

/// Adam moment accumulators for one [`NetworkWeights`] buffer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(w: &NetworkWeights, lr: f64) -> Self {
        AdamState { m: vec![0.0; w.len()], v: vec![0.0; w.len()], step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam update of `w` along `g`.
    pub fn update(&mut self, w: &mut NetworkWeights, g: &Gradients) -> Result<()> {
        if g.data.len() != self.m.len() || w.len() != self.m.len() {
            return Err(Error::LengthMismatch { expected: self.m.len(), found: g.data.len() });
        }
        self.step += 1;
        let b1t = 1.0 - math::powi(self.beta1, self.step as i32);
        let b2t = 1.0 - math::powi(self.beta2, self.step as i32);
        for (((wi, gi), mi), vi) in w.as_mut_slice().iter_mut().zip(&g.data).zip(&mut self.m).zip(&mut self.v) {
            *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            let mhat = *mi / b1t;
            let vhat = *vi / b2t;
            *wi -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
        }
        Ok(())
    }
}
