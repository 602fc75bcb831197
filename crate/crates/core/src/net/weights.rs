use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::net::spec::{Activation, LayerPlan, LayerShape, NetworkSpec};
use crate::rng;

/// All trainable parameters of a network, stored flat in plan order
/// (weights then biases, layer by layer).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    spec: NetworkSpec,
    plan: LayerPlan,
    data: Vec<f64>,
}

impl NetworkWeights {
    /// Fan-in scaled uniform initialisation: `±sqrt(6 / fan_in)` for hidden
    /// layers, `±sqrt(3 / fan_in)` for the latent and output layers, zero
    /// biases except the output bias, which starts at `softplus⁻¹(1)`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let plan = spec.plan()?;
        let mut data = vec![0.0; plan.n_weights];
        let mut rng = rng::stream(seed, 0x5eed);
        for layer in plan.layers() {
            let gain = match layer.activation {
                Activation::LeakyRelu { .. } => 6.0,
                _ => 3.0,
            };
            let bound = math::sqrt(gain / layer.fan_in() as f64);
            for w in &mut data[layer.w_offset..layer.w_offset + layer.w_len] {
                *w = rng::uniform(&mut rng, -bound, bound);
            }
            if layer.activation == Activation::Softplus {
                let b0 = math::ln(core::f64::consts::E - 1.0);
                data[layer.b_offset..layer.b_offset + layer.b_len].fill(b0);
            }
        }
        Ok(NetworkWeights { spec: spec.clone(), plan, data })
    }

    /// Rebuilds weights from a flat buffer, checking it against `spec`.
    pub fn from_flat(spec: &NetworkSpec, data: Vec<f64>) -> Result<Self> {
        let plan = spec.plan()?;
        if data.len() != plan.n_weights {
            return Err(Error::LengthMismatch { expected: plan.n_weights, found: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("weight {i}")));
        }
        Ok(NetworkWeights { spec: spec.clone(), plan, data })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let plan = spec.plan()?;
        Ok(NetworkWeights { spec: spec.clone(), data: vec![0.0; plan.n_weights], plan })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn plan(&self) -> &LayerPlan {
        &self.plan
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn layer(&self, l: &LayerShape) -> (&[f64], &[f64]) {
        (
            &self.data[l.w_offset..l.w_offset + l.w_len],
            &self.data[l.b_offset..l.b_offset + l.b_len],
        )
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        checksum(&self.data)
    }
}

pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Gradient buffer laid out like [`NetworkWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(w: &NetworkWeights) -> Self {
        Gradients { data: vec![0.0; w.len()] }
    }

    pub(crate) fn layer_mut(&mut self, l: &LayerShape) -> (&mut [f64], &mut [f64]) {
        let (head, tail) = self.data.split_at_mut(l.b_offset);
        (&mut head[l.w_offset..], &mut tail[..l.b_len])
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|g| *g *= c);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, g| m.max(g.abs()))
    }
}
