//! Machine parameter vectors and latent vectors.

use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};

pub const N_PARAMS: usize = 5;

/// Settings of the five tunable machine elements, in order: gun energy,
/// gun phase, buncher peak field, buncher phase and solenoid strength
/// (all as dimensionless analogs).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct MachineParams(pub [f64; N_PARAMS]);

impl MachineParams {
    /// The setting at which the transport map is the identity.
    pub const NEUTRAL: MachineParams = MachineParams([0.0; N_PARAMS]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|p| p.is_finite())
    }

    /// Indices of components outside `ranges`.
    pub fn out_of_range(&self, ranges: &ParamRanges) -> Vec<usize> {
        (0..N_PARAMS)
            .filter(|&i| {
                let (lo, hi) = ranges.0[i];
                !(lo..=hi).contains(&self.0[i])
            })
            .collect()
    }

    pub fn in_range(&self, ranges: &ParamRanges) -> bool {
        self.out_of_range(ranges).is_empty()
    }
}

impl Index<usize> for MachineParams {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Declared `[min, max]` range per machine parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamRanges(pub [(f64, f64); N_PARAMS]);

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges([(0.4, 1.2), (-0.5, 0.5), (-0.6, 0.6), (-0.5, 0.5), (0.0, 0.8)])
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "param range {i} = [{lo}, {hi}] is ill-formed"
                )));
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> MachineParams {
        MachineParams(core::array::from_fn(|i| 0.5 * (self.0[i].0 + self.0[i].1)))
    }

    pub fn half_width(&self, i: usize) -> f64 {
        0.5 * (self.0[i].1 - self.0[i].0)
    }
}

/// Point in the network's latent space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn zeros(n: usize) -> Self {
        LatentVector(alloc::vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise sum; both vectors must have the same length.
    pub fn checked_add(&self, other: &LatentVector) -> Result<LatentVector> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: other.len() });
        }
        Ok(LatentVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }
}

impl From<Vec<f64>> for LatentVector {
    fn from(v: Vec<f64>) -> Self {
        LatentVector(v)
    }
}
