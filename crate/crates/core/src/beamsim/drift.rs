//! Smooth periodic drift of the initial beam and the machine setting.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::Vector6;

use crate::beamsim::state::{BeamState, GaussianComponent};
use crate::error::{Error, Result};
use crate::math;
use crate::params::{MachineParams, N_PARAMS};

/// Number of independently drifting scalars: five machine parameters, six
/// centroid coordinates and one beam-size scale.
pub const N_DRIFT: usize = N_PARAMS + 6 + 1;

/// Each drifting quantity follows `A_k (sin(2πt/period + φ_k) - sin φ_k)`,
/// which vanishes at `t = 0` and repeats with `period`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DriftSchedule {
    pub period: f64,
    pub param_amplitudes: [f64; N_PARAMS],
    /// Centroid drift per axis.
    pub mean_amplitudes: [f64; 6],
    /// Relative drift of every component's size; must stay below 0.5.
    pub scale_amplitude: f64,
    pub phases: [f64; N_DRIFT],
}

impl Default for DriftSchedule {
    fn default() -> Self {
        DriftSchedule {
            period: 1000.0,
            param_amplitudes: [0.02, 0.02, 0.02, 0.02, 0.02],
            mean_amplitudes: [0.03, 0.0, 0.03, 0.0, 0.03, 0.02],
            scale_amplitude: 0.02,
            phases: [0.0, 0.7, 1.4, 2.1, 2.8, 0.3, 1.0, 1.7, 2.4, 3.1, 3.8, 4.5],
        }
    }
}

impl DriftSchedule {
    /// No drift at all.
    pub fn frozen() -> Self {
        DriftSchedule {
            param_amplitudes: [0.0; N_PARAMS],
            mean_amplitudes: [0.0; 6],
            scale_amplitude: 0.0,
            ..DriftSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("drift period {} must be positive", self.period)));
        }
        if !(self.scale_amplitude.abs() < 0.5) {
            return Err(Error::InvalidConfig("drift scale amplitude must be below 0.5".into()));
        }
        Ok(())
    }

    fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.param_amplitudes
            .iter()
            .chain(&self.mean_amplitudes)
            .chain(core::iter::once(&self.scale_amplitude))
            .copied()
    }

    /// Displacement of every drifting scalar at time `t`.
    pub fn drift_vector(&self, t: f64) -> [f64; N_DRIFT] {
        let w = TAU / self.period;
        let mut out = [0.0; N_DRIFT];
        for (k, a) in self.amplitudes().enumerate() {
            let phi = self.phases[k];
            out[k] = if a == 0.0 { 0.0 } else { a * (math::sin(w * t + phi) - math::sin(phi)) };
        }
        out
    }

    /// Analytic bound on `|d/dt drift_vector|`.
    pub fn max_rate(&self) -> f64 {
        let w = TAU / self.period;
        w * math::sqrt(self.amplitudes().map(|a| a * a).sum())
    }
}

/// Beam and machine setting at time `t` under `schedule`.
pub fn drift_trajectory(
    t: f64,
    schedule: &DriftSchedule,
    base_state: &BeamState,
    base_params: &MachineParams,
) -> Result<(BeamState, MachineParams)> {
    if !(t >= 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("drift time {t} must be non-negative")));
    }
    let d = schedule.drift_vector(t);
    if d.iter().all(|v| *v == 0.0) {
        return Ok((base_state.clone(), *base_params));
    }
    let params = MachineParams(core::array::from_fn(|i| base_params.0[i] + d[i]));
    let shift = Vector6::from_iterator(d[N_PARAMS..N_PARAMS + 6].iter().copied());
    let s = 1.0 + d[N_DRIFT - 1];
    let state = base_state.map_components(|c| GaussianComponent {
        weight: c.weight,
        mean: c.mean + shift,
        cov: c.cov * (s * s),
    })?;
    Ok((state, params))
}

/// Samples `drift_vector` at `times` (used by bound checks and reports).
pub fn sample_drift(schedule: &DriftSchedule, times: &[f64]) -> Vec<[f64; N_DRIFT]> {
    times.iter().map(|&t| schedule.drift_vector(t)).collect()
}
