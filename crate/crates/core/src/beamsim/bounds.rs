//! Sampled checks of the regularity the tuning loop relies on: transport is
//! Lipschitz in the machine setting, varies boundedly over the declared
//! ranges, and the drift moves no faster than a declared rate.

use crate::beamsim::drift::{DriftSchedule, N_DRIFT};
use crate::beamsim::transport::{map_from_params, TransportMap};
use crate::error::Result;
use crate::math;
use crate::params::{MachineParams, ParamRanges, N_PARAMS};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemBounds {
    /// Bound on `||T(p) - T(q)|| / |p - q|`.
    pub lipschitz_l: f64,
    /// Bound on `||T(p) - T(q)||` for `p, q` in range.
    pub variation_m: f64,
    /// Bound on the speed of the drift.
    pub drift_rate_mf: f64,
}

impl Default for SystemBounds {
    fn default() -> Self {
        SystemBounds { lipschitz_l: 4.5, variation_m: 5.0, drift_rate_mf: 5e-4 }
    }
}

/// Largest observed value of a sampled quantity against its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub samples: usize,
    pub max_observed: f64,
    pub bound: f64,
    pub violations: usize,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Spectral norm of the difference of two maps in homogeneous form, so
/// offsets count as well as matrices.
pub fn map_distance(a: &TransportMap, b: &TransportMap) -> f64 {
    let d = a.homogeneous() - b.homogeneous();
    d.singular_values().max()
}

fn sample_params(rng: &mut rng::Rng, ranges: &ParamRanges) -> MachineParams {
    MachineParams(core::array::from_fn(|i| rng::uniform(rng, ranges.0[i].0, ranges.0[i].1)))
}

fn record(check: &mut BoundCheck, value: f64) {
    check.samples += 1;
    check.max_observed = check.max_observed.max(value);
    if value > check.bound {
        check.violations += 1;
    }
}

/// Difference quotients over `samples` seeded pairs; half are wide chords
/// across the ranges, half are finite differences with step `1e-4`.
pub fn check_lipschitz(bounds: &SystemBounds, ranges: &ParamRanges, samples: usize, seed: u64) -> Result<BoundCheck> {
    let mut rng = rng::stream(seed, 0x11);
    let mut check = BoundCheck { samples: 0, max_observed: 0.0, bound: bounds.lipschitz_l, violations: 0 };
    for i in 0..samples {
        let p = sample_params(&mut rng, ranges);
        let q = if i % 2 == 0 {
            sample_params(&mut rng, ranges)
        } else {
            MachineParams(core::array::from_fn(|k| p.0[k] + 1e-4 * rng::uniform(&mut rng, -1.0, 1.0)))
        };
        let dist = math::sqrt((0..N_PARAMS).map(|k| (p.0[k] - q.0[k]) * (p.0[k] - q.0[k])).sum());
        if dist == 0.0 {
            continue;
        }
        let d = map_distance(&map_from_params(&p)?, &map_from_params(&q)?);
        record(&mut check, d / dist);
    }
    Ok(check)
}

/// `||T(p) - T(q)||` over seeded pairs inside the ranges.
pub fn check_variation(bounds: &SystemBounds, ranges: &ParamRanges, samples: usize, seed: u64) -> Result<BoundCheck> {
    let mut rng = rng::stream(seed, 0x22);
    let mut check = BoundCheck { samples: 0, max_observed: 0.0, bound: bounds.variation_m, violations: 0 };
    for _ in 0..samples {
        let p = sample_params(&mut rng, ranges);
        let q = sample_params(&mut rng, ranges);
        record(&mut check, map_distance(&map_from_params(&p)?, &map_from_params(&q)?));
    }
    Ok(check)
}

/// Central-difference speed of the drift at seeded times in one period.
pub fn check_drift_rate(bounds: &SystemBounds, schedule: &DriftSchedule, samples: usize, seed: u64) -> BoundCheck {
    let mut rng = rng::stream(seed, 0x33);
    let mut check = BoundCheck { samples: 0, max_observed: 0.0, bound: bounds.drift_rate_mf, violations: 0 };
    let h = schedule.period * 1e-6;
    for _ in 0..samples {
        let t = rng::uniform(&mut rng, h, schedule.period);
        let a = schedule.drift_vector(t + h);
        let b = schedule.drift_vector(t - h);
        let rate = math::sqrt((0..N_DRIFT).map(|k| math::powi((a[k] - b[k]) / (2.0 * h), 2)).sum());
        record(&mut check, rate);
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bounds_hold_over_thousand_samples() {
        let b = SystemBounds::default();
        let r = ParamRanges::default();
        let lip = check_lipschitz(&b, &r, 1000, 1).unwrap();
        assert!(lip.passed(), "{lip:?}");
        let var = check_variation(&b, &r, 1000, 2).unwrap();
        assert!(var.passed(), "{var:?}");
        let sched = DriftSchedule::default();
        let rate = check_drift_rate(&b, &sched, 1000, 3);
        assert!(rate.passed(), "{rate:?}");
        assert!(rate.max_observed <= sched.max_rate() * (1.0 + 1e-6));
    }

    #[test]
    fn tight_bound_is_violated() {
        let b = SystemBounds { lipschitz_l: 0.1, ..SystemBounds::default() };
        let lip = check_lipschitz(&b, &ParamRanges::default(), 50, 1).unwrap();
        assert!(!lip.passed());
    }
}
