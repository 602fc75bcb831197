use alloc::vec::Vec;

use crate::beamsim::{pca_shift_report, BeamFactors, ComponentShift, DatasetConfig, DriftSchedule, InitialStateRanges, N_FACTORS};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::params::{MachineParams, ParamRanges, N_PARAMS};
use crate::rng;
use crate::tuner::measure::DriftingSource;

/// Number of shifted coordinates: beam factors then machine parameters.
pub const N_SHIFTED: usize = N_FACTORS + N_PARAMS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShiftKind {
    None,
    Near,
    Far,
}

impl ShiftKind {
    pub fn label(self) -> &'static str {
        match self {
            ShiftKind::None => "none",
            ShiftKind::Near => "near",
            ShiftKind::Far => "far",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ShiftKind::None),
            "near" => Some(ShiftKind::Near),
            "far" => Some(ShiftKind::Far),
            _ => None,
        }
    }
}

impl core::fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

/// Distance multipliers of the shifted sources, in units of the training
/// half-width measured from the range midpoint (1 is the range edge).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ShiftConfig {
    pub near: f64,
    pub far: f64,
    /// Half-width of each scenario's test ranges, in training half-widths.
    pub spread: f64,
    pub test_samples: usize,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig { near: 1.1, far: 1.5, spread: 0.1, test_samples: 1000 }
    }
}

impl ShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 1.0 && self.far >= self.near && self.far.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "shift multipliers must satisfy 1 < near <= far, got near={} far={}",
                self.near,
                self.far
            )));
        }
        if !(self.spread >= 0.0 && self.spread < self.near - 1.0 + 1e-12) {
            return Err(Error::InvalidConfig(alloc::format!(
                "shift spread {} must keep the near test ranges outside the training ranges",
                self.spread
            )));
        }
        Ok(())
    }

    pub fn multiplier(&self, kind: ShiftKind) -> f64 {
        match kind {
            ShiftKind::None => 0.0,
            ShiftKind::Near => self.near,
            ShiftKind::Far => self.far,
        }
    }
}

/// A shifted true system and the ranges its test population is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftScenario {
    pub kind: ShiftKind,
    pub multiplier: f64,
    /// Direction (±1) of the shift per coordinate.
    pub signs: [f64; N_SHIFTED],
    pub factors: BeamFactors,
    pub params: MachineParams,
    pub state_ranges: InitialStateRanges,
    pub param_ranges: ParamRanges,
}

fn shifted(lo: f64, hi: f64, sign: f64, m: f64) -> f64 {
    0.5 * (lo + hi) + sign * m * 0.5 * (hi - lo)
}

fn shifted_range(lo: f64, hi: f64, sign: f64, m: f64, spread: f64) -> (f64, f64) {
    let a = shifted(lo, hi, sign, m - spread);
    let b = shifted(lo, hi, sign, m + spread);
    (a.min(b), a.max(b))
}

/// Scenario of `kind` for training config `train`; the shift direction is
/// drawn from `seed` and shared by the near and far scenarios.
pub fn scenario(kind: ShiftKind, train: &DatasetConfig, shift: &ShiftConfig, seed: u64) -> Result<ShiftScenario> {
    shift.validate()?;
    let mut r = rng::stream(seed, 0x5417_f7);
    let signs: [f64; N_SHIFTED] = core::array::from_fn(|_| if rng::uniform(&mut r, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 });
    if kind == ShiftKind::None {
        return Ok(ShiftScenario {
            kind,
            multiplier: 0.0,
            signs,
            factors: train.state_ranges.midpoint(),
            params: train.param_ranges.midpoint(),
            state_ranges: train.state_ranges,
            param_ranges: train.param_ranges,
        });
    }
    let m = shift.multiplier(kind);
    let sr = &train.state_ranges.0;
    let pr = &train.param_ranges.0;
    let factors = BeamFactors(core::array::from_fn(|i| shifted(sr[i].0, sr[i].1, signs[i], m)));
    let params = MachineParams(core::array::from_fn(|i| shifted(pr[i].0, pr[i].1, signs[N_FACTORS + i], m)));
    let state_ranges =
        InitialStateRanges(core::array::from_fn(|i| shifted_range(sr[i].0, sr[i].1, signs[i], m, shift.spread)));
    let param_ranges =
        ParamRanges(core::array::from_fn(|i| shifted_range(pr[i].0, pr[i].1, signs[N_FACTORS + i], m, shift.spread)));
    Ok(ShiftScenario { kind, multiplier: m, signs, factors, params, state_ranges, param_ranges })
}

/// Near and far scenarios sharing one shift direction.
pub fn shift_scenarios(train: &DatasetConfig, shift: &ShiftConfig, seed: u64) -> Result<(ShiftScenario, ShiftScenario)> {
    Ok((scenario(ShiftKind::Near, train, shift, seed)?, scenario(ShiftKind::Far, train, shift, seed)?))
}

impl ShiftScenario {
    /// The drifting true system of this scenario.
    pub fn source(&self, drift: DriftSchedule) -> Result<DriftingSource> {
        DriftingSource::new(self.factors, self.params, drift)
    }

    /// Dataset config drawing this scenario's test population.
    pub fn test_config(&self, train: &DatasetConfig, seed: u64) -> DatasetConfig {
        DatasetConfig {
            seed,
            state_ranges: self.state_ranges,
            param_ranges: self.param_ranges,
            ..train.clone()
        }
    }

    /// Indices of shifted coordinates lying outside the training ranges.
    pub fn out_of_range(&self, train: &DatasetConfig) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..N_FACTORS {
            let (lo, hi) = train.state_ranges.0[i];
            if self.factors.0[i] < lo || self.factors.0[i] > hi {
                out.push(i);
            }
        }
        for i in self.params.out_of_range(&train.param_ranges) {
            out.push(N_FACTORS + i);
        }
        out
    }
}

/// PCA comparison of a scenario's test images with the training images.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCheck {
    pub report: Vec<ComponentShift>,
    pub min_overlap: f64,
    /// Overlap on the leading component.
    pub dominant_overlap: f64,
}

impl ScenarioCheck {
    /// Out of distribution: overlap below 0.9 on at least one component.
    pub fn is_shifted(&self) -> bool {
        self.min_overlap < 0.9
    }
}

pub fn check_scenario(train: &[ImageGrid], test: &[ImageGrid], n_components: usize, bins: usize) -> Result<ScenarioCheck> {
    let report = pca_shift_report(train, test, n_components, bins)?;
    let min_overlap = report.iter().map(|c| c.overlap).fold(f64::INFINITY, f64::min);
    let dominant_overlap = report.first().map_or(f64::NAN, |c| c.overlap);
    Ok(ScenarioCheck { report, min_overlap, dominant_overlap })
}
