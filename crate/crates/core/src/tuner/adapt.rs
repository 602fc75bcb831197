use alloc::format;
use alloc::vec::Vec;

use crate::axis::AxisPair;
use crate::beamsim::SampleRecord;
use crate::error::{Error, Result};
use crate::es::{cost_scale, es_step, EsConfig, EsState};
use crate::image::{mse_slices, ImageGrid, ProjectionSet};
use crate::net::{decode_raw, encode, inject_latent, NetworkWeights};
use crate::params::{LatentVector, MachineParams, N_PARAMS};
use crate::tuner::measure::MeasurementChannel;

/// Inputs the tuned model is run on: averages over the training data,
/// since the current true inputs are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleGuess {
    pub image: ImageGrid,
    pub params: MachineParams,
}

/// Pixelwise mean input image (renormalised to unit mass) and
/// componentwise mean machine parameters of `records`.
pub fn make_stale_guess(records: &[SampleRecord]) -> Result<StaleGuess> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let n = records.len() as f64;
    let mut px = alloc::vec![0.0; first.input.pixels().len()];
    let mut params = [0.0; N_PARAMS];
    for r in records {
        if !r.input.same_shape(&first.input) {
            return Err(Error::DimensionMismatch {
                left_width: first.input.width(),
                left_height: first.input.height(),
                right_width: r.input.width(),
                right_height: r.input.height(),
            });
        }
        for (a, b) in px.iter_mut().zip(r.input.pixels()) {
            *a += b;
        }
        for (a, b) in params.iter_mut().zip(&r.params.0) {
            *a += b;
        }
    }
    px.iter_mut().for_each(|p| *p /= n);
    params.iter_mut().for_each(|p| *p /= n);
    let mean = ImageGrid::new(first.input.width(), first.input.height(), px, *first.input.extent())?;
    Ok(StaleGuess { image: crate::image::normalize(&mean)?, params: MachineParams(params) })
}

/// Decoder evaluation around a fixed stale guess: the encoder runs once and
/// only `p_L = v_L + v_Lc` changes between calls.
#[derive(Debug, Clone)]
pub struct LatentCostModel<'w> {
    weights: &'w NetworkWeights,
    v_l: LatentVector,
    pair: AxisPair,
    channel: usize,
}

impl<'w> LatentCostModel<'w> {
    pub fn new(weights: &'w NetworkWeights, guess: &StaleGuess, pair: AxisPair) -> Result<Self> {
        let channel = weights
            .spec()
            .channels
            .iter()
            .position(|&p| p == pair)
            .ok_or_else(|| Error::ShapeMismatch(format!("network does not predict {pair}")))?;
        let v_l = encode(&guess.image, &guess.params, weights)?;
        Ok(LatentCostModel { weights, v_l, pair, channel })
    }

    pub fn v_l(&self) -> &LatentVector {
        &self.v_l
    }

    pub fn pair(&self) -> AxisPair {
        self.pair
    }

    /// Full predicted projection stack for a latent correction.
    pub fn predict(&self, v_lc: &LatentVector) -> Result<ProjectionSet> {
        let p = inject_latent(&self.v_l, v_lc)?;
        crate::net::decode(&p, self.weights)
    }

    /// `mse(predicted observable, measured)`.
    pub fn cost(&self, v_lc: &LatentVector, measured: &ImageGrid) -> Result<f64> {
        let n = self.weights.spec().output_size();
        if measured.width() != n || measured.height() != n {
            return Err(Error::DimensionMismatch {
                left_width: n,
                left_height: n,
                right_width: measured.width(),
                right_height: measured.height(),
            });
        }
        let p = inject_latent(&self.v_l, v_lc)?;
        let raw = decode_raw(&p, self.weights)?;
        let plane = &raw[self.channel * n * n..(self.channel + 1) * n * n];
        if plane.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prediction of {} at v_Lc = {:?}", self.pair, v_lc.0)));
        }
        Ok(mse_slices(plane, measured.pixels()))
    }
}

/// Observable cost of the prediction from `guess` corrected by `v_lc`,
/// against a measured image of `pair`. Raw (unnormalised) mse; [`adapt`]
/// divides by the run's initial cost before feeding the ES law.
pub fn cost_eval(weights: &NetworkWeights, guess: &StaleGuess, v_lc: &LatentVector, pair: AxisPair, measured: &ImageGrid) -> Result<f64> {
    LatentCostModel::new(weights, guess, pair)?.cost(v_lc, measured)
}

/// Worst cost reachable from `v_lc` by moving one latent coordinate by its
/// dither amplitude `sqrt(α/ω_i)` in either direction: the cost level the
/// dither alone can produce around a point.
pub fn dither_neighbourhood_cost(model: &LatentCostModel<'_>, es: &EsConfig, v_lc: &LatentVector, measured: &ImageGrid) -> Result<f64> {
    if v_lc.len() != es.dim() {
        return Err(Error::LengthMismatch { expected: es.dim(), found: v_lc.len() });
    }
    let mut worst = model.cost(v_lc, measured)?;
    for (i, w) in es.frequencies().into_iter().enumerate() {
        let a = crate::math::sqrt(es.alpha / w);
        for sign in [-1.0, 1.0] {
            let mut probe = v_lc.clone();
            probe.0[i] += sign * a;
            worst = worst.max(model.cost(&probe, measured)?);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TuningConfig {
    pub es: EsConfig,
    pub steps: usize,
    /// Full predicted stacks are kept every this many steps (and at the last step).
    pub snapshot_every: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig::latent_default(8)
    }
}

impl TuningConfig {
    pub fn latent_default(latent_dim: usize) -> Self {
        TuningConfig { es: EsConfig::latent_default(latent_dim), steps: 5000, snapshot_every: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        self.es.validate()?;
        if self.steps == 0 || self.snapshot_every == 0 {
            return Err(Error::InvalidConfig("tuning steps and snapshot interval must be positive".into()));
        }
        Ok(())
    }
}

/// One ES step of a tuning run: the observable cost measured at `t` with
/// correction `v_lc`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub cost: f64,
    pub v_lc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub v_lc: LatentVector,
    pub prediction: ProjectionSet,
}

#[derive(Debug, Clone)]
pub struct TuningTrajectory {
    pub observable: AxisPair,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Factor applied to raw costs before the ES law.
    pub cost_scale: f64,
    /// Set when a measurement fault stopped the run early.
    pub fault: Option<Error>,
    pub checksum_before: u64,
    pub checksum_after: u64,
}

impl TuningTrajectory {
    pub fn initial_cost(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.cost)
    }

    /// Mean raw observable cost over the last `fraction` of the steps.
    pub fn tail_cost(&self, fraction: f64) -> f64 {
        crate::es::tail_mean(&self.steps.iter().map(|s| s.cost).collect::<Vec<_>>(), fraction)
    }

    pub fn final_v_lc(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.v_lc.as_slice())
    }
}

/// Closes the loop: measure the observable at `t`, score the current
/// prediction, take one ES step on `v_Lc`. Weights are only borrowed.
///
/// A measurement or prediction fault stops the loop; the partial trajectory
/// is returned with `fault` set.
pub fn adapt(weights: &NetworkWeights, guess: &StaleGuess, cfg: &TuningConfig, channel: &mut dyn MeasurementChannel) -> Result<TuningTrajectory> {
    cfg.validate()?;
    let spec = weights.spec();
    if cfg.es.dim() != spec.latent_dim {
        return Err(Error::LengthMismatch { expected: spec.latent_dim, found: cfg.es.dim() });
    }
    let checksum_before = weights.checksum();
    let model = LatentCostModel::new(weights, guess, channel.observable_pair())?;
    let mut state = EsState::without_history(LatentVector::zeros(spec.latent_dim));
    let mut out = TuningTrajectory {
        observable: channel.observable_pair(),
        steps: Vec::with_capacity(cfg.steps),
        snapshots: Vec::with_capacity(cfg.steps / cfg.snapshot_every + 2),
        cost_scale: 1.0,
        fault: None,
        checksum_before,
        checksum_after: checksum_before,
    };
    for step in 0..cfg.steps {
        let t = state.t();
        let v_lc = state.v().clone();
        let measured = match channel.measure(t) {
            Ok(m) if m.pixels().iter().all(|p| p.is_finite()) => m,
            Ok(_) => {
                out.fault = Some(Error::MeasurementFault { t, cost: f64::NAN });
                break;
            }
            Err(e) => {
                out.fault = Some(e);
                break;
            }
        };
        let cost = match model.cost(&v_lc, &measured) {
            Ok(c) => c,
            Err(e) => {
                out.fault = Some(e);
                break;
            }
        };
        if step == 0 {
            out.cost_scale = cost_scale(cost);
        }
        if step % cfg.snapshot_every == 0 || step + 1 == cfg.steps {
            out.snapshots.push(Snapshot { step, t, v_lc: v_lc.clone(), prediction: model.predict(&v_lc)? });
        }
        out.steps.push(StepRecord { step, t, cost, v_lc: v_lc.0 });
        if let Err(e) = es_step(&mut state, cost * out.cost_scale, &cfg.es) {
            out.fault = Some(e);
            break;
        }
    }
    out.checksum_after = weights.checksum();
    Ok(out)
}
