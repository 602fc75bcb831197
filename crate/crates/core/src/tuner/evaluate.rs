use alloc::vec::Vec;

use crate::axis::AxisPair;
use crate::beamsim::GridConfig;
use crate::error::{Error, Result};
use crate::image::{mse, ProjectionSet};
use crate::params::LatentVector;
use crate::tuner::adapt::{LatentCostModel, Snapshot, TuningTrajectory};
use crate::tuner::measure::DriftingSource;

/// Ground truth for the hidden projections. Lives outside the control loop:
/// [`crate::tuner::adapt`] never receives one.
#[derive(Debug, Clone)]
pub struct HiddenEvaluator {
    source: DriftingSource,
    grid: GridConfig,
    pairs: Vec<AxisPair>,
}

impl HiddenEvaluator {
    pub fn new(source: DriftingSource, grid: GridConfig, pairs: Vec<AxisPair>) -> Self {
        HiddenEvaluator { source, grid, pairs }
    }

    pub fn pairs(&self) -> &[AxisPair] {
        &self.pairs
    }

    /// True projections of the hidden pairs at time `t`.
    pub fn truth_at(&self, t: f64) -> Result<(f64, ProjectionSet)> {
        let channels = self
            .pairs
            .iter()
            .map(|&p| Ok((p, self.source.projection_at(t, p, &self.grid)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((t, ProjectionSet::new(channels)?))
    }

    /// Truth at every snapshot time.
    pub fn truths_for(&self, snapshots: &[Snapshot]) -> Result<Vec<(f64, ProjectionSet)>> {
        snapshots.iter().map(|s| self.truth_at(s.t)).collect()
    }

    /// Hidden-pair mse series of the snapshots.
    pub fn evaluate(&self, snapshots: &[Snapshot]) -> Result<HiddenSeries> {
        evaluate_hidden(snapshots, &self.truths_for(snapshots)?, &self.pairs)
    }
}

/// Per-pair mse between prediction and truth at each snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSeries {
    pub pairs: Vec<AxisPair>,
    pub times: Vec<f64>,
    /// `mse[k][i]`: pair `k` at snapshot `i`.
    pub mse: Vec<Vec<f64>>,
}

impl HiddenSeries {
    /// Mean mse of pair `k` over the last `fraction` of the snapshots.
    pub fn tail_mean(&self, k: usize, fraction: f64) -> f64 {
        crate::es::tail_mean(&self.mse[k], fraction)
    }
}

/// Scores predictions against truths taken at the same instants.
pub fn evaluate_hidden(snapshots: &[Snapshot], truths: &[(f64, ProjectionSet)], pairs: &[AxisPair]) -> Result<HiddenSeries> {
    if snapshots.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: snapshots.len(), found: truths.len() });
    }
    let mut series = alloc::vec![Vec::with_capacity(snapshots.len()); pairs.len()];
    for (s, (t, truth)) in snapshots.iter().zip(truths) {
        if (s.t - t).abs() > 1e-9 * s.t.abs().max(1.0) {
            return Err(Error::TimestampMismatch { expected: s.t, found: *t });
        }
        for (k, &pair) in pairs.iter().enumerate() {
            let (p, q) = match (s.prediction.get(pair), truth.get(pair)) {
                (Some(p), Some(q)) => (p, q),
                _ => return Err(Error::ShapeMismatch(alloc::format!("pair {pair} missing from prediction or truth"))),
            };
            series[k].push(mse(p, q)?);
        }
    }
    Ok(HiddenSeries { pairs: pairs.to_vec(), times: snapshots.iter().map(|s| s.t).collect(), mse: series })
}

/// Untuned (`v_Lc = 0`) predictions at the snapshot times of a run.
pub fn baseline_snapshots(model: &LatentCostModel<'_>, run: &TuningTrajectory) -> Result<Vec<Snapshot>> {
    let zero = LatentVector::zeros(model.v_l().len());
    let prediction = model.predict(&zero)?;
    Ok(run
        .snapshots
        .iter()
        .map(|s| Snapshot { step: s.step, t: s.t, v_lc: zero.clone(), prediction: prediction.clone() })
        .collect())
}

/// Headline numbers of one tuning run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningSummary {
    pub steps: usize,
    pub initial_cost: f64,
    /// Mean observable cost over the last 10% of steps.
    pub final_cost: f64,
    pub hidden_pairs: Vec<AxisPair>,
    /// Untuned hidden mse over the last 10% of snapshots, per pair.
    pub baseline_hidden: Vec<f64>,
    /// Tuned hidden mse over the last 10% of snapshots, per pair.
    pub tuned_hidden: Vec<f64>,
    /// Untuned hidden mse at the first snapshot.
    pub initial_hidden: Vec<f64>,
    pub weights_unchanged: bool,
    pub faulted: bool,
}

/// Fraction of the run treated as its final, time-averaged part.
pub const FINAL_FRACTION: f64 = 0.1;

impl TuningSummary {
    pub fn new(run: &TuningTrajectory, tuned: &HiddenSeries, baseline: &HiddenSeries) -> Self {
        let k = tuned.pairs.len();
        TuningSummary {
            steps: run.steps.len(),
            initial_cost: run.initial_cost(),
            final_cost: run.tail_cost(FINAL_FRACTION),
            hidden_pairs: tuned.pairs.clone(),
            baseline_hidden: (0..k).map(|i| baseline.tail_mean(i, FINAL_FRACTION)).collect(),
            tuned_hidden: (0..k).map(|i| tuned.tail_mean(i, FINAL_FRACTION)).collect(),
            initial_hidden: (0..k).map(|i| tuned.mse[i].first().copied().unwrap_or(f64::NAN)).collect(),
            weights_unchanged: run.checksum_before == run.checksum_after,
            faulted: run.fault.is_some(),
        }
    }

    /// Final observable cost as a fraction of the step-0 cost.
    pub fn cost_ratio(&self) -> f64 {
        self.final_cost / self.initial_cost
    }

    /// Mean of the tuned final hidden mse over pairs.
    pub fn mean_tuned_hidden(&self) -> f64 {
        self.tuned_hidden.iter().sum::<f64>() / self.tuned_hidden.len().max(1) as f64
    }

    pub fn hidden_improved(&self) -> bool {
        self.tuned_hidden.iter().zip(&self.baseline_hidden).all(|(t, b)| t < b)
    }
}
