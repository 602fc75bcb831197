//! Adaptive latent-space tuning: the trained decoder is steered by ES using
//! only the observable projection of a drifting, shifted beam; the hidden
//! projections are scored by a separate evaluator the loop cannot reach.

mod adapt;
mod evaluate;
mod measure;
mod scenario;

pub use adapt::{adapt, cost_eval, dither_neighbourhood_cost, make_stale_guess, LatentCostModel, Snapshot, StaleGuess, StepRecord, TuningConfig, TuningTrajectory};
pub use evaluate::{FINAL_FRACTION, baseline_snapshots, evaluate_hidden, HiddenEvaluator, HiddenSeries, TuningSummary};
pub use measure::{DriftingSource, MeasurementChannel, OracleMeasurement};
pub use scenario::{check_scenario, scenario, shift_scenarios, ScenarioCheck, ShiftConfig, ShiftKind, ShiftScenario, N_SHIFTED};
