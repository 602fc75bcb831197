//! Analytic ground truth: a 6D Gaussian-mixture beam pushed through
//! parameter-dependent linear transport, with exact projections.

mod bounds;
mod dataset;
mod drift;
mod pca;
mod project;
mod state;
mod transport;

pub use bounds::{check_drift_rate, check_lipschitz, check_variation, map_distance, BoundCheck, SystemBounds};
pub use dataset::{
    default_channels, generate_dataset, generate_record, render_record, DatasetConfig, GridConfig, SampleRecord,
};
pub use drift::{drift_trajectory, sample_drift, DriftSchedule, N_DRIFT};
pub use pca::{pca_shift_report, ComponentShift, PcaModel, DEFAULT_BINS};
pub use project::{project, project_with_mass, Projection, COVERAGE_THRESHOLD};
pub use state::{BeamFactors, BeamState, GaussianComponent, InitialStateRanges, N_FACTORS};
pub use transport::{apply_map, map_from_params, transport, TransportMap};
