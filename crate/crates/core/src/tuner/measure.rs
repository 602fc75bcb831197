use crate::axis::AxisPair;
use crate::beamsim::{drift_trajectory, project, transport, BeamFactors, BeamState, DriftSchedule, GridConfig};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::math;
use crate::params::MachineParams;
use crate::rng::{self, Rng};

/// The true system: a beam and machine setting that drift with time.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftingSource {
    factors: BeamFactors,
    params: MachineParams,
    drift: DriftSchedule,
    base_state: BeamState,
}

impl DriftingSource {
    pub fn new(factors: BeamFactors, params: MachineParams, drift: DriftSchedule) -> Result<Self> {
        drift.validate()?;
        if !params.is_finite() {
            return Err(Error::NonFinite(alloc::format!("source parameters {:?}", params.0)));
        }
        let base_state = factors.to_state()?;
        Ok(DriftingSource { factors, params, drift, base_state })
    }

    pub fn factors(&self) -> &BeamFactors {
        &self.factors
    }

    pub fn params(&self) -> &MachineParams {
        &self.params
    }

    pub fn drift(&self) -> &DriftSchedule {
        &self.drift
    }

    /// Initial beam and machine setting at time `t`.
    pub fn state_at(&self, t: f64) -> Result<(BeamState, MachineParams)> {
        drift_trajectory(t, &self.drift, &self.base_state, &self.params)
    }

    /// Exact projection of the transported beam on `pair` at time `t`.
    pub fn projection_at(&self, t: f64, pair: AxisPair, grid: &GridConfig) -> Result<ImageGrid> {
        let (state, params) = self.state_at(t)?;
        let out = transport(&state, &params)?;
        project(&out, pair, grid.output_size, grid.output_size, grid.extent(pair))
    }
}

/// What the controller may observe: one image of one fixed projection per
/// query. Nothing else about the system crosses this interface.
pub trait MeasurementChannel {
    fn observable_pair(&self) -> AxisPair;
    fn measure(&mut self, t: f64) -> Result<ImageGrid>;
}

/// Measurement of the observable projection of a [`DriftingSource`], with
/// optional additive Gaussian noise (standard deviation `noise` times the
/// mean pixel value, clipped at zero).
#[derive(Debug, Clone)]
pub struct OracleMeasurement {
    source: DriftingSource,
    pair: AxisPair,
    grid: GridConfig,
    noise: f64,
    rng: Rng,
}

impl OracleMeasurement {
    pub fn new(source: DriftingSource, pair: AxisPair, grid: GridConfig) -> Self {
        OracleMeasurement { source, pair, grid, noise: 0.0, rng: rng::stream(0, 0) }
    }

    pub fn with_noise(mut self, noise: f64, seed: u64) -> Self {
        self.noise = noise;
        self.rng = rng::stream(seed, 0x4e01);
        self
    }
}

impl MeasurementChannel for OracleMeasurement {
    fn observable_pair(&self) -> AxisPair {
        self.pair
    }

    fn measure(&mut self, t: f64) -> Result<ImageGrid> {
        let img = self.source.projection_at(t, self.pair, &self.grid)?;
        if self.noise == 0.0 {
            return Ok(img);
        }
        let sigma = self.noise * img.sum() / img.pixels().len() as f64;
        let (w, h, extent) = (img.width(), img.height(), *img.extent());
        let px = img
            .into_pixels()
            .into_iter()
            .map(|p| (p + sigma * gaussian(&mut self.rng)).max(0.0))
            .collect();
        ImageGrid::new(w, h, px, extent)
    }
}

/// Standard normal draw by Box-Muller.
fn gaussian(r: &mut Rng) -> f64 {
    let u1 = 1.0 - rng::uniform(r, 0.0, 1.0);
    let u2 = rng::uniform(r, 0.0, 1.0);
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(core::f64::consts::TAU * u2)
}
