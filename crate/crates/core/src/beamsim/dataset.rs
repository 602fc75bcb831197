use alloc::format;
use alloc::vec::Vec;

use crate::axis::{Axis, AxisPair};
use crate::beamsim::project::project_with_mass;
use crate::beamsim::state::{BeamFactors, BeamState, InitialStateRanges};
use crate::beamsim::transport::transport;
use crate::error::{Error, Result};
use crate::image::{Extent, ImageGrid, ProjectionSet};
use crate::params::{MachineParams, ParamRanges};
use crate::rng;

/// Image sizes and the fixed physical window of every axis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GridConfig {
    pub input_size: usize,
    /// Window of the input `(x, y)` image of the initial beam.
    pub input_extent: Extent,
    pub output_size: usize,
    /// `(min, max)` per axis in `(x, x', y, y', z, E)` order, for output channels.
    pub axis_extents: [(f64, f64); 6],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            input_size: 16,
            input_extent: Extent::symmetric(3.5, 3.5),
            output_size: 32,
            axis_extents: [(-6.0, 6.0); 6],
        }
    }
}

impl GridConfig {
    pub fn extent(&self, pair: AxisPair) -> Extent {
        let (a, b) = (self.axis_extents[pair.first().index()], self.axis_extents[pair.second().index()]);
        Extent::new(a.0, a.1, b.0, b.1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(Error::InvalidConfig("grid sizes must be positive".into()));
        }
        self.input_extent.validate()?;
        for (i, (lo, hi)) in self.axis_extents.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "extent of axis {} is [{lo}, {hi}]",
                    Axis::ALL[i]
                )));
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DatasetConfig {
    pub seed: u64,
    pub param_ranges: ParamRanges,
    pub state_ranges: InitialStateRanges,
    pub grid: GridConfig,
    pub channels: Vec<AxisPair>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 2021,
            param_ranges: ParamRanges::default(),
            state_ranges: InitialStateRanges::default(),
            grid: GridConfig::default(),
            channels: default_channels(),
        }
    }
}

/// `(x, x')`, `(y, y')` and `(z, E)` in channel order.
pub fn default_channels() -> Vec<AxisPair> {
    alloc::vec![AxisPair::X_XP, AxisPair::Y_YP, AxisPair::Z_E]
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.param_ranges.validate()?;
        self.state_ranges.validate()?;
        self.grid.validate()?;
        if self.channels.is_empty() {
            return Err(Error::InvalidConfig("no output channels configured".into()));
        }
        Ok(())
    }
}

/// One training example: the initial `(x, y)` image and machine setting,
/// and the transported projections the network should predict.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleRecord {
    pub input: ImageGrid,
    pub params: MachineParams,
    pub outputs: ProjectionSet,
    pub factors: BeamFactors,
    /// Smallest mass fraction captured by any of the record's windows.
    pub min_captured_mass: f64,
}

/// Renders the input image and every configured channel for a beam and setting.
pub fn render_record(
    cfg: &DatasetConfig,
    factors: BeamFactors,
    initial: &BeamState,
    params: MachineParams,
) -> Result<SampleRecord> {
    let g = &cfg.grid;
    let input = project_with_mass(initial, AxisPair::X_Y, g.input_size, g.input_size, g.input_extent)?;
    let out_state = transport(initial, &params)?;
    let mut min_mass = input.captured_mass;
    let mut channels = Vec::with_capacity(cfg.channels.len());
    for &pair in &cfg.channels {
        let p = project_with_mass(&out_state, pair, g.output_size, g.output_size, g.extent(pair))?;
        min_mass = min_mass.min(p.captured_mass);
        channels.push((pair, p.image));
    }
    Ok(SampleRecord {
        input: input.image,
        params,
        outputs: ProjectionSet::new(channels)?,
        factors,
        min_captured_mass: min_mass,
    })
}

/// Record `index` of the dataset; a pure function of `(cfg, index)`.
pub fn generate_record(cfg: &DatasetConfig, index: u64) -> Result<SampleRecord> {
    let mut rng = rng::stream(cfg.seed, index);
    let factors = cfg.state_ranges.sample(&mut rng);
    let params = MachineParams(core::array::from_fn(|i| {
        let (lo, hi) = cfg.param_ranges.0[i];
        rng::uniform(&mut rng, lo, hi)
    }));
    let initial = factors.to_state()?;
    render_record(cfg, factors, &initial, params)
}

/// `n` records for `cfg`; reproducible from the seed.
pub fn generate_dataset(cfg: &DatasetConfig, n: usize) -> Result<Vec<SampleRecord>> {
    cfg.validate()?;
    (0..n as u64).map(|i| generate_record(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            grid: GridConfig { input_size: 8, output_size: 8, ..GridConfig::default() },
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn record_is_deterministic() {
        let cfg = small();
        assert_eq!(generate_record(&cfg, 3).unwrap(), generate_record(&cfg, 3).unwrap());
        assert_ne!(generate_record(&cfg, 3).unwrap(), generate_record(&cfg, 4).unwrap());
    }

    #[test]
    fn hundred_records_have_in_range_params_and_unit_mass() {
        let cfg = small();
        let data = generate_dataset(&cfg, 100).unwrap();
        assert_eq!(data.len(), 100);
        for r in &data {
            assert!(r.params.in_range(&cfg.param_ranges));
            assert!((r.input.sum() - 1.0).abs() < 1e-9);
            for (_, img) in r.outputs.iter() {
                assert!((img.sum() - 1.0).abs() < 1e-9);
            }
            assert_eq!(r.outputs.len(), 3);
        }
    }

    #[test]
    fn default_windows_capture_the_training_beams() {
        let cfg = DatasetConfig::default();
        for i in 0..40 {
            let r = generate_record(&cfg, i).unwrap();
            assert!(r.min_captured_mass > 0.99, "record {i}: {}", r.min_captured_mass);
        }
    }
}
