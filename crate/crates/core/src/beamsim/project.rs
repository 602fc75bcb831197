use alloc::vec;
use alloc::vec::Vec;

use crate::axis::AxisPair;
use crate::beamsim::state::{min_eigenvalue_2x2, BeamState};
use crate::error::{Error, Result};
use crate::image::{Extent, ImageGrid};
use crate::math;

/// Minimum fraction of mixture mass an extent must capture before a
/// projection is flagged as clipped.
pub const COVERAGE_THRESHOLD: f64 = 0.99;

/// A normalized projection together with the raw mass its extent captured.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub image: ImageGrid,
    pub captured_mass: f64,
}

impl Projection {
    pub fn is_clipped(&self) -> bool {
        self.captured_mass < COVERAGE_THRESHOLD
    }
}

/// Exact per-cell mass of the 2D marginal on `pair`, normalized to sum to one.
pub fn project(state: &BeamState, pair: AxisPair, width: usize, height: usize, extent: Extent) -> Result<ImageGrid> {
    project_with_mass(state, pair, width, height, extent).map(|p| p.image)
}

/// Like [`project`], but also reports how much mass fell inside the extent.
///
/// Cell masses come from inclusion-exclusion over the bivariate normal CDF
/// evaluated at the cell corners, so coarse grids carry no discretisation bias.
pub fn project_with_mass(
    state: &BeamState,
    pair: AxisPair,
    width: usize,
    height: usize,
    extent: Extent,
) -> Result<Projection> {
    extent.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(alloc::format!("empty grid {width}x{height}")));
    }
    let col_edges: Vec<f64> = edges(extent.x_min, extent.x_max, width);
    let row_edges: Vec<f64> = edges(extent.y_min, extent.y_max, height);

    let mut mass = vec![0.0; width * height];
    let mut corners = vec![0.0; (width + 1) * (height + 1)];
    for comp in state.components() {
        let (mu, cov) = comp.marginal(pair);
        let min_eig = min_eigenvalue_2x2(&cov);
        if !(min_eig >= 1e-12) {
            return Err(Error::CollapsedProjection { pair, min_eigenvalue: min_eig });
        }
        let sa = math::sqrt(cov[(0, 0)]);
        let sb = math::sqrt(cov[(1, 1)]);
        let r = cov[(0, 1)] / (sa * sb);
        let us: Vec<f64> = col_edges.iter().map(|e| (e - mu[0]) / sa).collect();
        for (j, yb) in row_edges.iter().enumerate() {
            let v = (yb - mu[1]) / sb;
            for (i, &u) in us.iter().enumerate() {
                corners[j * (width + 1) + i] = math::bvn_cdf(u, v, r);
            }
        }
        for row in 0..height {
            for col in 0..width {
                let f = |i: usize, j: usize| corners[j * (width + 1) + i];
                let cell = f(col + 1, row + 1) - f(col, row + 1) - f(col + 1, row) + f(col, row);
                mass[row * width + col] += comp.weight * cell.max(0.0);
            }
        }
    }
    let captured: f64 = mass.iter().sum();
    if !(captured > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    for m in &mut mass {
        *m /= captured;
    }
    Ok(Projection { image: ImageGrid::new(width, height, mass, extent)?, captured_mass: captured })
}

fn edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * step }).collect()
}
