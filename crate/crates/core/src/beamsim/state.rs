use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix6, Vector2, Vector6};

use crate::axis::AxisPair;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{self, Rng};

/// One Gaussian in a 6D mixture, axis order `(x, x', y, y', z, E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

impl GaussianComponent {
    /// Mean and covariance of the 2D marginal on `pair`.
    pub fn marginal(&self, pair: AxisPair) -> (Vector2<f64>, Matrix2<f64>) {
        let (a, b) = (pair.first().index(), pair.second().index());
        (
            Vector2::new(self.mean[a], self.mean[b]),
            Matrix2::new(self.cov[(a, a)], self.cov[(a, b)], self.cov[(b, a)], self.cov[(b, b)]),
        )
    }
}

/// A 6D phase-space density represented as a Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    components: Vec<GaussianComponent>,
}

impl BeamState {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidState("mixture has no components".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("weights sum to {total}, not 1")));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidState(format!("component {i} weight {} outside (0,1]", c.weight)));
            }
            if c.mean.iter().chain(c.cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidState(format!("component {i} has non-finite entries")));
            }
            let asym = (c.cov - c.cov.transpose()).amax();
            if asym > 1e-10 {
                return Err(Error::InvalidState(format!("component {i} covariance asymmetric by {asym:e}")));
            }
            if c.cov.cholesky().is_none() {
                return Err(Error::InvalidState(format!("component {i} covariance is not positive-definite")));
            }
        }
        Ok(BeamState { components })
    }

    /// A single Gaussian with unit weight.
    pub fn gaussian(mean: Vector6<f64>, cov: Matrix6<f64>) -> Result<Self> {
        BeamState::new(alloc::vec![GaussianComponent { weight: 1.0, mean, cov }])
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Overall first moment of the mixture.
    pub fn mean(&self) -> Vector6<f64> {
        self.components.iter().fold(Vector6::zeros(), |acc, c| acc + c.mean * c.weight)
    }

    /// Applies `f` to every component and revalidates.
    pub(crate) fn map_components(
        &self,
        mut f: impl FnMut(&GaussianComponent) -> GaussianComponent,
    ) -> Result<BeamState> {
        BeamState::new(self.components.iter().map(&mut f).collect())
    }
}

pub const N_FACTORS: usize = 6;

/// Scalar knobs that generate an initial beam: overall size scale,
/// separation of the two side lobes, weight asymmetry between them,
/// in-plane position-angle correlation, and transverse centroid offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct BeamFactors(pub [f64; N_FACTORS]);

impl BeamFactors {
    pub const NAMES: [&'static str; N_FACTORS] =
        ["scale", "separation", "asymmetry", "correlation", "x_offset", "y_offset"];

    pub fn scale(&self) -> f64 {
        self.0[0]
    }
    pub fn separation(&self) -> f64 {
        self.0[1]
    }
    pub fn asymmetry(&self) -> f64 {
        self.0[2]
    }
    pub fn correlation(&self) -> f64 {
        self.0[3]
    }
    pub fn x_offset(&self) -> f64 {
        self.0[4]
    }
    pub fn y_offset(&self) -> f64 {
        self.0[5]
    }

    /// Expected centroid of the generated mixture: the side lobes sit
    /// symmetrically about the offset, so only the weight asymmetry moves it.
    pub fn expected_mean(&self) -> Vector6<f64> {
        let mut m = Vector6::new(self.x_offset(), 0.0, self.y_offset(), 0.0, 0.0, 0.0);
        m += lobe_direction() * (2.0 * SIDE_WEIGHT * self.asymmetry() * self.separation());
        m
    }

    /// Three-component mixture: a core at the offset plus two side lobes
    /// displaced along a fixed direction that touches every plane.
    pub fn to_state(&self) -> Result<BeamState> {
        let s = self.scale();
        let rho = self.correlation();
        if !(s > 0.0) || !(rho.abs() < 1.0) || !(self.asymmetry().abs() < 1.0) {
            return Err(Error::InvalidState(format!("beam factors out of physical range: {:?}", self.0)));
        }
        let offset = Vector6::new(self.x_offset(), 0.0, self.y_offset(), 0.0, 0.0, 0.0);
        let lobe = lobe_direction() * self.separation();
        let a = self.asymmetry();
        let comps = alloc::vec![
            GaussianComponent {
                weight: 1.0 - 2.0 * SIDE_WEIGHT,
                mean: offset,
                cov: plane_covariance(CORE_SIGMA * s, rho),
            },
            GaussianComponent {
                weight: SIDE_WEIGHT * (1.0 + a),
                mean: offset + lobe,
                cov: plane_covariance(LOBE_SIGMA * s, rho),
            },
            GaussianComponent {
                weight: SIDE_WEIGHT * (1.0 - a),
                mean: offset - lobe,
                cov: plane_covariance(LOBE_SIGMA * s, -rho),
            },
        ];
        BeamState::new(comps)
    }
}

const SIDE_WEIGHT: f64 = 0.25;
const CORE_SIGMA: f64 = 0.55;
const LOBE_SIGMA: f64 = 0.4;

fn lobe_direction() -> Vector6<f64> {
    Vector6::new(1.0, 0.5, -0.8, 0.4, 1.0, -0.6).normalize()
}

// Block-diagonal covariance with equal widths and one correlation per plane.
fn plane_covariance(sigma: f64, rho: f64) -> Matrix6<f64> {
    let mut cov = Matrix6::zeros();
    let var = sigma * sigma;
    for plane in 0..3 {
        let (i, j) = (2 * plane, 2 * plane + 1);
        cov[(i, i)] = var;
        cov[(j, j)] = var;
        cov[(i, j)] = rho * var;
        cov[(j, i)] = rho * var;
    }
    cov
}

/// Sampling ranges for [`BeamFactors`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct InitialStateRanges(pub [(f64, f64); N_FACTORS]);

impl Default for InitialStateRanges {
    fn default() -> Self {
        InitialStateRanges([(0.8, 1.2), (0.6, 1.4), (-0.5, 0.5), (-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3)])
    }
}

impl InitialStateRanges {
    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "initial-state range {} = [{lo}, {hi}] is ill-formed",
                    BeamFactors::NAMES[i]
                )));
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> BeamFactors {
        BeamFactors(core::array::from_fn(|i| 0.5 * (self.0[i].0 + self.0[i].1)))
    }

    pub fn sample(&self, rng: &mut Rng) -> BeamFactors {
        BeamFactors(core::array::from_fn(|i| rng::uniform(rng, self.0[i].0, self.0[i].1)))
    }
}

/// Smallest eigenvalue of a symmetric 2x2 matrix.
pub(crate) fn min_eigenvalue_2x2(m: &Matrix2<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let diff = m[(0, 0)] - m[(1, 1)];
    0.5 * (tr - math::sqrt(diff * diff + 4.0 * m[(0, 1)] * m[(1, 0)]))
}
