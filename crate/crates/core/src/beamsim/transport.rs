//! Parameter-dependent linear transport.
//!
//! The beamline analog is the composition, applied right to left,
//!
//! `A(p) = Coupling · Solenoid(p5) · Drift(p1) · Dispersion · Rotation(p2, p4) · Chirp(p3)`
//!
//! - `Chirp(p3)`: energy shear `E += p3 · z` (buncher peak field).
//! - `Rotation(p2, p4)`: rotation of the `(z, E)` plane by angle `p2` about
//!   the point `(z, E) = (p4, 0)`, the only stage that contributes an offset.
//! - `Dispersion` (fixed): `x += DISPERSION_X · E`, `y' += DISPERSION_YP · E`,
//!   so the transverse planes carry the longitudinal settings.
//! - `Drift(p1)`: transverse drifts `x += p1 · x'`, `y += p1 · y'` plus a
//!   longitudinal slip `z += SLIP_PER_ENERGY · p1 · E`.
//! - `Solenoid(p5)`: thin focusing lens of strength `FOCUS_PER_FIELD · p5`
//!   in both transverse planes followed by a Larmor rotation of `(x, y)` and
//!   `(x', y')` through `LARMOR_PER_FIELD · p5`.
//! - `Coupling` (fixed): `E += COUPLING_X · x + COUPLING_Y · y`, so the
//!   longitudinal plane carries the transverse state.
//!
//! Every stage has unit determinant. [`MachineParams::NEUTRAL`] leaves only
//! the fixed stages, `Coupling · Dispersion`.

use nalgebra::{Matrix6, Vector6};

use crate::beamsim::state::{BeamState, GaussianComponent};
use crate::error::{Error, Result};
use crate::math;
use crate::params::MachineParams;

pub const SLIP_PER_ENERGY: f64 = 0.5;
pub const FOCUS_PER_FIELD: f64 = 0.5;
pub const LARMOR_PER_FIELD: f64 = 0.6;
pub const DISPERSION_X: f64 = 1.0;
pub const DISPERSION_YP: f64 = 0.6;
pub const COUPLING_X: f64 = 0.8;
pub const COUPLING_Y: f64 = 0.6;

/// Affine phase-space map `u -> matrix · u + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub matrix: Matrix6<f64>,
    pub offset: Vector6<f64>,
}

impl TransportMap {
    pub fn identity() -> Self {
        TransportMap { matrix: Matrix6::identity(), offset: Vector6::zeros() }
    }

    pub fn new(matrix: Matrix6<f64>, offset: Vector6<f64>) -> Result<Self> {
        let det = matrix.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::NonInvertibleMap { det });
        }
        Ok(TransportMap { matrix, offset })
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &TransportMap) -> TransportMap {
        TransportMap {
            matrix: self.matrix * first.matrix,
            offset: self.matrix * first.offset + self.offset,
        }
    }

    /// The 7x7 homogeneous form `[[A, c], [0, 1]]`.
    pub fn homogeneous(&self) -> nalgebra::Matrix<f64, nalgebra::U7, nalgebra::U7, nalgebra::ArrayStorage<f64, 7, 7>> {
        let mut h = nalgebra::Matrix::<f64, nalgebra::U7, nalgebra::U7, _>::identity();
        h.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.matrix);
        h.fixed_view_mut::<6, 1>(0, 6).copy_from(&self.offset);
        h
    }
}

fn chirp(h: f64) -> TransportMap {
    let mut m = Matrix6::identity();
    m[(5, 4)] = h;
    TransportMap { matrix: m, offset: Vector6::zeros() }
}

fn rotation_about(theta: f64, z_center: f64) -> TransportMap {
    let (s, c) = (math::sin(theta), math::cos(theta));
    let mut m = Matrix6::identity();
    m[(4, 4)] = c;
    m[(4, 5)] = -s;
    m[(5, 4)] = s;
    m[(5, 5)] = c;
    // R (u - center) + center
    let center = Vector6::new(0.0, 0.0, 0.0, 0.0, z_center, 0.0);
    TransportMap { offset: center - m * center, matrix: m }
}

fn drift(energy: f64) -> TransportMap {
    let mut m = Matrix6::identity();
    m[(0, 1)] = energy;
    m[(2, 3)] = energy;
    m[(4, 5)] = SLIP_PER_ENERGY * energy;
    TransportMap { matrix: m, offset: Vector6::zeros() }
}

/// Fixed dispersive section: `x += DISPERSION_X · E`, `y' += DISPERSION_YP · E`.
fn dispersion() -> TransportMap {
    let mut m = Matrix6::identity();
    m[(0, 5)] = DISPERSION_X;
    m[(3, 5)] = DISPERSION_YP;
    TransportMap { matrix: m, offset: Vector6::zeros() }
}

/// Fixed transverse-to-energy coupling: `E += COUPLING_X · x + COUPLING_Y · y`.
fn coupling() -> TransportMap {
    let mut m = Matrix6::identity();
    m[(5, 0)] = COUPLING_X;
    m[(5, 2)] = COUPLING_Y;
    TransportMap { matrix: m, offset: Vector6::zeros() }
}

fn solenoid(field: f64) -> TransportMap {
    let k = FOCUS_PER_FIELD * field;
    let mut lens = Matrix6::identity();
    lens[(1, 0)] = -k;
    lens[(3, 2)] = -k;
    let (s, c) = (math::sin(LARMOR_PER_FIELD * field), math::cos(LARMOR_PER_FIELD * field));
    let mut rot = Matrix6::identity();
    for (a, b) in [(0, 2), (1, 3)] {
        rot[(a, a)] = c;
        rot[(a, b)] = s;
        rot[(b, a)] = -s;
        rot[(b, b)] = c;
    }
    TransportMap { matrix: rot * lens, offset: Vector6::zeros() }
}

/// Builds the beamline map for a parameter setting.
pub fn map_from_params(params: &MachineParams) -> Result<TransportMap> {
    if !params.is_finite() {
        return Err(Error::NonFinite(alloc::format!("machine parameters {:?}", params.0)));
    }
    let [energy, phase, peak_field, buncher_phase, field] = params.0;
    let map = coupling()
        .compose(&solenoid(field))
        .compose(&drift(energy))
        .compose(&dispersion())
        .compose(&rotation_about(phase, buncher_phase))
        .compose(&chirp(peak_field));
    TransportMap::new(map.matrix, map.offset)
}

/// Pushes every mixture component through the map for `params`.
pub fn transport(state: &BeamState, params: &MachineParams) -> Result<BeamState> {
    let map = map_from_params(params)?;
    apply_map(state, &map)
}

pub fn apply_map(state: &BeamState, map: &TransportMap) -> Result<BeamState> {
    let a = &map.matrix;
    state.map_components(|c| {
        let cov = a * c.cov * a.transpose();
        GaussianComponent {
            weight: c.weight,
            mean: a * c.mean + map.offset,
            // symmetrize away rounding
            cov: (cov + cov.transpose()) * 0.5,
        }
    })
}
