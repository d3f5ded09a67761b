//! Numerical laboratory for quaternionic quantum mechanics.
//!
//! * [`quat`]: quaternion algebra, symplectic split, axis form and rotations.
//! * [`scattering`]: 1D scattering through piecewise-constant quaternion
//!   barriers, including the order-swap phase.
//! * [`interferometry`]: neutron phase arithmetic, Poisson interferograms and
//!   phase fitting.
//! * [`correlations`]: multi-particle spin correlations over a field of
//!   imaginary units, with parallel transport and holonomy.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod interferometry;
pub mod quat;
pub mod scattering;
pub mod vec3;

pub use correlations::{
    cqm_reference, deviation_scan, expectation, ghsz_state, loop_holonomy, pauli, singlet_state, transport, Analyzer,
    CorrelationError, CorrelationModel, DeviationRow, DeviationValues, EtaField, Expectation, FieldFamily,
    MultiParticleState, PauliMatrix2Q, ProductOrder, Site,
};
pub use interferometry::{
    fit_phase, order_swap_sensitivity, refractive_index, simulate_interferogram, slab_phase, thickness_for_phase,
    total_phase, BeamConfig, InterferogramSpec, InterferometerRun, InterferometryError, Material, PhaseFit, Slab,
};
pub use quat::{
    conjugator_to, minimal_rotation, multiply, AxisForm, QuatError, Quaternion, SymplecticPair, UnitImaginary,
    UnitQuaternion,
};
pub use scattering::{
    order_swap, solve_scattering, sweep, Backend, BarrierRegion, OrderSwapReport, PotentialProfile, ScatteringError,
    ScatteringSolution, SweepRow,
};

use std::f64::consts::PI;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[inline]
pub fn rad_to_deg(rad: f64) -> f64 {
    rad.to_degrees()
}
