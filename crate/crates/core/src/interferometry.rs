//! Neutron interferometry: slab phase shifts, Poisson interferograms and
//! linear least-squares phase fitting.
//!
//! Lengths are in ångström, number densities in atoms/Å³ and scattering
//! lengths in Å. Angles are radians; degrees appear only at the CLI boundary.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;

use crate::wrap_angle;

/// Scan points assumed by [`order_swap_sensitivity`].
pub const SENSITIVITY_SCAN_POINTS: usize = 16;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum InterferometryError {
    #[error("number density must be > 0, got {0}")]
    NonPositiveDensity(f64),
    #[error("wavelength must be > 0, got {0}")]
    NonPositiveWavelength(f64),
    #[error("slab thickness must be > 0, got {0}")]
    NonPositiveThickness(f64),
    #[error("scattering length is zero: no thickness produces a phase shift")]
    ZeroScatteringLength,
    #[error("phase {phase_rad} rad needs a negative thickness ({thickness} Å) for this material")]
    NegativeThickness { phase_rad: f64, thickness: f64 },
    #[error("contrast must lie in (0, 1], got {0}")]
    InvalidContrast(f64),
    #[error("mean counts must be > 0, got {0}")]
    NonPositiveCounts(f64),
    #[error("need at least {needed} flag angles, got {got}")]
    TooFewAngles { needed: usize, got: usize },
    #[error("counts and flag angles differ in length ({counts} vs {angles})")]
    LengthMismatch { counts: usize, angles: usize },
    #[error("fit design is rank deficient: fewer than 3 distinct flag angles")]
    RankDeficient,
    #[error("no counts recorded")]
    NoCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// Atoms per Å³.
    pub number_density: f64,
    /// Coherent nuclear scattering length in Å; the sign is significant.
    pub scattering_length: f64,
}

impl Material {
    pub fn new(
        name: impl Into<String>,
        number_density: f64,
        scattering_length: f64,
    ) -> Result<Self, InterferometryError> {
        if !(number_density > 0.0) {
            return Err(InterferometryError::NonPositiveDensity(number_density));
        }
        Ok(Self { name: name.into(), number_density, scattering_length })
    }

    /// Aluminium, from tabulated reference data (N = 0.06026 Å⁻³,
    /// b = +3.449 fm). Verify against a current table before relying on it.
    pub fn aluminium() -> Self {
        Self { name: "Al".into(), number_density: 0.060_26, scattering_length: 3.449e-5 }
    }

    /// Titanium, from tabulated reference data (N = 0.05660 Å⁻³,
    /// b = −3.438 fm). Verify against a current table before relying on it.
    pub fn titanium() -> Self {
        Self { name: "Ti".into(), number_density: 0.056_60, scattering_length: -3.438e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slab {
    pub material: Material,
    /// Thickness in Å.
    pub thickness: f64,
}

impl Slab {
    pub fn new(material: Material, thickness: f64) -> Result<Self, InterferometryError> {
        if !(thickness > 0.0) {
            return Err(InterferometryError::NonPositiveThickness(thickness));
        }
        Ok(Self { material, thickness })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    /// Neutron wavelength in Å.
    pub wavelength: f64,
}

impl BeamConfig {
    pub fn new(wavelength: f64) -> Result<Self, InterferometryError> {
        if !(wavelength > 0.0) {
            return Err(InterferometryError::NonPositiveWavelength(wavelength));
        }
        Ok(Self { wavelength })
    }

    /// The 1.268 Å thermal beam of the reactor measurement.
    pub fn thermal() -> Self {
        Self { wavelength: 1.268 }
    }
}

/// `n − 1 = −λ² N b / 2π`, kept separate from `n` because it is ~1e-6.
pub fn index_offset(beam: &BeamConfig, m: &Material) -> f64 {
    -beam.wavelength * beam.wavelength * m.number_density * m.scattering_length / (2.0 * PI)
}

/// `n = 1 − λ² N b / 2π`.
pub fn refractive_index(beam: &BeamConfig, m: &Material) -> f64 {
    1.0 + index_offset(beam, m)
}

/// `φ = (2π/λ)(n − 1) D`, through the refractive index.
pub fn slab_phase(beam: &BeamConfig, slab: &Slab) -> f64 {
    2.0 * PI / beam.wavelength * index_offset(beam, &slab.material) * slab.thickness
}

/// `φ = −λ N b D`, the same phase without going through `n`.
pub fn slab_phase_direct(beam: &BeamConfig, slab: &Slab) -> f64 {
    -beam.wavelength * slab.material.number_density * slab.material.scattering_length * slab.thickness
}

/// Thickness whose slab phase is `phi_target`.
///
/// `phi_target = 0` returns `D = 0`, which is not a valid [`Slab`]
/// thickness; callers treat it as the empty-path boundary case.
pub fn thickness_for_phase(beam: &BeamConfig, m: &Material, phi_target: f64) -> Result<f64, InterferometryError> {
    if m.scattering_length == 0.0 {
        return Err(InterferometryError::ZeroScatteringLength);
    }
    if phi_target == 0.0 {
        return Ok(0.0);
    }
    let d = -phi_target / (beam.wavelength * m.number_density * m.scattering_length);
    if d < 0.0 {
        return Err(InterferometryError::NegativeThickness { phase_rad: phi_target, thickness: d });
    }
    Ok(d)
}

/// Sum of slab phases along `path` plus an injected non-commutative term.
///
/// The slab part is a plain sum, so reordering slabs never changes it.
pub fn total_phase(beam: &BeamConfig, path: &[Slab], extra_quaternionic_phase: f64) -> f64 {
    path.iter().map(|s| slab_phase(beam, s)).sum::<f64>() + extra_quaternionic_phase
}

/// Inputs of a simulated interferogram scan.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramSpec {
    pub true_phase: f64,
    pub contrast: f64,
    pub mean_counts: f64,
    pub flag_angles: Vec<f64>,
    pub seed: u64,
}

impl InterferogramSpec {
    /// `points` flag angles evenly spread over one period.
    pub fn uniform(true_phase: f64, contrast: f64, mean_counts: f64, points: usize, seed: u64) -> Self {
        Self { true_phase, contrast, mean_counts, flag_angles: uniform_angles(points), seed }
    }

    /// Expected counts `A (1 + V cos(φ + δ))` at each flag angle.
    pub fn expected_counts(&self) -> Vec<f64> {
        self.flag_angles
            .iter()
            .map(|d| self.mean_counts * (1.0 + self.contrast * (self.true_phase + d).cos()))
            .collect()
    }
}

pub fn uniform_angles(points: usize) -> Vec<f64> {
    (0..points).map(|i| 2.0 * PI * i as f64 / points as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferometerRun {
    pub true_phase: f64,
    pub contrast: f64,
    pub mean_counts: f64,
    pub flag_angles: Vec<f64>,
    pub seed: u64,
    pub counts: Vec<u64>,
}

/// Draws one Poisson variate; zero for a non-positive mean.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    match Poisson::new(mean) {
        Ok(d) => rng.sample(d) as u64,
        Err(_) => 0,
    }
}

/// Poisson counts at each flag angle; a ChaCha8 stream seeded from `seed`.
pub fn simulate_interferogram(spec: &InterferogramSpec) -> Result<InterferometerRun, InterferometryError> {
    if !(spec.mean_counts > 0.0) {
        return Err(InterferometryError::NonPositiveCounts(spec.mean_counts));
    }
    if !(spec.contrast > 0.0 && spec.contrast <= 1.0) {
        return Err(InterferometryError::InvalidContrast(spec.contrast));
    }
    if spec.flag_angles.len() < 5 {
        return Err(InterferometryError::TooFewAngles { needed: 5, got: spec.flag_angles.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = spec.expected_counts().into_iter().map(|m| sample_poisson(&mut rng, m)).collect();
    Ok(InterferometerRun {
        true_phase: spec.true_phase,
        contrast: spec.contrast,
        mean_counts: spec.mean_counts,
        flag_angles: spec.flag_angles.clone(),
        seed: spec.seed,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    /// Wrapped to `(−π, π]`.
    pub phase_hat: f64,
    pub sigma_phase: f64,
    pub contrast_hat: f64,
    /// Weighted residual sum of squares per degree of freedom.
    pub goodness: f64,
}

pub fn fit_phase(run: &InterferometerRun) -> Result<PhaseFit, InterferometryError> {
    let counts: Vec<f64> = run.counts.iter().map(|&c| c as f64).collect();
    fit_phase_samples(&run.flag_angles, &counts)
}

/// Weighted least squares of `counts` on `{1, cos δ, sin δ}`.
///
/// Weights are `1/counts` (Poisson variance), with empty bins given the
/// mean count as variance. Then `φ̂ = atan2(−c_sin, c_cos)` and `σ_φ` comes
/// from the parameter covariance `(XᵀWX)⁻¹` by linear error propagation.
pub fn fit_phase_samples(angles: &[f64], counts: &[f64]) -> Result<PhaseFit, InterferometryError> {
    if angles.len() != counts.len() {
        return Err(InterferometryError::LengthMismatch { counts: counts.len(), angles: angles.len() });
    }
    if distinct_angles(angles) < 3 {
        return Err(InterferometryError::RankDeficient);
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    if !(mean > 0.0) {
        return Err(InterferometryError::NoCounts);
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    let mut rows = Vec::with_capacity(angles.len());
    for (&d, &c) in angles.iter().zip(counts) {
        let var = if c > 0.0 { c } else { mean };
        let w = 1.0 / var;
        let x = Vector3::new(1.0, d.cos(), d.sin());
        normal += x * x.transpose() * w;
        rhs += x * (w * c);
        rows.push((x, w, c));
    }
    let cov = normal.try_inverse().ok_or(InterferometryError::RankDeficient)?;
    let beta = cov * rhs;
    let (c0, cc, cs) = (beta[0], beta[1], beta[2]);
    let r2 = cc * cc + cs * cs;
    let phase_hat = wrap_angle((-cs).atan2(cc));
    let grad = Vector3::new(0.0, cs / r2, -cc / r2);
    let sigma_phase = (grad.transpose() * cov * grad)[0].sqrt();
    let rss: f64 = rows.iter().map(|(x, w, c)| w * (c - x.dot(&beta)).powi(2)).sum();
    let dof = (angles.len() as f64 - 3.0).max(1.0);
    Ok(PhaseFit { phase_hat, sigma_phase, contrast_hat: r2.sqrt() / c0, goodness: rss / dof })
}

fn distinct_angles(angles: &[f64]) -> usize {
    let mut wrapped: Vec<f64> = angles.iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
    wrapped.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut n = 0;
    let mut last = f64::NAN;
    for a in wrapped {
        if !((a - last).abs() < 1e-12) {
            n += 1;
            last = a;
        }
    }
    // 0 and 2π are the same angle
    if n > 1
        && angles.iter().any(|a| a.rem_euclid(2.0 * PI) < 1e-12)
        && angles.iter().any(|a| 2.0 * PI - a.rem_euclid(2.0 * PI) < 1e-12)
    {
        n -= 1;
    }
    n
}

/// Phase uncertainty of the fit for an ideal uniform scan with
/// [`SENSITIVITY_SCAN_POINTS`] points and the given total counts.
pub fn expected_sigma_phase(counts_total: f64, contrast: f64) -> f64 {
    let spec = InterferogramSpec::uniform(
        0.0,
        contrast,
        counts_total / SENSITIVITY_SCAN_POINTS as f64,
        SENSITIVITY_SCAN_POINTS,
        0,
    );
    let expected = spec.expected_counts();
    fit_phase_samples(&spec.flag_angles, &expected).map(|f| f.sigma_phase).unwrap_or(f64::INFINITY)
}

/// Smallest phase difference detectable at 3σ: `3 σ_φ(counts_total, V)`.
pub fn order_swap_sensitivity(counts_total: f64, contrast: f64) -> f64 {
    3.0 * expected_sigma_phase(counts_total, contrast)
}

/// Total counts at which a shift `delta` exceeds 3σ with probability
/// `power_z` standard deviations to spare (1.645 for 95 %).
pub fn counts_for_detection(delta: f64, contrast: f64, power_z: f64) -> f64 {
    // σ ∝ 1/√N, so solve (3 + z) σ(N) = |δ| from a unit-count reference
    let sigma_unit = expected_sigma_phase(1.0, contrast);
    ((3.0 + power_z) * sigma_unit / delta.abs()).powi(2)
}

/// Outcome of fitting one seed in a detection ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionTrial {
    pub seed: u64,
    pub fit: PhaseFit,
    /// `|φ̂ − φ_ref| / σ_φ` with the difference wrapped.
    pub significance: f64,
}

/// Simulates and fits one run per seed, comparing each fitted phase with
/// `reference_phase`. Results are ordered by seed.
pub fn detection_ensemble(
    template: &InterferogramSpec,
    reference_phase: f64,
    seeds: &[u64],
) -> Result<Vec<DetectionTrial>, InterferometryError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let spec = InterferogramSpec { seed, ..template.clone() };
            let fit = fit_phase(&simulate_interferogram(&spec)?)?;
            let significance = wrap_angle(fit.phase_hat - reference_phase).abs() / fit.sigma_phase;
            Ok(DetectionTrial { seed, fit, significance })
        })
        .collect()
}
