//! Multi-particle spin correlations over a spatial field of imaginary units.
//!
//! A field `η(x)` assigns a pure imaginary unit quaternion to every point.
//! Spin analyzers at different sites then build their Pauli matrices from
//! different complex structures, and the correlation of an entangled state
//! can pick up the mismatch.
//!
//! Two evaluation models are provided:
//!
//! * [`CorrelationModel::Local`]: each site uses `pauli(n_j, η(x_j))`, and
//!   entries of the tensor operator are multiplied in ascending site order.
//! * [`CorrelationModel::Transported`]: every site is expressed in the
//!   complex structure of a base site. Sites are chained from the base, and
//!   site `c_m` has its analyzer azimuth advanced by the holonomy of the loop
//!   `base → c_1 → … → c_m → base` (along the configured paths from the base
//!   and straight chords between chained sites). Two-body correlations
//!   always see a zero loop and agree with standard quantum mechanics;
//!   three or more sites can enclose curvature.
//!
//! Basis states are indexed with site 1 as the most significant bit and
//! spin up (`+`) as bit value 0.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::quat::{conjugator_to, minimal_rotation, Quaternion, UnitImaginary, UnitQuaternion};
use crate::vec3::{self, Vec3};

/// Largest particle count the dense evaluators accept.
pub const MAX_PARTICLES: usize = 12;

/// Default transport step; step-halving moves loop holonomies on the
/// shipped presets by well under 1e-4 rad.
pub const DEFAULT_STEP: f64 = 1e-3;

const UNIT_TOLERANCE: f64 = 1e-12;
const ENDPOINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CorrelationError {
    #[error("state has {state} particles but {analyzers} analyzers were given")]
    CountMismatch { state: usize, analyzers: usize },
    #[error("amplitude {index} is not real")]
    NonRealAmplitude { index: usize },
    #[error("amplitude list has length {got}, expected 2^{particles} = {expected}")]
    WrongLength { particles: usize, expected: usize, got: usize },
    #[error("state is not normalized: sum of squares = {0}")]
    NotNormalized(f64),
    #[error("particle count must be in 1..={MAX_PARTICLES}, got {0}")]
    ParticleCount(usize),
    #[error("analyzer direction is not unit: |n| = {0}")]
    NonUnitAnalyzer(f64),
    #[error("site indices must be unique and contiguous from 1")]
    SiteIndices,
    #[error("base site {0} does not exist")]
    BaseOutOfRange(usize),
    #[error("path for site {site} must run from the base site to site {site}")]
    PathEndpoints { site: usize },
    #[error("expected {expected} paths, got {got}")]
    PathCount { expected: usize, got: usize },
    #[error("transport step must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("sampled grid is malformed: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    /// 1-based.
    pub index: usize,
    pub position: Vec3,
}

impl Site {
    pub fn new(index: usize, position: Vec3) -> Self {
        Self { index, position }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

/// Axis samples on a regular grid, clamped outside its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGrid {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    /// x fastest, then y, then z.
    axes: Vec<UnitImaginary>,
    interpolation: Interpolation,
}

impl SampledGrid {
    pub fn new(
        origin: Vec3,
        spacing: f64,
        dims: [usize; 3],
        axes: Vec<Vec3>,
        interpolation: Interpolation,
    ) -> Result<Self, CorrelationError> {
        if !(spacing > 0.0) {
            return Err(CorrelationError::Grid(format!("spacing must be > 0, got {spacing}")));
        }
        if dims.contains(&0) {
            return Err(CorrelationError::Grid("every dimension needs at least one node".into()));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if axes.len() != expected {
            return Err(CorrelationError::Grid(format!("{} axes for {expected} nodes", axes.len())));
        }
        let axes = axes
            .into_iter()
            .enumerate()
            .map(|(i, v)| UnitImaginary::new(v).map_err(|_| CorrelationError::Grid(format!("zero axis at node {i}"))))
            .collect::<Result<_, _>>()?;
        Ok(Self { origin, spacing, dims, axes, interpolation })
    }

    /// Samples `field` at the grid nodes.
    pub fn from_field(
        field: &EtaField,
        origin: Vec3,
        spacing: f64,
        dims: [usize; 3],
        interpolation: Interpolation,
    ) -> Result<Self, CorrelationError> {
        let mut axes = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = [
                        origin[0] + i as f64 * spacing,
                        origin[1] + j as f64 * spacing,
                        origin[2] + k as f64 * spacing,
                    ];
                    axes.push(field.eta(p).vector());
                }
            }
        }
        Self::new(origin, spacing, dims, axes, interpolation)
    }

    fn node(&self, i: usize, j: usize, k: usize) -> UnitImaginary {
        self.axes[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    fn eta(&self, x: Vec3) -> UnitImaginary {
        // fractional grid coordinates, clamped to the grid
        let mut f = [0.0; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            f[a] = ((x[a] - self.origin[a]) / self.spacing).clamp(0.0, max);
        }
        let nearest = || self.node(f[0].round() as usize, f[1].round() as usize, f[2].round() as usize);
        if self.interpolation == Interpolation::Nearest {
            return nearest();
        }
        let lo: [usize; 3] = std::array::from_fn(|a| (f[a].floor() as usize).min(self.dims[a].saturating_sub(2)));
        let w: [f64; 3] = std::array::from_fn(|a| f[a] - lo[a] as f64);
        let mut acc = [0.0; 3];
        for corner in 0..8usize {
            let mut weight = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                idx[a] = (lo[a] + up as usize).min(self.dims[a] - 1);
                weight *= if up { w[a] } else { 1.0 - w[a] };
            }
            if weight != 0.0 {
                acc = vec3::add(&acc, &vec3::scale(&self.node(idx[0], idx[1], idx[2]).vector(), weight));
            }
        }
        UnitImaginary::new(acc).unwrap_or_else(|_| nearest())
    }
}

/// A total map from positions to imaginary unit axes.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaField {
    Constant(UnitImaginary),
    /// `η(x) = normalize(x − center)`, read as `(i1, i2, i3)` components;
    /// `i1` at the center itself.
    Hedgehog {
        center: Vec3,
    },
    /// `η(x) = normalize((1 − weight) ê + weight (x − center)^)` with
    /// `ê = (1, 1, 1)/√3`; interpolates between a constant and a hedgehog.
    HedgehogBlend {
        center: Vec3,
        weight: f64,
    },
    /// `η(x) = R_y(τ x₂) R_x(τ x₁) ẑ`.
    SmoothTwist {
        tau: f64,
    },
    Sampled(SampledGrid),
    /// A fixed global rotation of another field.
    Rotated {
        inner: Box<EtaField>,
        rotation: UnitQuaternion,
    },
}

const DIAGONAL: Vec3 = [0.577_350_269_189_625_8, 0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

impl EtaField {
    pub fn constant(eta: UnitImaginary) -> Self {
        EtaField::Constant(eta)
    }

    pub fn hedgehog() -> Self {
        EtaField::Hedgehog { center: [0.0; 3] }
    }

    /// The same field seen after the global conjugation `η ↦ q η conj(q)`.
    pub fn rotated(self, rotation: UnitQuaternion) -> Self {
        EtaField::Rotated { inner: Box::new(self), rotation }
    }

    pub fn eta(&self, x: Vec3) -> UnitImaginary {
        match self {
            EtaField::Constant(eta) => *eta,
            EtaField::Hedgehog { center } => UnitImaginary::new(vec3::sub(&x, center)).unwrap_or(UnitImaginary::I1),
            EtaField::HedgehogBlend { center, weight } => {
                let d = vec3::sub(&x, center);
                let n = vec3::norm(&d);
                let radial = if n > 0.0 { vec3::scale(&d, 1.0 / n) } else { [1.0, 0.0, 0.0] };
                let v = vec3::add(&vec3::scale(&DIAGONAL, 1.0 - weight), &vec3::scale(&radial, *weight));
                UnitImaginary::new(v).unwrap_or(UnitImaginary::new(DIAGONAL).unwrap())
            }
            EtaField::SmoothTwist { tau } => {
                let (sa, ca) = (tau * x[0]).sin_cos();
                let (sb, cb) = (tau * x[1]).sin_cos();
                UnitImaginary::new([ca * sb, -sa, ca * cb]).unwrap()
            }
            EtaField::Sampled(grid) => grid.eta(x),
            EtaField::Rotated { inner, rotation } => rotation.rotate(inner.eta(x)),
        }
    }

    /// Names accepted by [`EtaField::preset`].
    pub const PRESETS: &'static [&'static str] = &["constant", "hedgehog", "hedgehog-blend", "smooth-twist"];

    /// Named analytic presets with one scalar parameter: the tilt angle
    /// from `i3` towards `i1` for `constant`, the blend weight for
    /// `hedgehog-blend`, the twist rate for `smooth-twist` (ignored by
    /// `hedgehog`).
    pub fn preset(name: &str, param: f64) -> Option<Self> {
        match name {
            "constant" => Some(FieldFamily::ConstantTilt.field(param)),
            "hedgehog" => Some(EtaField::hedgehog()),
            "hedgehog-blend" => Some(FieldFamily::HedgehogBlend.field(param)),
            "smooth-twist" => Some(FieldFamily::TwistStrength.field(param)),
            _ => None,
        }
    }
}

/// One-parameter field families for deviation scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFamily {
    /// Constant `η = sin p · i1 + cos p · i3`.
    ConstantTilt,
    /// [`EtaField::SmoothTwist`] with `τ = p`.
    TwistStrength,
    /// [`EtaField::HedgehogBlend`] about the origin with weight `p`.
    HedgehogBlend,
}

impl FieldFamily {
    pub fn field(self, p: f64) -> EtaField {
        match self {
            FieldFamily::ConstantTilt => {
                let (s, c) = p.sin_cos();
                EtaField::Constant(UnitImaginary::new([s, 0.0, c]).unwrap())
            }
            FieldFamily::TwistStrength => EtaField::SmoothTwist { tau: p },
            FieldFamily::HedgehogBlend => EtaField::HedgehogBlend { center: [0.0; 3], weight: p },
        }
    }
}

/// A Stern–Gerlach analyzer at a site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analyzer {
    pub site: Site,
    pub n: Vec3,
}

impl Analyzer {
    pub fn new(site: Site, n: Vec3) -> Result<Self, CorrelationError> {
        let len = vec3::norm(&n);
        if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(CorrelationError::NonUnitAnalyzer(len));
        }
        Ok(Self { site, n })
    }

    /// Direction from azimuth and polar angle (radians).
    pub fn from_angles(site: Site, azimuth: f64, polar: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self { site, n: [sp * ca, sp * sa, cp] }
    }

    /// Analyzer in the x–y plane.
    pub fn planar(site: Site, azimuth: f64) -> Self {
        let (s, c) = azimuth.sin_cos();
        Self { site, n: [c, s, 0.0] }
    }

    /// The same analyzer with its azimuth advanced by `theta`.
    fn twisted(&self, theta: f64) -> Vec3 {
        let (s, c) = theta.sin_cos();
        let [x, y, z] = self.n;
        [c * x - s * y, s * x + c * y, z]
    }
}

/// An `N`-particle spin state with real amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiParticleState {
    particles: usize,
    amplitudes: Vec<f64>,
}

impl MultiParticleState {
    pub fn new(particles: usize, amplitudes: Vec<f64>) -> Result<Self, CorrelationError> {
        if particles == 0 || particles > MAX_PARTICLES {
            return Err(CorrelationError::ParticleCount(particles));
        }
        let expected = 1usize << particles;
        if amplitudes.len() != expected {
            return Err(CorrelationError::WrongLength { particles, expected, got: amplitudes.len() });
        }
        let norm: f64 = amplitudes.iter().map(|a| a * a).sum();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(CorrelationError::NotNormalized(norm));
        }
        Ok(Self { particles, amplitudes })
    }

    /// Accepts quaternion amplitudes only if every imaginary part vanishes.
    pub fn from_quaternions(particles: usize, amplitudes: &[Quaternion]) -> Result<Self, CorrelationError> {
        let real = amplitudes
            .iter()
            .enumerate()
            .map(|(index, q)| {
                if q.a1 == 0.0 && q.a2 == 0.0 && q.a3 == 0.0 {
                    Ok(q.a0)
                } else {
                    Err(CorrelationError::NonRealAmplitude { index })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(particles, real)
    }

    /// The basis state with the given spins (`true` = down).
    pub fn product(spins: &[bool]) -> Result<Self, CorrelationError> {
        let n = spins.len();
        if n == 0 || n > MAX_PARTICLES {
            return Err(CorrelationError::ParticleCount(n));
        }
        let mut amplitudes = vec![0.0; 1 << n];
        amplitudes[basis_index(spins)] = 1.0;
        Ok(Self { particles: n, amplitudes })
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    fn support(&self) -> Vec<(usize, f64)> {
        self.amplitudes.iter().copied().enumerate().filter(|(_, a)| *a != 0.0).collect()
    }
}

fn basis_index(spins: &[bool]) -> usize {
    spins.iter().fold(0, |acc, &down| (acc << 1) | down as usize)
}

/// `(|++−−⟩ − |−−++⟩)/√2`.
pub fn ghsz_state() -> MultiParticleState {
    let mut amplitudes = vec![0.0; 16];
    amplitudes[0b0011] = FRAC_1_SQRT_2;
    amplitudes[0b1100] = -FRAC_1_SQRT_2;
    MultiParticleState { particles: 4, amplitudes }
}

/// `(|+−⟩ − |−+⟩)/√2`.
pub fn singlet_state() -> MultiParticleState {
    MultiParticleState { particles: 2, amplitudes: vec![0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0] }
}

/// A 2×2 matrix with quaternion entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliMatrix2Q(pub [[Quaternion; 2]; 2]);

impl PauliMatrix2Q {
    pub fn entry(&self, row: usize, col: usize) -> Quaternion {
        self.0[row][col]
    }

    /// Entrywise `q x conj(q)`.
    pub fn conjugated_by(&self, q: UnitQuaternion) -> Self {
        let m = &self.0;
        Self([[q.conjugate_by(m[0][0]), q.conjugate_by(m[0][1])], [q.conjugate_by(m[1][0]), q.conjugate_by(m[1][1])]])
    }

    /// Quaternionic conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        Self([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max(self.0[i][j].max_abs_diff(&other.0[i][j]));
            }
        }
        d
    }

    pub fn identity() -> Self {
        Self([[Quaternion::ONE, Quaternion::ZERO], [Quaternion::ZERO, Quaternion::ONE]])
    }
}

/// `n · σ` with `σ2 = [[0, −η], [η, 0]]`.
pub fn pauli(n: Vec3, eta: UnitImaginary) -> PauliMatrix2Q {
    let e = eta.to_quaternion();
    let r1 = Quaternion::real(n[0]);
    PauliMatrix2Q([[Quaternion::real(n[2]), r1 - e * n[1]], [r1 + e * n[1], Quaternion::real(-n[2])]])
}

/// Order in which per-site entries are multiplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductOrder {
    #[default]
    Ascending,
    /// Diagnostic only.
    Descending,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationModel {
    Local,
    Transported {
        /// 1-based site index.
        base: usize,
        /// `paths[j]` runs from the base site to site `j + 1`.
        paths: Vec<Vec<Vec3>>,
        step: f64,
    },
}

impl CorrelationModel {
    /// Transported model with straight paths from `base` to every site.
    pub fn straight(base: usize, sites: &[Site], step: f64) -> Result<Self, CorrelationError> {
        let mut sorted = sites.to_vec();
        sorted.sort_by_key(|s| s.index);
        let origin = sorted.iter().find(|s| s.index == base).ok_or(CorrelationError::BaseOutOfRange(base))?.position;
        let paths =
            sorted.iter().map(|s| if s.index == base { vec![origin] } else { vec![origin, s.position] }).collect();
        Ok(CorrelationModel::Transported { base, paths, step })
    }
}

/// Result of [`expectation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    /// Real part of the quaternionic inner product.
    pub value: f64,
    pub full: Quaternion,
}

fn check_step(step: f64) -> Result<(), CorrelationError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(CorrelationError::NonPositiveStep(step));
    }
    Ok(())
}

/// Multiplies minimal rotations between axes sampled along `path`, starting
/// from `initial`.
///
/// Each segment is sampled uniformly with `ceil(len/step)` intervals.
pub fn transport_from(field: &EtaField, path: &[Vec3], step: f64, initial: UnitQuaternion) -> UnitQuaternion {
    let mut q = initial;
    let Some(first) = path.first() else { return q };
    let mut prev = field.eta(*first);
    let mut count = 0usize;
    for seg in path.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let n = (vec3::dist(a, b) / step).ceil().max(1.0) as usize;
        for i in 1..=n {
            let p = if i == n { *b } else { vec3::lerp(a, b, i as f64 / n as f64) };
            let next = field.eta(p);
            q = minimal_rotation(prev, next) * q;
            prev = next;
            count += 1;
            if count.is_multiple_of(1024) {
                q = q.renormalize();
            }
        }
    }
    q
}

/// Discrete parallel transport of the imaginary unit along a polyline.
///
/// The result maps `η(path[0])` to `η(path[last])`. Fails only for a
/// non-positive step.
pub fn transport(field: &EtaField, path: &[Vec3], step: f64) -> Result<UnitQuaternion, CorrelationError> {
    check_step(step)?;
    Ok(transport_from(field, path, step, UnitQuaternion::IDENTITY))
}

/// Signed rotation angle about `η(start)` after transport around `loop_`.
///
/// The loop is closed automatically if its last point differs from the first.
pub fn loop_holonomy(field: &EtaField, loop_: &[Vec3], step: f64) -> Result<f64, CorrelationError> {
    check_step(step)?;
    let Some(&start) = loop_.first() else { return Ok(0.0) };
    let mut closed = loop_.to_vec();
    if closed.last() != Some(&start) {
        closed.push(start);
    }
    let q = transport_from(field, &closed, step, UnitQuaternion::IDENTITY);
    Ok(q.signed_angle_about(field.eta(start)))
}

fn sorted_analyzers(state: &MultiParticleState, analyzers: &[Analyzer]) -> Result<Vec<Analyzer>, CorrelationError> {
    if analyzers.len() != state.particles {
        return Err(CorrelationError::CountMismatch { state: state.particles, analyzers: analyzers.len() });
    }
    let mut sorted = analyzers.to_vec();
    sorted.sort_by_key(|a| a.site.index);
    if sorted.iter().enumerate().any(|(j, a)| a.site.index != j + 1) {
        return Err(CorrelationError::SiteIndices);
    }
    for a in &sorted {
        let len = vec3::norm(&a.n);
        if !((len - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(CorrelationError::NonUnitAnalyzer(len));
        }
    }
    Ok(sorted)
}

/// Site indices chained from the base: base, base+1, …, N, 1, …, base−1.
fn chain_order(base: usize, n: usize) -> Vec<usize> {
    (0..n).map(|m| (base - 1 + m) % n + 1).collect()
}

/// Azimuth twists of the transported model, indexed by site − 1.
fn transported_twists(
    field: &EtaField,
    sites: &[Site],
    base: usize,
    paths: &[Vec<Vec3>],
    step: f64,
) -> Result<Vec<f64>, CorrelationError> {
    let n = sites.len();
    let chain = chain_order(base, n);
    let mut twists = vec![0.0; n];
    for m in 1..n {
        let target = chain[m];
        let mut lp: Vec<Vec3> = paths[chain[1] - 1].clone();
        for &c in &chain[2..=m] {
            lp.push(sites[c - 1].position);
        }
        lp.extend(paths[target - 1].iter().rev().skip(1));
        twists[target - 1] = loop_holonomy(field, &lp, step)?;
    }
    Ok(twists)
}

fn validate_paths(sites: &[Site], base: usize, paths: &[Vec<Vec3>], step: f64) -> Result<(), CorrelationError> {
    check_step(step)?;
    if base == 0 || base > sites.len() {
        return Err(CorrelationError::BaseOutOfRange(base));
    }
    if paths.len() != sites.len() {
        return Err(CorrelationError::PathCount { expected: sites.len(), got: paths.len() });
    }
    let origin = sites[base - 1].position;
    for (j, p) in paths.iter().enumerate() {
        let ok = match (p.first(), p.last()) {
            (Some(a), Some(b)) => {
                vec3::dist(a, &origin) <= ENDPOINT_TOLERANCE && vec3::dist(b, &sites[j].position) <= ENDPOINT_TOLERANCE
            }
            _ => false,
        };
        if !ok {
            return Err(CorrelationError::PathEndpoints { site: j + 1 });
        }
    }
    Ok(())
}

/// Per-site operators for the chosen model, indexed by site − 1.
pub fn site_operators(
    analyzers: &[Analyzer],
    field: &EtaField,
    model: &CorrelationModel,
) -> Result<Vec<PauliMatrix2Q>, CorrelationError> {
    match model {
        CorrelationModel::Local => Ok(analyzers.iter().map(|a| pauli(a.n, field.eta(a.site.position))).collect()),
        CorrelationModel::Transported { base, paths, step } => {
            let sites: Vec<Site> = analyzers.iter().map(|a| a.site).collect();
            validate_paths(&sites, *base, paths, *step)?;
            let twists = transported_twists(field, &sites, *base, paths, *step)?;
            let frame = conjugator_to(field.eta(sites[*base - 1].position));
            Ok(analyzers
                .iter()
                .zip(&twists)
                .map(|(a, &theta)| pauli(a.twisted(theta), UnitImaginary::I1).conjugated_by(frame))
                .collect())
        }
    }
}

/// `Σ_kl Ψ_k O[k,l] Ψ_l` with `O[k,l] = Π_j σ_j[k_j, l_j]`.
fn contract(state: &MultiParticleState, ops: &[PauliMatrix2Q], order: ProductOrder) -> Quaternion {
    let n = state.particles;
    let support = state.support();
    let mut total = Quaternion::ZERO;
    for &(k, pk) in &support {
        for &(l, pl) in &support {
            let bit = |idx: usize, j: usize| (idx >> (n - 1 - j)) & 1;
            let mut prod = Quaternion::ONE;
            match order {
                ProductOrder::Ascending => {
                    for (j, op) in ops.iter().enumerate() {
                        prod *= op.entry(bit(k, j), bit(l, j));
                    }
                }
                ProductOrder::Descending => {
                    for (j, op) in ops.iter().enumerate().rev() {
                        prod *= op.entry(bit(k, j), bit(l, j));
                    }
                }
            }
            total += prod * (pk * pl);
        }
    }
    total
}

/// Correlation `⟨Π_j n_j·σ_j⟩` with entry products in ascending site order.
pub fn expectation(
    state: &MultiParticleState,
    analyzers: &[Analyzer],
    field: &EtaField,
    model: &CorrelationModel,
) -> Result<Expectation, CorrelationError> {
    expectation_ordered(state, analyzers, field, model, ProductOrder::Ascending)
}

pub fn expectation_ordered(
    state: &MultiParticleState,
    analyzers: &[Analyzer],
    field: &EtaField,
    model: &CorrelationModel,
    order: ProductOrder,
) -> Result<Expectation, CorrelationError> {
    let analyzers = sorted_analyzers(state, analyzers)?;
    let ops = site_operators(&analyzers, field, model)?;
    let full = contract(state, &ops, order);
    Ok(Expectation { value: full.a0, full })
}

/// Standard complex-Hilbert-space correlation from dense Kronecker products.
pub fn cqm_reference(state: &MultiParticleState, analyzers: &[Analyzer]) -> Result<f64, CorrelationError> {
    let analyzers = sorted_analyzers(state, analyzers)?;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let mut op = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for a in &analyzers {
        let [x, y, z] = a.n;
        let s = DMatrix::from_row_slice(2, 2, &[c(z, 0.0), c(x, -y), c(x, y), c(-z, 0.0)]);
        op = op.kronecker(&s);
    }
    let psi = nalgebra::DVector::from_iterator(state.amplitudes.len(), state.amplitudes.iter().map(|&a| c(a, 0.0)));
    Ok(psi.dotc(&(op * &psi)).re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationValues {
    pub e: f64,
    pub e_cqm: f64,
    pub abs_dev: f64,
    /// Holonomy around the site polygon in chain order.
    pub holonomy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRow {
    pub param: f64,
    pub outcome: Result<DeviationValues, CorrelationError>,
}

/// Loop through the sites in chain order from `base`.
pub fn site_polygon(sites: &[Site], base: usize) -> Vec<Vec3> {
    let mut sorted = sites.to_vec();
    sorted.sort_by_key(|s| s.index);
    let base = base.clamp(1, sorted.len().max(1));
    chain_order(base, sorted.len()).into_iter().map(|i| sorted[i - 1].position).collect()
}

/// Evaluates one row per parameter of `family`; rows keep grid order.
pub fn deviation_scan(
    state: &MultiParticleState,
    analyzers: &[Analyzer],
    family: FieldFamily,
    params: &[f64],
    model: &CorrelationModel,
) -> Vec<DeviationRow> {
    let base = match model {
        CorrelationModel::Transported { base, .. } => *base,
        CorrelationModel::Local => 1,
    };
    let step = match model {
        CorrelationModel::Transported { step, .. } => *step,
        CorrelationModel::Local => DEFAULT_STEP,
    };
    let sites: Vec<Site> = analyzers.iter().map(|a| a.site).collect();
    let polygon = site_polygon(&sites, base);
    params
        .par_iter()
        .map(|&param| {
            let field = family.field(param);
            let outcome = (|| {
                let e = expectation(state, analyzers, &field, model)?.value;
                let e_cqm = cqm_reference(state, analyzers)?;
                let holonomy = loop_holonomy(&field, &polygon, step)?;
                Ok(DeviationValues { e, e_cqm, abs_dev: (e - e_cqm).abs(), holonomy })
            })();
            DeviationRow { param, outcome }
        })
        .collect()
}
