//! One-dimensional scattering through piecewise-constant quaternion barriers.
//!
//! With `ħ²/2m = 1` and the symplectic split `V = V_α + i2 V_β`, the
//! quaternionic Schrödinger equation becomes a pair of coupled `i1`-complex
//! equations
//!
//! ```text
//! ψ_α'' = (V_α − E) ψ_α − conj(V_β) ψ_β
//! ψ_β'' = (V_α + E) ψ_β + V_β ψ_α
//! ```
//!
//! In potential-free regions the `α` sector propagates (`e^{±ikx}`) and the
//! `β` sector is evanescent (`e^{±κx}`), with `k = κ = √E`.
//!
//! The solver propagates the two-dimensional space of solutions that satisfy
//! the right-hand boundary condition backwards through the profile,
//! re-orthonormalizing after every region. Going right-to-left, the physical
//! solutions are the growing ones, so this is stable for thick barriers.
//! Two interchangeable region propagators are provided: exact mode
//! propagators ([`Backend::TransferMatrix`]) and a fixed-step RK4 integrator
//! ([`Backend::Integrator`]).

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::quat::Quaternion;
use crate::wrap_angle;

type C = Complex64;
pub type Matrix4c = Matrix4<C>;
type Basis = Matrix4x2<C>;

const I: C = C::new(0.0, 1.0);

/// Growth exponent above which region propagators are returned rescaled.
pub const LOG_SCALE_THRESHOLD: f64 = 300.0;

/// Mode-discriminant magnitude below which a region is treated as defective.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Matching systems with a larger 2-norm condition number are rejected.
pub const MAX_CONDITION: f64 = 1e13;

/// `ħ²/2m` for the neutron in meV·Å².
pub const NEUTRON_HBAR2_OVER_2M_MEV_A2: f64 = 2.072_124_7;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("region width must be > 0, got {0}")]
    NonPositiveWidth(f64),
    #[error("energy must be > 0, got {0}")]
    NonPositiveEnergy(f64),
    #[error("order swap needs two nonempty fragments")]
    EmptyFragment,
    #[error("integrator step must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("boundary matching system is singular (condition number {condition:.3e})")]
    SingularMatching { condition: f64 },
    #[error("non-finite value encountered during propagation")]
    NonFinite,
}

/// One constant-potential slab of the profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRegion {
    width: f64,
    potential: Quaternion,
}

impl BarrierRegion {
    pub fn new(width: f64, potential: Quaternion) -> Result<Self, ScatteringError> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(ScatteringError::NonPositiveWidth(width));
        }
        Ok(Self { width, potential })
    }

    pub fn gap(width: f64) -> Result<Self, ScatteringError> {
        Self::new(width, Quaternion::ZERO)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn potential(&self) -> Quaternion {
        self.potential
    }

    /// `(V_α, V_β)` from the symplectic split.
    pub fn sectors(&self) -> (C, C) {
        let p = self.potential.symplectic_split();
        (p.alpha, p.beta)
    }
}

/// Ordered stack of regions starting at `x = 0`; `V = 0` outside.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialProfile {
    layers: Vec<BarrierRegion>,
}

impl PotentialProfile {
    /// Free propagation.
    pub fn free() -> Self {
        Self::default()
    }

    pub fn from_layers(layers: Vec<BarrierRegion>) -> Self {
        Self { layers }
    }

    pub fn single(width: f64, potential: Quaternion) -> Result<Self, ScatteringError> {
        Ok(Self { layers: vec![BarrierRegion::new(width, potential)?] })
    }

    pub fn push_barrier(&mut self, width: f64, potential: Quaternion) -> Result<&mut Self, ScatteringError> {
        self.layers.push(BarrierRegion::new(width, potential)?);
        Ok(self)
    }

    pub fn push_gap(&mut self, width: f64) -> Result<&mut Self, ScatteringError> {
        self.layers.push(BarrierRegion::gap(width)?);
        Ok(self)
    }

    /// `self`, then a free gap of `gap` (skipped when zero), then `other`.
    pub fn then(&self, gap: f64, other: &PotentialProfile) -> Result<Self, ScatteringError> {
        let mut layers = self.layers.clone();
        if gap != 0.0 {
            layers.push(BarrierRegion::gap(gap)?);
        }
        layers.extend_from_slice(&other.layers);
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[BarrierRegion] {
        &self.layers
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_width(&self) -> f64 {
        self.layers.iter().map(|l| l.width).sum()
    }

    /// Left edges of the layers followed by the right edge of the last one.
    pub fn interfaces(&self) -> Vec<f64> {
        let mut x = 0.0;
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(0.0);
        for l in &self.layers {
            x += l.width;
            out.push(x);
        }
        out
    }

    /// Multiplies every `V_β` (the `i2`, `i3` components) by `factor`.
    pub fn scale_beta(&self, factor: f64) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let v = l.potential;
                BarrierRegion { width: l.width, potential: Quaternion::new(v.a0, v.a1, factor * v.a2, factor * v.a3) }
            })
            .collect();
        Self { layers }
    }

    /// Whether every region has a real `V_α`, i.e. the `j_α − j_β` current is conserved.
    pub fn is_conservative(&self) -> bool {
        self.layers.iter().all(|l| l.potential.a1 == 0.0)
    }
}

/// Converts physical energies/lengths to the `ħ²/2m = 1` units used here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaturalUnits {
    /// `ħ²/2m` in (energy unit)·(length unit)².
    pub hbar2_over_2m: f64,
}

impl NaturalUnits {
    pub fn neutron_mev_angstrom() -> Self {
        Self { hbar2_over_2m: NEUTRON_HBAR2_OVER_2M_MEV_A2 }
    }

    /// Energy in inverse length squared.
    pub fn energy(&self, e: f64) -> f64 {
        e / self.hbar2_over_2m
    }

    pub fn energy_back(&self, e_natural: f64) -> f64 {
        e_natural * self.hbar2_over_2m
    }
}

/// One exponential mode `(α, β) e^{i q x}` of a constant-potential region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMode {
    /// Wavenumber `q`, generally complex.
    pub wavenumber: C,
    pub alpha: C,
    pub beta: C,
}

impl RegionMode {
    /// `b/a`, infinite for a pure-`β` mode.
    pub fn ratio(&self) -> C {
        self.beta / self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionModes {
    /// `±q` of the `α`-like pair, then `±q` of the `β`-like pair.
    pub modes: [RegionMode; 4],
    /// `E² − |V_β|²`; the two pairs coincide when it vanishes.
    pub discriminant: f64,
    pub degenerate: bool,
}

/// The four modes of a region with constant potential `v` at energy `energy`.
///
/// The wavenumbers solve `(q² + V_α)² = E² − |V_β|²`. The `α`-like pair has
/// `b/a = −V_β / (E + s)` and the `β`-like pair `a/b = −conj(V_β) / (E + s)`
/// with `s = √(E² − |V_β|²)`.
pub fn region_modes(v: Quaternion, energy: f64) -> RegionModes {
    let p = v.symplectic_split();
    let (va, vb) = (p.alpha, p.beta);
    let disc = energy * energy - vb.norm_sqr();
    let s = C::new(disc, 0.0).sqrt();
    let denom = energy + s;
    let lam_a = (va - s).sqrt();
    let lam_b = (va + s).sqrt();
    let ratio_a = -vb / denom;
    let ratio_b = -vb.conj() / denom;
    let mode = |lam: C, alpha: C, beta: C| RegionMode { wavenumber: -I * lam, alpha, beta };
    let modes = [
        mode(lam_a, C::new(1.0, 0.0), ratio_a),
        mode(-lam_a, C::new(1.0, 0.0), ratio_a),
        mode(lam_b, ratio_b, C::new(1.0, 0.0)),
        mode(-lam_b, ratio_b, C::new(1.0, 0.0)),
    ];
    let scale = 1.0 + lam_a.norm().max(lam_b.norm());
    let mut min_sep = f64::INFINITY;
    for i in 0..4 {
        for j in i + 1..4 {
            min_sep = min_sep.min((modes[i].wavenumber - modes[j].wavenumber).norm());
        }
    }
    let degenerate = disc.abs() < DEGENERACY_THRESHOLD || min_sep < 1e-7 * scale;
    RegionModes { modes, discriminant: disc, degenerate }
}

/// Generator `A` of `y' = A y` for `y = (ψ_α, ψ_α', ψ_β, ψ_β')`.
pub fn system_matrix(v: Quaternion, energy: f64) -> Matrix4c {
    let p = v.symplectic_split();
    let (va, vb) = (p.alpha, p.beta);
    let z = C::new(0.0, 0.0);
    let one = C::new(1.0, 0.0);
    let e = C::new(energy, 0.0);
    Matrix4c::new(z, one, z, z, va - e, z, -vb.conj(), z, z, z, z, one, vb, z, va + e, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorMethod {
    Modes,
    MatrixExponential,
}

/// Region propagator stored as `e^{log_scale} · matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub matrix: Matrix4c,
    pub log_scale: f64,
    pub method: PropagatorMethod,
}

impl Propagator {
    /// The unscaled propagator; overflows if `log_scale` is large.
    pub fn full(&self) -> Matrix4c {
        self.matrix * C::new(self.log_scale.exp(), 0.0)
    }

    pub fn is_rescaled(&self) -> bool {
        self.log_scale != 0.0
    }
}

/// Propagator over a region of thickness `width`: `y(x + width) = P y(x)`.
pub fn region_transfer(v: Quaternion, energy: f64, width: f64) -> Result<Propagator, ScatteringError> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(ScatteringError::NonPositiveWidth(width));
    }
    Ok(propagator(v, energy, width))
}

/// Propagator over a signed distance.
fn propagator(v: Quaternion, energy: f64, dx: f64) -> Propagator {
    let modes = region_modes(v, energy);
    if modes.degenerate {
        return expm_propagator(v, energy, dx);
    }
    let lambdas: Vec<C> = modes.modes.iter().map(|m| I * m.wavenumber).collect();
    let growth = lambdas.iter().map(|l| l.re * dx).fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if growth > LOG_SCALE_THRESHOLD { growth } else { 0.0 };

    let mut basis = Matrix4c::zeros();
    for (j, (m, lam)) in modes.modes.iter().zip(&lambdas).enumerate() {
        basis[(0, j)] = m.alpha;
        basis[(1, j)] = *lam * m.alpha;
        basis[(2, j)] = m.beta;
        basis[(3, j)] = *lam * m.beta;
    }
    let inv = match basis.try_inverse() {
        Some(inv) => inv,
        None => return expm_propagator(v, energy, dx),
    };
    let mut scaled = basis;
    for (j, lam) in lambdas.iter().enumerate() {
        let f = (*lam * dx - log_scale).exp();
        for i in 0..4 {
            scaled[(i, j)] *= f;
        }
    }
    Propagator { matrix: scaled * inv, log_scale, method: PropagatorMethod::Modes }
}

/// Scaled-and-squared matrix exponential, split into chunks with running
/// rescaling when the exponent is large.
fn expm_propagator(v: Quaternion, energy: f64, dx: f64) -> Propagator {
    let a = system_matrix(v, energy) * C::new(dx, 0.0);
    let norm = a.row_iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let chunks = (norm / 50.0).ceil().max(1.0) as usize;
    let step = (a / C::new(chunks as f64, 0.0)).exp();
    let mut out = Matrix4c::identity();
    let mut log_scale = 0.0;
    for _ in 0..chunks {
        out = step * out;
        let m = out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m > 1e100 {
            out /= C::new(m, 0.0);
            log_scale += m.ln();
        }
    }
    Propagator { matrix: out, log_scale, method: PropagatorMethod::MatrixExponential }
}

/// Region propagation used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Backend {
    /// Exact mode propagators per region.
    #[default]
    TransferMatrix,
    /// Fixed-step classical RK4 on the coupled equations.
    Integrator { step: f64 },
}

/// Right-hand side of the coupled equations.
fn rhs(va: C, vb: C, energy: f64, y: &Vector4<C>) -> Vector4<C> {
    Vector4::new(y[1], (va - energy) * y[0] - vb.conj() * y[2], y[3], vb * y[0] + (va + energy) * y[2])
}

fn rk4_column(va: C, vb: C, energy: f64, y: Vector4<C>, h: f64) -> Vector4<C> {
    let hc = C::new(h, 0.0);
    let k1 = rhs(va, vb, energy, &y);
    let k2 = rhs(va, vb, energy, &(y + k1 * (hc * 0.5)));
    let k3 = rhs(va, vb, energy, &(y + k2 * (hc * 0.5)));
    let k4 = rhs(va, vb, energy, &(y + k3 * hc));
    y + (k1 + k2 * C::new(2.0, 0.0) + k3 * C::new(2.0, 0.0) + k4) * (hc / 6.0)
}

/// Modified Gram–Schmidt (two passes): `m = q g`, `g` upper triangular.
fn orthonormalize(m: &Basis) -> Option<(Basis, Matrix2<C>)> {
    let mut q = *m;
    let mut g = Matrix2::<C>::zeros();
    for j in 0..2 {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dotc(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, C::new(1.0, 0.0));
                g[(i, j)] += proj;
            }
        }
        let n = q.column(j).norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        q.column_mut(j).unscale_mut(n);
        g[(j, j)] = C::new(n, 0.0);
    }
    Some((q, g))
}

/// Backward sweep state: the solutions satisfying the right boundary
/// condition are `Y(x) = U(x) · K⁻¹`, with `K = e^{log_k} k`.
struct BackwardSweep {
    u: Basis,
    k: Matrix2<C>,
    log_k: f64,
}

impl BackwardSweep {
    fn new(energy: f64) -> Self {
        let kw = energy.sqrt();
        let mut u = Basis::zeros();
        // columns: outgoing α wave and decaying β wave, unit amplitude at x = L
        u[(0, 0)] = C::new(1.0, 0.0);
        u[(1, 0)] = I * kw;
        u[(2, 1)] = C::new(1.0, 0.0);
        u[(3, 1)] = C::new(-kw, 0.0);
        let (u, g) = orthonormalize(&u).expect("independent boundary columns");
        let k = g.try_inverse().expect("triangular with nonzero diagonal");
        Self { u, k, log_k: 0.0 }
    }

    /// Absorbs `m = e^{-g} P U` into the basis.
    fn absorb(&mut self, m: Basis, g: f64) -> Result<(), ScatteringError> {
        let (q, r) = orthonormalize(&m).ok_or(ScatteringError::NonFinite)?;
        let r_inv = r.try_inverse().ok_or(ScatteringError::NonFinite)?;
        self.u = q;
        self.k *= r_inv;
        self.log_k -= g;
        let scale = self.k.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(ScatteringError::NonFinite);
        }
        self.k /= C::new(scale, 0.0);
        self.log_k += scale.ln();
        Ok(())
    }

    fn through_region(&mut self, layer: &BarrierRegion, energy: f64, backend: Backend) -> Result<(), ScatteringError> {
        match backend {
            Backend::TransferMatrix => {
                let p = propagator(layer.potential, energy, -layer.width);
                let m = p.matrix * self.u;
                self.absorb(m, p.log_scale)
            }
            Backend::Integrator { step } => {
                let (va, vb) = layer.sectors();
                let n = (layer.width / step).ceil().max(1.0) as usize;
                let h = -layer.width / n as f64;
                let mut m = self.u;
                let mut done = 0;
                while done < n {
                    let batch = (n - done).min(64);
                    for _ in 0..batch {
                        for j in 0..2 {
                            let col = rk4_column(va, vb, energy, m.column(j).clone_owned(), h);
                            m.set_column(j, &col);
                        }
                    }
                    done += batch;
                    self.absorb(m, 0.0)?;
                    m = self.u;
                }
                Ok(())
            }
        }
    }
}

/// Reflection/transmission data at one energy.
///
/// Asymptotic forms, with `k = κ = √E` and `L` the profile width:
/// `x ≤ 0`: `ψ_α = e^{ikx} + r e^{−ikx}`, `ψ_β = c_left e^{κx}`;
/// `x ≥ L`: `ψ_α = t e^{ikx}`, `ψ_β = c_right e^{−κ(x−L)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringSolution {
    pub energy: f64,
    pub r: C,
    pub t: C,
    pub c_left: C,
    /// Evanescent amplitude referenced to the right edge `x = L`.
    pub c_right: C,
    /// `|r|² + |t|² − 1`; zero up to rounding for conservative profiles.
    pub flux_residual: f64,
    /// Condition number of the boundary matching system.
    pub condition: f64,
    pub total_width: f64,
}

impl ScatteringSolution {
    pub fn transmission(&self) -> f64 {
        self.t.norm_sqr()
    }

    pub fn reflection(&self) -> f64 {
        self.r.norm_sqr()
    }

    /// State vector `(ψ_α, ψ_α', ψ_β, ψ_β')` just right of the profile.
    fn right_state(&self) -> Vector4<C> {
        let k = self.energy.sqrt();
        let tp = self.t * (I * k * self.total_width).exp();
        Vector4::new(tp, I * k * tp, self.c_right, -k * self.c_right)
    }
}

/// Solves with the default (transfer-matrix) backend.
pub fn solve_scattering(profile: &PotentialProfile, energy: f64) -> Result<ScatteringSolution, ScatteringError> {
    solve_scattering_with(profile, energy, Backend::TransferMatrix)
}

pub fn solve_scattering_with(
    profile: &PotentialProfile,
    energy: f64,
    backend: Backend,
) -> Result<ScatteringSolution, ScatteringError> {
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(ScatteringError::NonPositiveEnergy(energy));
    }
    if let Backend::Integrator { step } = backend {
        if !(step > 0.0) {
            return Err(ScatteringError::NonPositiveStep(step));
        }
    }
    let k = energy.sqrt();
    let mut sweep = BackwardSweep::new(energy);
    for layer in profile.layers().iter().rev() {
        sweep.through_region(layer, energy, backend)?;
    }

    // U α − r (1, −ik, 0, 0) − c_left (0, 0, 1, κ) = (1, ik, 0, 0)
    let mut sys = Matrix4c::zeros();
    for i in 0..4 {
        sys[(i, 0)] = sweep.u[(i, 0)];
        sys[(i, 1)] = sweep.u[(i, 1)];
    }
    sys[(0, 2)] = C::new(-1.0, 0.0);
    sys[(1, 2)] = I * k;
    sys[(2, 3)] = C::new(-1.0, 0.0);
    sys[(3, 3)] = C::new(-k, 0.0);
    let rhs = Vector4::new(C::new(1.0, 0.0), I * k, C::new(0.0, 0.0), C::new(0.0, 0.0));

    let sv = sys.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(ScatteringError::SingularMatching { condition });
    }
    let sol = sys.lu().solve(&rhs).ok_or(ScatteringError::SingularMatching { condition })?;
    let (a1, a2, r, c_left) = (sol[0], sol[1], sol[2], sol[3]);

    let coeffs = sweep.k * nalgebra::Vector2::new(a1, a2) * C::new(sweep.log_k.exp(), 0.0);
    let total_width = profile.total_width();
    let t = coeffs[0] * (-I * k * total_width).exp();
    let c_right = coeffs[1];
    if ![r, t, c_left, c_right].iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(ScatteringError::NonFinite);
    }
    Ok(ScatteringSolution {
        energy,
        r,
        t,
        c_left,
        c_right,
        flux_residual: r.norm_sqr() + t.norm_sqr() - 1.0,
        condition,
        total_width,
    })
}

/// Transmission phases for `A–gap–B` and `B–gap–A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSwapReport {
    pub t_ab: C,
    pub t_ba: C,
    /// `arg t_AB − arg t_BA` wrapped to `(−π, π]`.
    pub delta_phase: f64,
    /// `| |t_AB| − |t_BA| |`.
    pub magnitude_gap: f64,
}

pub fn order_swap(
    a: &PotentialProfile,
    b: &PotentialProfile,
    gap: f64,
    energy: f64,
) -> Result<OrderSwapReport, ScatteringError> {
    order_swap_with(a, b, gap, energy, Backend::TransferMatrix)
}

pub fn order_swap_with(
    a: &PotentialProfile,
    b: &PotentialProfile,
    gap: f64,
    energy: f64,
    backend: Backend,
) -> Result<OrderSwapReport, ScatteringError> {
    if a.is_empty() || b.is_empty() {
        return Err(ScatteringError::EmptyFragment);
    }
    let ab = solve_scattering_with(&a.then(gap, b)?, energy, backend)?;
    let ba = solve_scattering_with(&b.then(gap, a)?, energy, backend)?;
    Ok(OrderSwapReport {
        t_ab: ab.t,
        t_ba: ba.t,
        delta_phase: wrap_angle(ab.t.arg() - ba.t.arg()),
        magnitude_gap: (ab.t.norm() - ba.t.norm()).abs(),
    })
}

/// Probability currents at one position, normalized to the incident flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentSample {
    pub x: f64,
    pub j_alpha: f64,
    pub j_beta: f64,
    /// `j_α − j_β`, constant in `x` when every `V_α` is real.
    pub j_diff: f64,
}

/// `j = Im(conj(ψ) ψ') / k` for both sectors on `grid`.
pub fn current_profile(solution: &ScatteringSolution, profile: &PotentialProfile, grid: &[f64]) -> Vec<CurrentSample> {
    let energy = solution.energy;
    let k = energy.sqrt();
    let edges = profile.interfaces();
    let total = *edges.last().unwrap_or(&0.0);

    // states at the right edge of every layer, propagated right to left
    let layers = profile.layers();
    let mut right_states = vec![Vector4::<C>::zeros(); layers.len()];
    let mut y = solution.right_state();
    for (j, layer) in layers.iter().enumerate().rev() {
        right_states[j] = y;
        let p = propagator(layer.potential, energy, -layer.width);
        y = p.full() * y;
    }

    grid.iter()
        .map(|&x| {
            let state = if x <= 0.0 {
                let e1 = (I * k * x).exp();
                let e2 = (-I * k * x).exp();
                let b = solution.c_left * (k * x).exp();
                Vector4::new(e1 + solution.r * e2, I * k * (e1 - solution.r * e2), b, k * b)
            } else if x >= total {
                let tp = solution.t * (I * k * x).exp();
                let b = solution.c_right * (-k * (x - total)).exp();
                Vector4::new(tp, I * k * tp, b, -k * b)
            } else {
                let j = edges[1..].iter().position(|&e| x <= e).unwrap_or(layers.len() - 1);
                let d = edges[j + 1] - x;
                if d == 0.0 {
                    right_states[j]
                } else {
                    propagator(layers[j].potential, energy, -d).full() * right_states[j]
                }
            };
            let j_alpha = (state[0].conj() * state[1]).im / k;
            let j_beta = (state[2].conj() * state[3]).im / k;
            CurrentSample { x, j_alpha, j_beta, j_diff: j_alpha - j_beta }
        })
        .collect()
}

/// One row of an energy sweep; failures are kept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub energy: f64,
    pub result: Result<ScatteringSolution, ScatteringError>,
}

/// Solves at every energy (in parallel); rows keep the input order.
pub fn sweep(profile: &PotentialProfile, energies: &[f64]) -> Vec<SweepRow> {
    energies.par_iter().map(|&energy| SweepRow { energy, result: solve_scattering(profile, energy) }).collect()
}
