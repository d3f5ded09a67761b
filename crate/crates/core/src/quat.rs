//! Real quaternion algebra over the basis `{1, i1, i2, i3}`.
//!
//! Multiplication follows `i1 i2 = -i2 i1 = i3` and `i_r^2 = -1`. The
//! `i1`-complex subalgebra `{a + b i1}` is identified with [`Complex64`],
//! which gives the symplectic split `q = alpha + i2 beta`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub};

use num_complex::Complex64;

use crate::vec3::{self, Vec3};

/// Absolute tolerance used for unit-norm checks.
pub const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq)]
pub enum QuatError {
    #[error("the zero quaternion has no inverse")]
    ZeroInverse,
    #[error("cannot build a unit axis from a zero vector")]
    ZeroAxis,
    #[error("quaternion norm {0} is not 1 within tolerance")]
    NotUnit(f64),
}

/// A quaternion `a0 + a1 i1 + a2 i2 + a3 i3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I1: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const I2: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const I3: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(a0: f64, a1: f64, a2: f64, a3: f64) -> Self {
        Self { a0, a1, a2, a3 }
    }

    #[inline]
    pub const fn real(a0: f64) -> Self {
        Self::new(a0, 0.0, 0.0, 0.0)
    }

    /// Pure imaginary quaternion `v1 i1 + v2 i2 + v3 i3`.
    #[inline]
    pub const fn pure(v: Vec3) -> Self {
        Self::new(0.0, v[0], v[1], v[2])
    }

    /// Embeds an `i1`-complex number.
    #[inline]
    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.re, z.im, 0.0, 0.0)
    }

    #[inline]
    pub fn imag(&self) -> Vec3 {
        [self.a1, self.a2, self.a3]
    }

    #[inline]
    pub fn components(&self) -> [f64; 4] {
        [self.a0, self.a1, self.a2, self.a3]
    }

    #[inline]
    pub fn conj(&self) -> Self {
        Self::new(self.a0, -self.a1, -self.a2, -self.a3)
    }

    /// `‖a‖² = a0² + a1² + a2² + a3²`, the real part of `conj(a)·a`.
    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.a0 * self.a0 + self.a1 * self.a1 + self.a2 * self.a2 + self.a3 * self.a3
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inverse(&self) -> Result<Self, QuatError> {
        let n = self.norm_sq();
        if n == 0.0 {
            return Err(QuatError::ZeroInverse);
        }
        Ok(self.conj() * (1.0 / n))
    }

    /// `[a, b] = ab - ba`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = *self - *other;
        d.a0.abs().max(d.a1.abs()).max(d.a2.abs()).max(d.a3.abs())
    }

    pub fn symplectic_split(&self) -> SymplecticPair {
        SymplecticPair { alpha: Complex64::new(self.a0, self.a1), beta: Complex64::new(self.a2, -self.a3) }
    }

    /// Decomposes `q = real + magnitude·axis` with `magnitude ≥ 0`.
    ///
    /// The magnitude is the Euclidean norm of the imaginary part. A purely
    /// real input yields magnitude 0, the axis `i1` and `degenerate = true`.
    pub fn axis_form(&self) -> AxisForm {
        let v = self.imag();
        let magnitude = vec3::norm(&v);
        if magnitude == 0.0 {
            return AxisForm { real: self.a0, magnitude: 0.0, axis: UnitImaginary::I1, degenerate: true };
        }
        AxisForm {
            real: self.a0,
            magnitude,
            axis: UnitImaginary::from_unit_unchecked(vec3::scale(&v, 1.0 / magnitude)),
            degenerate: false,
        }
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i1 {:+}i2 {:+}i3", self.a0, self.a1, self.a2, self.a3)
    }
}

impl Add for Quaternion {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        Self::new(self.a0 + b.a0, self.a1 + b.a1, self.a2 + b.a2, self.a3 + b.a3)
    }
}

impl AddAssign for Quaternion {
    #[inline]
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl Sub for Quaternion {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        Self::new(self.a0 - b.a0, self.a1 - b.a1, self.a2 - b.a2, self.a3 - b.a3)
    }
}

impl Neg for Quaternion {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.a0, -self.a1, -self.a2, -self.a3)
    }
}

impl Mul for Quaternion {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.a0 * b.a0 - a.a1 * b.a1 - a.a2 * b.a2 - a.a3 * b.a3,
            a.a0 * b.a1 + a.a1 * b.a0 + a.a2 * b.a3 - a.a3 * b.a2,
            a.a0 * b.a2 - a.a1 * b.a3 + a.a2 * b.a0 + a.a3 * b.a1,
            a.a0 * b.a3 + a.a1 * b.a2 - a.a2 * b.a1 + a.a3 * b.a0,
        )
    }
}

impl MulAssign for Quaternion {
    #[inline]
    fn mul_assign(&mut self, b: Self) {
        *self = *self * b;
    }
}

impl Mul<f64> for Quaternion {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.a0 * s, self.a1 * s, self.a2 * s, self.a3 * s)
    }
}

impl Mul<Quaternion> for f64 {
    type Output = Quaternion;
    #[inline]
    fn mul(self, q: Quaternion) -> Quaternion {
        q * self
    }
}

/// Free-function form of the product, for call sites that read better
/// without operators.
#[inline]
pub fn multiply(a: Quaternion, b: Quaternion) -> Quaternion {
    a * b
}

/// The pair `(alpha, beta)` of `i1`-complex numbers with `q = alpha + i2 beta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymplecticPair {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl SymplecticPair {
    pub fn new(alpha: Complex64, beta: Complex64) -> Self {
        Self { alpha, beta }
    }

    pub fn join(&self) -> Quaternion {
        Quaternion::new(self.alpha.re, self.alpha.im, self.beta.re, -self.beta.im)
    }
}

impl From<Quaternion> for SymplecticPair {
    fn from(q: Quaternion) -> Self {
        q.symplectic_split()
    }
}

impl From<SymplecticPair> for Quaternion {
    fn from(p: SymplecticPair) -> Self {
        p.join()
    }
}

/// Result of [`Quaternion::axis_form`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisForm {
    pub real: f64,
    pub magnitude: f64,
    pub axis: UnitImaginary,
    /// Set when the imaginary part vanished and `axis` is the default `i1`.
    pub degenerate: bool,
}

/// A pure imaginary unit quaternion `η = n1 i1 + n2 i2 + n3 i3`, `|n| = 1`.
///
/// Every such `η` satisfies `η² = -1`, so `{a + b η}` is a copy of the
/// complex numbers inside the quaternions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitImaginary(Vec3);

impl UnitImaginary {
    pub const I1: UnitImaginary = UnitImaginary([1.0, 0.0, 0.0]);
    pub const I2: UnitImaginary = UnitImaginary([0.0, 1.0, 0.0]);
    pub const I3: UnitImaginary = UnitImaginary([0.0, 0.0, 1.0]);

    /// Normalizes `v`. Fails on the zero vector (or one too small to normalize).
    pub fn new(v: Vec3) -> Result<Self, QuatError> {
        let n = vec3::norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(QuatError::ZeroAxis);
        }
        Ok(Self(vec3::scale(&v, 1.0 / n)))
    }

    pub(crate) const fn from_unit_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    #[inline]
    pub fn vector(&self) -> Vec3 {
        self.0
    }

    #[inline]
    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion::pure(self.0)
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        vec3::dot(&self.0, &other.0)
    }
}

impl Neg for UnitImaginary {
    type Output = Self;
    fn neg(self) -> Self {
        Self(vec3::scale(&self.0, -1.0))
    }
}

impl From<UnitImaginary> for Quaternion {
    fn from(u: UnitImaginary) -> Self {
        u.to_quaternion()
    }
}

/// A unit quaternion, acting on pure imaginaries by `v ↦ q v conj(q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::ONE);

    /// Accepts `q` if `‖q‖²` is within `1 ± 1e-12`.
    pub fn try_new(q: Quaternion) -> Result<Self, QuatError> {
        let n = q.norm_sq();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(QuatError::NotUnit(n.sqrt()));
        }
        Ok(Self(q))
    }

    pub fn new_normalize(q: Quaternion) -> Result<Self, QuatError> {
        let n = q.norm();
        if !(n > 0.0) {
            return Err(QuatError::ZeroInverse);
        }
        Ok(Self(q * (1.0 / n)))
    }

    /// Rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: UnitImaginary, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let v = axis.vector();
        Self(Quaternion::new(c, s * v[0], s * v[1], s * v[2]))
    }

    #[inline]
    pub fn quaternion(&self) -> Quaternion {
        self.0
    }

    #[inline]
    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }

    /// `q x conj(q)` for a general quaternion `x`.
    #[inline]
    pub fn conjugate_by(&self, x: Quaternion) -> Quaternion {
        self.0 * x * self.0.conj()
    }

    /// Rotates a unit imaginary; the result is renormalized.
    pub fn rotate(&self, eta: UnitImaginary) -> UnitImaginary {
        let v = self.conjugate_by(eta.to_quaternion()).imag();
        let n = vec3::norm(&v);
        UnitImaginary(vec3::scale(&v, 1.0 / n))
    }

    pub fn rotate_vec(&self, v: Vec3) -> Vec3 {
        self.conjugate_by(Quaternion::pure(v)).imag()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let s = vec3::norm(&self.0.imag());
        2.0 * s.atan2(self.0.a0.abs())
    }

    /// Signed rotation angle about `axis`, wrapped to `(-π, π]`.
    ///
    /// Meaningful when the rotation axis is (anti)parallel to `axis`.
    pub fn signed_angle_about(&self, axis: UnitImaginary) -> f64 {
        let s = vec3::dot(&self.0.imag(), &axis.vector());
        crate::wrap_angle(2.0 * s.atan2(self.0.a0))
    }

    /// Renormalizes accumulated rounding drift.
    pub fn renormalize(&self) -> Self {
        Self(self.0 * (1.0 / self.0.norm()))
    }
}

impl Mul for UnitQuaternion {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        Self(self.0 * b.0)
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(u: UnitQuaternion) -> Self {
        u.0
    }
}

/// The minimal rotation taking `from` to `to`.
///
/// The rotation axis is `from × to` and the angle is the angle between the
/// axes. For antipodal inputs the axis is `i2` when `from = ±i1`, otherwise
/// the normalized `from × i1`.
pub fn minimal_rotation(from: UnitImaginary, to: UnitImaginary) -> UnitQuaternion {
    let u = from.vector();
    let v = to.vector();
    let cross = vec3::cross(&u, &v);
    let dot = vec3::dot(&u, &v);
    if dot < 0.0 && vec3::norm(&cross) < 1e-12 {
        let c = vec3::cross(&u, &[1.0, 0.0, 0.0]);
        let axis = if vec3::norm(&c) < 1e-12 { [0.0, 1.0, 0.0] } else { vec3::normalize(&c) };
        return UnitQuaternion(Quaternion::pure(axis));
    }
    let q = Quaternion::new(1.0 + dot, cross[0], cross[1], cross[2]);
    UnitQuaternion(q * (1.0 / q.norm()))
}

/// Unit `q` with `q i1 conj(q) = eta`, the minimal rotation from `i1`.
pub fn conjugator_to(eta: UnitImaginary) -> UnitQuaternion {
    minimal_rotation(UnitImaginary::I1, eta)
}
