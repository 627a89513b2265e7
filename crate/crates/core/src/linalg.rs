//! Two-dimensional vectors and matrices, with the closed-form `SL(2, R)` toolkit
//! (exponential, logarithm, polar factorization, Cayley transform, SVD) used by
//! the cocycle and perturbation code.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> From<[T; 2]> for Vec2<T> {
    fn from(v: [T; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl<T: Scalar> From<Vec2<T>> for [T; 2] {
    fn from(v: Vec2<T>) -> Self {
        [v.x, v.y]
    }
}

impl<T: Scalar> Vec2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    pub fn zero() -> Self {
        Vec2::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn scale(self, s: T) -> Self {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Unit vector, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > T::zero()).then(|| self.scale(T::one() / n))
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Self {
        Vec2::new(-self.y, self.x)
    }

    /// Outer product `self ⊗ o` (as a column times a row).
    pub fn outer(self, o: Self) -> Mat2<T> {
        Mat2::new(self.x * o.x, self.x * o.y, self.y * o.x, self.y * o.y)
    }

    pub fn cast<U: Scalar>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

/// Real 2×2 matrix `[[a, b], [c, d]]`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[T; 2]; 2]", into = "[[T; 2]; 2]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Mat2<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

impl<T: Scalar> From<[[T; 2]; 2]> for Mat2<T> {
    fn from(m: [[T; 2]; 2]) -> Self {
        Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }
}

impl<T: Scalar> From<Mat2<T>> for [[T; 2]; 2] {
    fn from(m: Mat2<T>) -> Self {
        [[m.a, m.b], [m.c, m.d]]
    }
}

impl<T: Scalar> Mat2<T> {
    pub const fn new(a: T, b: T, c: T, d: T) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn identity() -> Self {
        Mat2::new(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn zero() -> Self {
        Mat2::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    /// Symplectic unit `[[0, 1], [-1, 0]]`; Hamiltonian fields are `J ∇H`.
    pub fn symplectic() -> Self {
        Mat2::new(T::zero(), T::one(), -T::one(), T::zero())
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotation(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn from_int(m: [[i64; 2]; 2]) -> Self {
        Mat2::new(T::from_int(m[0][0]), T::from_int(m[0][1]), T::from_int(m[1][0]), T::from_int(m[1][1]))
    }

    pub fn from_columns(e1: Vec2<T>, e2: Vec2<T>) -> Self {
        Mat2::new(e1.x, e2.x, e1.y, e2.y)
    }

    pub fn col(&self, i: usize) -> Vec2<T> {
        match i {
            0 => Vec2::new(self.a, self.c),
            _ => Vec2::new(self.b, self.d),
        }
    }

    pub fn det(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> T {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    /// Adjugate; equals the inverse when `det = 1`.
    pub fn adjugate(&self) -> Self {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(T::one() / det))
    }

    pub fn scale(&self, s: T) -> Self {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn apply(&self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn frobenius(&self) -> T {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    /// Singular values `(s1, s2)` with `s1 >= s2 >= 0`.
    pub fn singular_values(&self) -> (T, T) {
        // s1 ± s2 are the norms of the conformal and anticonformal parts.
        let two = T::lit(2.0);
        let p = (self.a + self.d).hypot(self.c - self.b);
        let q = (self.a - self.d).hypot(self.c + self.b);
        let s1 = (p + q) / two;
        let s2 = ((p - q) / two).abs();
        (s1, s2)
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> T {
        self.singular_values().0
    }

    pub fn condition_number(&self) -> T {
        let (s1, s2) = self.singular_values();
        if s2 == T::zero() {
            T::infinity()
        } else {
            s1 / s2
        }
    }

    /// Full singular value decomposition `M = U diag(s1, s2) Vᵀ`, with `U`, `V`
    /// rotations or reflections and `s1 >= s2`.
    pub fn svd(&self) -> Svd<T> {
        let (s1, s2) = self.singular_values();
        let ata = self.transpose() * *self;
        let v1 = dominant_eigenvector_sym(&ata);
        let v2 = v1.perp();
        let u1 = self.apply(v1).normalized().unwrap_or(Vec2::new(T::one(), T::zero()));
        let u2 = if s2 > T::zero() {
            self.apply(v2).scale(T::one() / s2)
        } else {
            u1.perp()
        };
        Svd {
            u: Mat2::from_columns(u1, u2),
            s1,
            s2,
            v: Mat2::from_columns(v1, v2),
        }
    }

    pub fn approx_eq(&self, o: &Self, tol: T) -> bool {
        (*self - *o).max_abs() <= tol
    }

    pub fn cast<U: Scalar>(&self) -> Mat2<U> {
        Mat2::new(U::lit(self.a.as_f64()), U::lit(self.b.as_f64()), U::lit(self.c.as_f64()), U::lit(self.d.as_f64()))
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Symmetric part `(M + Mᵀ) / 2`.
    pub fn symmetric_part(&self) -> Self {
        let h = T::lit(0.5);
        let off = (self.b + self.c) * h;
        Mat2::new(self.a, off, off, self.d)
    }
}

/// Leading eigenvector of a symmetric matrix, sign-fixed so the first nonzero component is positive.
fn dominant_eigenvector_sym<T: Scalar>(m: &Mat2<T>) -> Vec2<T> {
    let half = T::lit(0.5);
    // angle of the principal axis: tan(2φ) = 2b / (a - d)
    let phi = (m.b + m.c).atan2(m.a - m.d) * half;
    let (s, c) = phi.sin_cos();
    let v = Vec2::new(c, s);
    if v.x < T::zero() || (v.x == T::zero() && v.y < T::zero()) {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Svd<T> {
    pub u: Mat2<T>,
    pub s1: T,
    pub s2: T,
    pub v: Mat2<T>,
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

/// `sinh(x)/x` and `sin(x)/x`, stable near zero.
fn sinhc<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        T::one() + x * x / T::lit(6.0)
    } else {
        x.sinh() / x
    }
}

fn sinc<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        T::one() - x * x / T::lit(6.0)
    } else {
        x.sin() / x
    }
}

/// Exponential of a traceless matrix (an element of `sl(2, R)`).
pub fn sl2_exp<T: Scalar>(x: &Mat2<T>) -> Mat2<T> {
    // X² = -det(X) I for traceless X.
    let disc = -x.det();
    let (c, s) = if disc > T::zero() {
        let mu = disc.sqrt();
        (mu.cosh(), sinhc(mu))
    } else if disc < T::zero() {
        let mu = (-disc).sqrt();
        (mu.cos(), sinc(mu))
    } else {
        (T::one(), T::one())
    };
    Mat2::identity().scale(c) + x.scale(s)
}

/// Principal logarithm of a unit-determinant matrix with trace `> -2`.
/// Returns `None` when no real traceless logarithm on the principal branch exists.
pub fn sl2_log<T: Scalar>(m: &Mat2<T>) -> Option<Mat2<T>> {
    let two = T::lit(2.0);
    let half_t = m.trace() / two;
    let traceless = *m - Mat2::identity().scale(half_t);
    if half_t <= -T::one() {
        return None;
    }
    let factor = if half_t > T::one() {
        let mu = half_t.acosh();
        T::one() / sinhc(mu)
    } else {
        let mu = half_t.min(T::one()).acos();
        T::one() / sinc(mu)
    };
    Some(traceless.scale(factor))
}

/// Polar factorization `M = P U` with `P` symmetric positive definite and `U` a rotation.
/// Requires `det M > 0`.
pub fn polar<T: Scalar>(m: &Mat2<T>) -> Option<(Mat2<T>, Mat2<T>)> {
    if m.det() <= T::zero() {
        return None;
    }
    // M + cof(M) is a scaled rotation for det M > 0.
    let r = Mat2::new(m.a + m.d, m.b - m.c, m.c - m.b, m.a + m.d);
    let n = (m.a + m.d).hypot(m.c - m.b);
    if n == T::zero() {
        return None;
    }
    let u = r.scale(T::one() / n);
    let p = *m * u.transpose();
    Some((p.symmetric_part(), u))
}

/// Angle of a rotation matrix.
pub fn rotation_angle<T: Scalar>(u: &Mat2<T>) -> T {
    u.c.atan2(u.a)
}

/// Cayley transform `(I - A/2)⁻¹ (I + A/2)`: the implicit-midpoint propagator of the linear field `A`.
pub fn cayley<T: Scalar>(a: &Mat2<T>) -> Option<Mat2<T>> {
    let h = a.scale(T::lit(0.5));
    let minus = Mat2::identity() - h;
    let plus = Mat2::identity() + h;
    Some(minus.inverse()? * plus)
}

/// Inverse Cayley transform: the `A` with `cayley(A) = M`, i.e. `2 (M - I)(M + I)⁻¹`.
pub fn cayley_inverse<T: Scalar>(m: &Mat2<T>) -> Option<Mat2<T>> {
    let num = *m - Mat2::identity();
    let den = (*m + Mat2::identity()).inverse()?;
    Some((num * den).scale(T::lit(2.0)))
}

/// Integer matrix helpers for torus automorphisms and linear involutions.
pub mod int {
    pub type IMat = [[i64; 2]; 2];

    pub const IDENTITY: IMat = [[1, 0], [0, 1]];

    pub fn det(m: &IMat) -> i64 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn mul(p: &IMat, q: &IMat) -> IMat {
        [
            [p[0][0] * q[0][0] + p[0][1] * q[1][0], p[0][0] * q[0][1] + p[0][1] * q[1][1]],
            [p[1][0] * q[0][0] + p[1][1] * q[1][0], p[1][0] * q[0][1] + p[1][1] * q[1][1]],
        ]
    }

    /// Inverse of a determinant-one integer matrix.
    pub fn inverse_unimodular(m: &IMat) -> IMat {
        let d = det(m);
        [[m[1][1] * d, -m[0][1] * d], [-m[1][0] * d, m[0][0] * d]]
    }

    pub fn gcd(a: i64, b: i64) -> i64 {
        let (mut a, mut b) = (a.abs(), b.abs());
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_values_of_shear() {
        let m = Mat2::new(1.0, 3.0, 0.0, 1.0_f64);
        let (s1, s2) = m.singular_values();
        // s1 s2 = det = 1, s1² + s2² = frobenius² = 11
        assert!((s1 * s2 - 1.0).abs() < 1e-12);
        assert!((s1 * s1 + s2 * s2 - 11.0).abs() < 1e-12);
        let svd = m.svd();
        let rebuilt = svd.u * Mat2::new(svd.s1, 0.0, 0.0, svd.s2) * svd.v.transpose();
        assert!(rebuilt.approx_eq(&m, 1e-12));
    }

    #[test]
    fn exp_log_roundtrip_hyperbolic_and_elliptic() {
        for x in [
            Mat2::new(0.3, 0.2, -0.1, -0.3_f64),
            Mat2::new(0.0, 0.7, -0.7, 0.0),
            Mat2::new(0.0, 1e-9, 0.0, 0.0),
            Mat2::new(0.5, 1.0, 0.0, -0.5),
        ] {
            let m = sl2_exp(&x);
            assert!((m.det() - 1.0).abs() < 1e-13);
            let back = sl2_log(&m).unwrap();
            assert!(back.approx_eq(&x, 1e-12), "{x:?} -> {back:?}");
        }
    }

    #[test]
    fn log_rejects_negative_trace_below_minus_two() {
        let m = Mat2::new(-3.0, 1.0, -1.0, 0.0_f64);
        assert!((m.det() - 1.0).abs() < 1e-15);
        assert!(sl2_log(&m).is_none());
    }

    #[test]
    fn polar_reconstructs() {
        let m = Mat2::new(-3.0, 1.0, -1.0, 0.0_f64);
        let (p, u) = polar(&m).unwrap();
        assert!((p * u).approx_eq(&m, 1e-12));
        assert!((u.det() - 1.0).abs() < 1e-12);
        assert!((p.b - p.c).abs() < 1e-12);
        assert!(p.a > 0.0 && p.det() > 0.0);
        let u2 = Mat2::rotation(rotation_angle(&u));
        assert!(u2.approx_eq(&u, 1e-12));
    }

    #[test]
    fn cayley_inverse_roundtrip() {
        let a = Mat2::new(0.01, 0.02, -0.03, -0.01_f64);
        let m = cayley(&a).unwrap();
        assert!((m.det() - 1.0).abs() < 1e-14);
        assert!(cayley_inverse(&m).unwrap().approx_eq(&a, 1e-14));
    }

    #[test]
    fn integer_helpers() {
        let a = [[2, 1], [1, 1]];
        assert_eq!(int::inverse_unimodular(&a), [[1, -1], [-1, 2]]);
        assert_eq!(int::mul(&a, &a), [[5, 3], [3, 2]]);
        assert_eq!(int::gcd(-4, 6), 2);
    }

    proptest::proptest! {
        #[test]
        fn svd_reconstructs(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64, d in -3.0..3.0f64) {
            let m = Mat2::new(a, b, c, d);
            let svd = m.svd();
            let rebuilt = svd.u * Mat2::new(svd.s1, 0.0, 0.0, svd.s2) * svd.v.transpose();
            proptest::prop_assert!(rebuilt.approx_eq(&m, 1e-9 * (1.0 + m.max_abs())));
            proptest::prop_assert!(svd.s1 >= svd.s2);
        }
    }
}
