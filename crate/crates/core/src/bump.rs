//! Compactly supported area-preserving perturbations of the identity.
//!
//! A [`Bump`] lives in the disk `B(center, outer_radius)` and is the identity outside it.
//! The cutoff is the quintic smoothstep `φ(r)`: `φ ≡ 1` on `[0, ρ₀]`, `φ ≡ 0` on `[ρ, ∞)`,
//! `C²` and monotone in between.
//!
//! * `Rotation{θ}` is the radial twist `w ↦ Rot(θ φ(|w|)) w`, evaluated in closed form.
//! * `Push{v}` and `LinearGen{S}` are time-one maps of the Hamiltonians
//!   `H = (v_x w_y − v_y w_x) φ(|w|)` and `H = ½ wᵀ S w φ(|w|)`, with field `J∇H`,
//!   integrated by the implicit midpoint rule with [`SUBSTEPS`] fixed steps. The
//!   rule is symplectic and symmetric, so the backward flow is its exact inverse and
//!   the step Jacobian is the Cayley transform of a traceless matrix (determinant one).
//!
//! Inside the plateau `|w| ≤ ρ₀` a push is an exact translation by `v` (as long as the
//! point stays in the plateau) and a linear generator acts as `cayley(J S / n)ⁿ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cayley, cayley_inverse, sl2_exp, sl2_log, polar, rotation_angle, Mat2, Vec2};
use crate::scalar::Scalar;
use crate::torus::Point;

/// Fixed number of implicit-midpoint substeps for generated bumps.
pub const SUBSTEPS: usize = 64;

/// `max |φ'| · (ρ − ρ₀)`.
pub const PROFILE_C1: f64 = 1.875;
/// `max |φ''| · (ρ − ρ₀)²` = 10/√3.
pub const PROFILE_C2: f64 = 5.773_502_691_896_258;

const MAX_NEWTON: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BumpError {
    #[error("implicit midpoint step {step} did not converge (residual {residual:e})")]
    Nonconvergent { step: usize, residual: f64 },
    #[error("invalid radii: need 0 < inner ({inner}) < outer ({outer}) < 0.5")]
    BadRadii { inner: f64, outer: f64 },
    #[error("linear generator is not symmetric")]
    NotSymmetric,
    #[error("cannot factor target {0:?} into symmetric-generator exponentials")]
    Factorization([[f64; 2]; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum Generator<T> {
    Push { v: Vec2<T> },
    Rotation { theta: T },
    LinearGen { s: Mat2<T> },
}

impl<T: Scalar> Generator<T> {
    pub fn magnitude(&self) -> T {
        match self {
            Generator::Push { v } => v.norm(),
            Generator::Rotation { theta } => theta.abs(),
            Generator::LinearGen { s } => s.norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Bump<T> {
    pub center: Point<T>,
    pub inner_radius: T,
    pub outer_radius: T,
    pub generator: Generator<T>,
}

/// Cutoff value and first two radial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct ProfileValue<T> {
    pub phi: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Scalar> Bump<T> {
    pub fn new(center: Point<T>, inner_radius: T, outer_radius: T, generator: Generator<T>) -> Result<Self, BumpError> {
        let b = Bump { center, inner_radius, outer_radius, generator };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), BumpError> {
        let (r0, r1) = (self.inner_radius, self.outer_radius);
        if !(r0 > T::zero() && r0 < r1 && r1 < T::lit(0.5)) {
            return Err(BumpError::BadRadii { inner: r0.as_f64(), outer: r1.as_f64() });
        }
        if let Generator::LinearGen { s } = &self.generator {
            if (s.b - s.c).abs() > T::lit(1e-12) * (T::one() + s.max_abs()) {
                return Err(BumpError::NotSymmetric);
            }
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        self.generator.magnitude() == T::zero()
    }

    pub fn profile(&self, r: T) -> ProfileValue<T> {
        let (r0, r1) = (self.inner_radius, self.outer_radius);
        if r <= r0 {
            return ProfileValue { phi: T::one(), d1: T::zero(), d2: T::zero() };
        }
        if r >= r1 {
            return ProfileValue { phi: T::zero(), d1: T::zero(), d2: T::zero() };
        }
        let width = r1 - r0;
        let t = (r - r0) / width;
        let one = T::one();
        let t2 = t * t;
        let s = one - t;
        let phi = s * s * s * (one + T::lit(3.0) * t + T::lit(6.0) * t2);
        let d1 = -T::lit(30.0) * t2 * (one - t) * (one - t) / width;
        let d2 = -T::lit(60.0) * t * (one - t) * (one - T::lit(2.0) * t) / (width * width);
        ProfileValue { phi, d1, d2 }
    }

    /// Lifted offset of `p` from the center.
    pub fn offset(&self, p: Point<T>) -> Vec2<T> {
        self.center.delta_to(p)
    }

    /// Whether `p` lies in the open support disk.
    #[inline]
    pub fn contains(&self, p: Point<T>) -> bool {
        self.offset(p).norm_sq() < self.outer_radius * self.outer_radius
    }

    fn place(&self, w: Vec2<T>) -> Point<T> {
        self.center.offset(w)
    }

    /// Hamiltonian vector field `J∇H` and its Jacobian at offset `w`.
    fn field(&self, w: Vec2<T>) -> (Vec2<T>, Mat2<T>) {
        let r = w.norm();
        let pv = self.profile(r);
        let j = Mat2::symplectic();
        let (grad, hess) = match self.generator {
            Generator::Push { v } => {
                let g = Vec2::new(-v.y, v.x);
                let ell = g.dot(w);
                if r <= self.inner_radius {
                    (g, Mat2::zero())
                } else {
                    let rhat = w.scale(T::one() / r);
                    let hphi = radial_hessian(rhat, r, pv);
                    let grad = g.scale(pv.phi) + rhat.scale(ell * pv.d1);
                    let hess = (g.outer(rhat) + rhat.outer(g)).scale(pv.d1) + hphi.scale(ell);
                    (grad, hess)
                }
            }
            Generator::LinearGen { s } => {
                let sw = s.apply(w);
                if r <= self.inner_radius {
                    (sw, s)
                } else {
                    let q = w.dot(sw) * T::lit(0.5);
                    let rhat = w.scale(T::one() / r);
                    let hphi = radial_hessian(rhat, r, pv);
                    let grad = sw.scale(pv.phi) + rhat.scale(q * pv.d1);
                    let hess = s.scale(pv.phi) + (sw.outer(rhat) + rhat.outer(sw)).scale(pv.d1) + hphi.scale(q);
                    (grad, hess)
                }
            }
            Generator::Rotation { .. } => unreachable!("rotation bumps are closed form"),
        };
        (j.apply(grad), j * hess)
    }

    /// One implicit-midpoint step of size `h`; returns the new offset and the step Jacobian.
    fn midpoint_step(&self, z0: Vec2<T>, h: T, step: usize) -> Result<(Vec2<T>, Mat2<T>), BumpError> {
        let half = T::lit(0.5);
        let tol = T::lit(4.0) * T::epsilon() * self.outer_radius;
        let (f0, _) = self.field(z0);
        let mut z1 = z0 + f0.scale(h);
        let mut last = T::infinity();
        for _ in 0..MAX_NEWTON {
            let m = (z0 + z1).scale(half);
            let (f, df) = self.field(m);
            let g = z1 - z0 - f.scale(h);
            let jg = Mat2::identity() - df.scale(h * half);
            let dz = match jg.inverse() {
                Some(inv) => inv.apply(g),
                None => break,
            };
            z1 = z1 - dz;
            let n = dz.norm();
            if n <= tol || (n >= last && n <= T::lit(64.0) * tol) {
                let m = (z0 + z1).scale(half);
                let (_, df) = self.field(m);
                let jac = cayley(&df.scale(h)).ok_or(BumpError::Nonconvergent { step, residual: n.as_f64() })?;
                return Ok((z1, jac));
            }
            last = n;
        }
        Err(BumpError::Nonconvergent { step, residual: last.as_f64() })
    }

    fn flow(&self, w: Vec2<T>, forward: bool) -> Result<(Vec2<T>, Mat2<T>), BumpError> {
        let n = T::from_int(SUBSTEPS as i64);
        let h = if forward { T::one() / n } else { -T::one() / n };
        let mut z = w;
        let mut jac = Mat2::identity();
        for step in 0..SUBSTEPS {
            let (z1, j) = self.midpoint_step(z, h, step)?;
            z = z1;
            jac = j * jac;
        }
        Ok((z, jac))
    }

    fn twist_angle(&self, r: T) -> (T, T) {
        match self.generator {
            Generator::Rotation { theta } => {
                let pv = self.profile(r);
                (theta * pv.phi, theta * pv.d1)
            }
            _ => (T::zero(), T::zero()),
        }
    }

    fn map_impl(&self, p: Point<T>, forward: bool, want_jac: bool) -> Result<(Point<T>, Mat2<T>), BumpError> {
        let w = self.offset(p);
        let r2 = w.norm_sq();
        if r2 >= self.outer_radius * self.outer_radius || self.is_trivial() {
            return Ok((p, Mat2::identity()));
        }
        match self.generator {
            Generator::Rotation { .. } => {
                let r = r2.sqrt();
                let (mut psi, mut dpsi) = self.twist_angle(r);
                if !forward {
                    psi = -psi;
                    dpsi = -dpsi;
                }
                let rot = Mat2::rotation(psi);
                let w1 = rot.apply(w);
                let jac = if want_jac && r > T::zero() {
                    let grad_psi = w.scale(dpsi / r);
                    rot + w1.perp().outer(grad_psi)
                } else {
                    rot
                };
                Ok((self.place(w1), jac))
            }
            _ => {
                let (w1, jac) = self.flow(w, forward)?;
                Ok((self.place(w1), jac))
            }
        }
    }

    pub fn eval(&self, p: Point<T>) -> Result<Point<T>, BumpError> {
        Ok(self.map_impl(p, true, false)?.0)
    }

    pub fn eval_inverse(&self, p: Point<T>) -> Result<Point<T>, BumpError> {
        Ok(self.map_impl(p, false, false)?.0)
    }

    /// Image and differential at `p`.
    pub fn eval_with_differential(&self, p: Point<T>) -> Result<(Point<T>, Mat2<T>), BumpError> {
        self.map_impl(p, true, true)
    }

    /// Inverse image and the differential of the inverse at `p`.
    pub fn inverse_with_differential(&self, p: Point<T>) -> Result<(Point<T>, Mat2<T>), BumpError> {
        self.map_impl(p, false, true)
    }

    pub fn differential(&self, p: Point<T>) -> Result<Mat2<T>, BumpError> {
        Ok(self.map_impl(p, true, true)?.1)
    }

    /// `max |D²φ|` in the plane. The radial eigenvalue is `φ''`, bounded by `C2/Δ²`; the
    /// tangential one is `φ'/r ≤ 30·t(1−t)²/Δ² ≤ (40/9)/Δ²` (using `r ≥ tΔ`), also below `C2/Δ²`.
    fn hessian_phi_bound(&self) -> T {
        let width = self.outer_radius - self.inner_radius;
        T::lit(PROFILE_C2) / (width * width)
    }

    /// Analytic upper bound on `sup|h − id| + sup‖Dh − I‖`.
    pub fn c1_bound(&self) -> T {
        let rho = self.outer_radius;
        let width = rho - self.inner_radius;
        let c1 = T::lit(PROFILE_C1);
        let hp = self.hessian_phi_bound();
        match self.generator {
            Generator::Rotation { theta } => {
                let t = theta.abs();
                rho * t + t * (T::one() + rho * c1 / width)
            }
            Generator::Push { v } => {
                let m = v.norm();
                let speed = m * (T::one() + rho * c1 / width);
                let lip = m * (T::lit(2.0) * c1 / width + rho * hp);
                speed + lip.exp_m1()
            }
            Generator::LinearGen { s } => {
                let m = s.norm();
                let speed = m * rho * (T::one() + rho * c1 / (T::lit(2.0) * width));
                let lip = m * (T::one() + T::lit(2.0) * rho * c1 / width + T::lit(0.5) * rho * rho * hp);
                speed + lip.exp_m1()
            }
        }
    }

    /// `C¹` bound per unit push magnitude (`c1_bound ≈ push_constant · |v|` for small pushes).
    pub fn push_constant(inner_radius: T, outer_radius: T) -> T {
        let width = outer_radius - inner_radius;
        let c1 = T::lit(PROFILE_C1);
        let c2 = T::lit(PROFILE_C2);
        T::one() + outer_radius * c1 / width + T::lit(2.0) * c1 / width + outer_radius * c2 / (width * width)
    }
}

fn radial_hessian<T: Scalar>(rhat: Vec2<T>, r: T, pv: ProfileValue<T>) -> Mat2<T> {
    let rr = rhat.outer(rhat);
    rr.scale(pv.d2) + (Mat2::identity() - rr).scale(pv.d1 / r)
}

/// Symmetric generator `S` whose linear-generator bump has differential exactly
/// `target` at its center (`cayley(J S / n)ⁿ = target`). Requires trace > −2.
pub fn linear_generator_for<T: Scalar>(target: &Mat2<T>) -> Option<Mat2<T>> {
    let log = sl2_log(target)?;
    let n = T::from_int(SUBSTEPS as i64);
    let root = sl2_exp(&log.scale(T::one() / n));
    let a = cayley_inverse(&root)?;
    // a = J S / n  ⇒  S = −J a n
    let s = (Mat2::symplectic() * a).scale(-n);
    Some(s.symmetric_part())
}

/// Factors a unit-determinant `L` into at most two symmetric-generator exponentials
/// `L = L₁ L₂ …`, each realizable by [`linear_generator_for`].
pub fn factor_unimodular<T: Scalar>(l: &Mat2<T>) -> Result<Vec<Mat2<T>>, BumpError> {
    let raw = || BumpError::Factorization([[l.a.as_f64(), l.b.as_f64()], [l.c.as_f64(), l.d.as_f64()]]);
    if (l.det() - T::one()).abs() > T::lit(1e-9) {
        return Err(raw());
    }
    if l.approx_eq(&Mat2::identity(), T::zero()) {
        return Ok(Vec::new());
    }
    if l.trace() > T::lit(-2.0) + T::lit(1e-9) {
        return Ok(vec![*l]);
    }
    // polar: L = P U with P positive symmetric (hyperbolic, trace ≥ 2) and U a rotation
    let (p, u) = polar(l).ok_or_else(raw)?;
    let theta = rotation_angle(&u);
    // split the rotation in halves so each factor has trace > −2
    let half = Mat2::rotation(theta * T::lit(0.5));
    Ok(vec![p, half, half])
}
