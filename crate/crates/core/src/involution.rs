//! Reversors: involutions `R` of the torus together with a closed-form description of `Fix(R)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{int, Mat2, Vec2};
use crate::scalar::Scalar;
use crate::torus::{wrap_delta, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvolutionError {
    #[error("matrix {0:?} is not an involution (m² ≠ I)")]
    NotInvolution([[i64; 2]; 2]),
    #[error("matrix {0:?} has |det| ≠ 1")]
    BadDeterminant([[i64; 2]; 2]),
    #[error("fixed set is two-dimensional (R = identity)")]
    TwoDimensionalFixSet,
    #[error("fixed set is zero-dimensional (isolated points)")]
    ZeroDimensionalFixSet,
    #[error("declared fix branch {branch} fails the pointwise test at s = {s}: |R(p) - p| = {error:e}")]
    BranchNotFixed { branch: usize, s: f64, error: f64 },
    #[error("fix-set normal {0:?} is not a primitive integer vector")]
    BadNormal([i64; 2]),
}

/// `Fix(R)` as the union of parallel closed geodesics
/// `{ p : normal·p ≡ offset + m/count (mod 1) }`, `m = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixSet<T> {
    pub normal: [i64; 2],
    pub count: u32,
    pub offset: T,
}

/// One closed branch `s ↦ origin + s·direction`, `s ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixBranch<T> {
    pub origin: Point<T>,
    pub direction: [i64; 2],
}

impl<T: Scalar> FixBranch<T> {
    pub fn at(&self, s: T) -> Point<T> {
        Point::new(
            self.origin.x + s * T::from_int(self.direction[0]),
            self.origin.y + s * T::from_int(self.direction[1]),
        )
    }

    /// Unit tangent of the branch.
    pub fn tangent(&self) -> Vec2<T> {
        Vec2::new(T::from_int(self.direction[0]), T::from_int(self.direction[1]))
            .normalized()
            .expect("nonzero direction")
    }
}

impl<T: Scalar> FixSet<T> {
    fn normal_vec(&self) -> Vec2<T> {
        Vec2::new(T::from_int(self.normal[0]), T::from_int(self.normal[1]))
    }

    pub fn validate(&self) -> Result<(), InvolutionError> {
        let g = int::gcd(self.normal[0], self.normal[1]);
        if g != 1 || self.count == 0 {
            return Err(InvolutionError::BadNormal(self.normal));
        }
        Ok(())
    }

    pub fn branches(&self) -> Vec<FixBranch<T>> {
        let n = self.normal_vec();
        let direction = [-self.normal[1], self.normal[0]];
        (0..self.count)
            .map(|m| {
                let level = self.offset + T::from_int(m as i64) / T::from_int(self.count as i64);
                let o = n.scale(level / n.norm_sq());
                FixBranch { origin: Point::new(o.x, o.y), direction }
            })
            .collect()
    }

    /// Smooth function vanishing exactly on the branches and on the mid-lines between them:
    /// `sin(2π·count·(normal·p − offset))`.
    pub fn level_function(&self, p: Point<T>) -> T {
        let t = T::from_int(self.normal[0]) * p.x + T::from_int(self.normal[1]) * p.y - self.offset;
        (T::TAU() * T::from_int(self.count as i64) * t).sin()
    }

    /// Euclidean distance from `p` to the nearest branch.
    pub fn distance(&self, p: Point<T>) -> T {
        let n = self.normal_vec();
        let t = T::from_int(self.normal[0]) * p.x + T::from_int(self.normal[1]) * p.y - self.offset;
        let k = T::from_int(self.count as i64);
        // levels are spaced 1/count apart
        let d = wrap_delta(t * k) / k;
        d.abs() / n.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum InvolutionSpec<T> {
    /// `(x, y) ↦ (−x, y + (k/2π)·sin 2πx)`, the reversor of the standard map with coupling `k`.
    StandardReversor {
        k: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fix: Option<FixSet<T>>,
    },
    /// `p ↦ M p (mod 1)` for an integer matrix with `M² = I`, `|det M| = 1`.
    Linear {
        matrix: [[i64; 2]; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fix: Option<FixSet<T>>,
    },
}

impl<T: Scalar> InvolutionSpec<T> {
    pub fn standard(k: T) -> Self {
        InvolutionSpec::StandardReversor { k, fix: None }
    }

    pub fn linear(matrix: [[i64; 2]; 2]) -> Result<Self, InvolutionError> {
        let d = int::det(&matrix);
        if d.abs() != 1 {
            return Err(InvolutionError::BadDeterminant(matrix));
        }
        if int::mul(&matrix, &matrix) != int::IDENTITY {
            return Err(InvolutionError::NotInvolution(matrix));
        }
        Ok(InvolutionSpec::Linear { matrix, fix: None })
    }

    pub fn identity() -> Self {
        InvolutionSpec::Linear { matrix: int::IDENTITY, fix: None }
    }

    pub fn apply(&self, p: Point<T>) -> Point<T> {
        match self {
            InvolutionSpec::StandardReversor { k, .. } => {
                let s = (T::TAU() * p.x).sin() * *k / T::TAU();
                Point::new(-p.x, p.y + s)
            }
            InvolutionSpec::Linear { matrix: m, .. } => {
                let f = |r: [i64; 2]| T::from_int(r[0]) * p.x + T::from_int(r[1]) * p.y;
                Point::new(f(m[0]), f(m[1]))
            }
        }
    }

    pub fn differential(&self, p: Point<T>) -> Mat2<T> {
        match self {
            InvolutionSpec::StandardReversor { k, .. } => {
                Mat2::new(-T::one(), T::zero(), *k * (T::TAU() * p.x).cos(), T::one())
            }
            InvolutionSpec::Linear { matrix, .. } => Mat2::from_int(*matrix),
        }
    }

    /// Declared fix set, or the closed form derived from the formula.
    pub fn fix_set(&self) -> Result<FixSet<T>, InvolutionError> {
        let declared = match self {
            InvolutionSpec::StandardReversor { fix, .. } | InvolutionSpec::Linear { fix, .. } => *fix,
        };
        if let Some(f) = declared {
            f.validate()?;
            return Ok(f);
        }
        match self {
            // −x ≡ x (mod 1)  ⇒  x ∈ {0, 1/2}
            InvolutionSpec::StandardReversor { .. } => Ok(FixSet { normal: [1, 0], count: 2, offset: T::zero() }),
            InvolutionSpec::Linear { matrix, .. } => linear_fix_set(matrix),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, InvolutionSpec::Linear { matrix, .. } if *matrix == int::IDENTITY)
    }
}

/// For an integer involution with det −1, `M − I = a ℓᵀ` has rank one; the fixed set is
/// `ℓ·p ∈ (1/g) Z` with `g = gcd(a)`.
fn linear_fix_set<T: Scalar>(m: &[[i64; 2]; 2]) -> Result<FixSet<T>, InvolutionError> {
    let r = [[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]];
    let rank0 = r.iter().all(|row| row.iter().all(|&v| v == 0));
    if rank0 {
        return Err(InvolutionError::TwoDimensionalFixSet);
    }
    if int::det(&r) != 0 {
        return Err(InvolutionError::ZeroDimensionalFixSet);
    }
    let row = if r[0] != [0, 0] { r[0] } else { r[1] };
    let g = int::gcd(row[0], row[1]);
    let mut ell = [row[0] / g, row[1] / g];
    if ell[0] < 0 || (ell[0] == 0 && ell[1] < 0) {
        ell = [-ell[0], -ell[1]];
    }
    let coef = |rw: [i64; 2]| {
        if ell[0] != 0 {
            rw[0] / ell[0]
        } else {
            rw[1] / ell[1]
        }
    };
    let a = [coef(r[0]), coef(r[1])];
    let count = int::gcd(a[0], a[1]) as u32;
    Ok(FixSet { normal: ell, count, offset: T::zero() })
}

/// Fixed set check for an explicit point: `|R(p) − p|` on the torus.
pub fn fix_defect<T: Scalar>(r: &InvolutionSpec<T>, p: Point<T>) -> T {
    crate::torus::torus_distance(r.apply(p), p)
}

/// Samples each branch at `resolution` points and verifies they are fixed to `tol`.
pub fn sample_branches<T: Scalar>(
    r: &InvolutionSpec<T>,
    resolution: usize,
    tol: T,
) -> Result<Vec<Vec<Point<T>>>, InvolutionError> {
    let fix = r.fix_set()?;
    let res = resolution.max(2);
    let mut out = Vec::new();
    for (bi, branch) in fix.branches().iter().enumerate() {
        let mut poly = Vec::with_capacity(res);
        for i in 0..res {
            let s = T::from_int(i as i64) / T::from_int(res as i64);
            let p = branch.at(s);
            let err = fix_defect(r, p);
            if !(err <= tol) {
                return Err(InvolutionError::BranchNotFixed { branch: bi, s: s.as_f64(), error: err.as_f64() });
            }
            poly.push(p);
        }
        out.push(poly);
    }
    Ok(out)
}
