//! Products of differentials along orbits, trace classification, Lyapunov exponents and
//! finite-grid cone certificates of uniform hyperbolicity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::maps::{MapError, MapSpec};
use crate::scalar::Scalar;
use crate::torus::{torus_distance, Point};
use crate::validation::GridSpec;

/// Default half-width of the parabolic band around `|trace| = 2`.
pub const PARABOLIC_TOL: f64 = 1e-6;
/// Closure residual above which a point is not treated as periodic.
pub const PERIODIC_RESIDUAL: f64 = 1e-8;

const RESCALE_ABOVE: f64 = 1e150;
const DET_FIX_BELOW: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocycleError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("period must be at least 1")]
    ZeroPeriod,
    #[error("point has minimal period {minimal}, a proper divisor of the requested period")]
    NonMinimalPeriod { minimal: usize },
}

/// `exp(log_scale) · matrix`, with the determinant drift that was removed along the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitMatrix<T> {
    pub matrix: Mat2<T>,
    pub log_scale: T,
    /// Sum of `|log det|` of the corrections applied to keep the determinant at one.
    pub det_correction: T,
}

impl<T: Scalar> OrbitMatrix<T> {
    fn identity() -> Self {
        OrbitMatrix { matrix: Mat2::identity(), log_scale: T::zero(), det_correction: T::zero() }
    }

    fn push(&mut self, d: Mat2<T>) {
        let mut m = d * self.matrix;
        let nrm = m.frobenius();
        if self.log_scale == T::zero() && nrm * nrm < T::lit(DET_FIX_BELOW) {
            let det = m.det();
            if det > T::zero() && det != T::one() {
                m = m.scale(T::one() / det.sqrt());
                self.det_correction += det.ln().abs();
            }
        }
        if nrm > T::lit(RESCALE_ABOVE).min(T::max_value().sqrt()) {
            m = m.scale(T::one() / nrm);
            self.log_scale += nrm.ln();
        }
        self.matrix = m;
    }

    /// Unscaled product (may overflow to infinity for very long hyperbolic orbits).
    pub fn value(&self) -> Mat2<T> {
        self.matrix.scale(self.log_scale.exp())
    }

    pub fn trace(&self) -> T {
        self.matrix.trace() * self.log_scale.exp()
    }

    pub fn is_scaled(&self) -> bool {
        self.log_scale != T::zero()
    }
}

/// `Df_{fⁿ⁻¹p} ⋯ Df_p`, accumulated with determinant renormalization and overflow scaling.
pub fn orbit_matrix<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize) -> Result<OrbitMatrix<T>, CocycleError> {
    if n == 0 {
        return Err(CocycleError::ZeroPeriod);
    }
    let mut acc = OrbitMatrix::identity();
    let mut q = p;
    for _ in 0..n {
        let (next, d) = map.eval_with_differential(q)?;
        acc.push(d);
        q = next;
    }
    Ok(acc)
}

/// Same as [`orbit_matrix`] for `f⁻¹`: `D(f⁻ⁿ)` at `p`.
pub fn inverse_orbit_matrix<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize) -> Result<OrbitMatrix<T>, CocycleError> {
    if n == 0 {
        return Err(CocycleError::ZeroPeriod);
    }
    let mut acc = OrbitMatrix::identity();
    let mut q = p;
    for _ in 0..n {
        let (next, d) = map.inverse_with_differential(q)?;
        acc.push(d);
        q = next;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum OrbitClassification {
    Elliptic { trace: f64 },
    Hyperbolic { trace: f64, multiplier: f64 },
    ParabolicBand { trace: f64 },
    NotPeriodic { residual: f64 },
}

impl OrbitClassification {
    pub fn from_trace(trace: f64, tol: f64) -> Self {
        let a = trace.abs();
        if a < 2.0 - tol {
            OrbitClassification::Elliptic { trace }
        } else if a > 2.0 + tol {
            let disc = (trace * trace - 4.0).max(0.0).sqrt();
            let multiplier = if trace.is_finite() { 0.5 * (trace + trace.signum() * disc) } else { trace };
            OrbitClassification::Hyperbolic { trace: clamp(trace), multiplier: clamp(multiplier) }
        } else {
            OrbitClassification::ParabolicBand { trace }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OrbitClassification::Elliptic { .. } => "elliptic",
            OrbitClassification::Hyperbolic { .. } => "hyperbolic",
            OrbitClassification::ParabolicBand { .. } => "parabolic",
            OrbitClassification::NotPeriodic { .. } => "not-periodic",
        }
    }

    pub fn trace(&self) -> Option<f64> {
        match *self {
            OrbitClassification::Elliptic { trace }
            | OrbitClassification::Hyperbolic { trace, .. }
            | OrbitClassification::ParabolicBand { trace } => Some(trace),
            OrbitClassification::NotPeriodic { .. } => None,
        }
    }

    pub fn is_elliptic(&self) -> bool {
        matches!(self, OrbitClassification::Elliptic { .. })
    }
}

/// Keeps reported numbers finite for JSON output.
fn clamp(v: f64) -> f64 {
    v.clamp(-f64::MAX, f64::MAX)
}

/// Smallest `d | n` with `fᵈ(p) ≈ p`, or `None` if `p` does not close up after `n` steps.
pub fn minimal_period<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize, tol: f64) -> Result<Option<usize>, MapError> {
    let orbit = map.orbit(p, n)?;
    Ok((1..=n).find(|d| n % d == 0 && torus_distance(orbit[*d], p).as_f64() <= tol))
}

/// Classifies `p` as a period-`n` point by the trace of `Dfⁿ_p`.
pub fn classify_periodic<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize, tol: f64) -> Result<OrbitClassification, CocycleError> {
    if n == 0 {
        return Err(CocycleError::ZeroPeriod);
    }
    let orbit = map.orbit(p, n)?;
    let residual = torus_distance(orbit[n], p).as_f64();
    if residual > PERIODIC_RESIDUAL {
        return Ok(OrbitClassification::NotPeriodic { residual });
    }
    if let Some(d) = (1..n).find(|d| n % d == 0 && torus_distance(orbit[*d], p).as_f64() <= PERIODIC_RESIDUAL) {
        return Err(CocycleError::NonMinimalPeriod { minimal: d });
    }
    let m = orbit_matrix(map, p, n)?;
    Ok(OrbitClassification::from_trace(m.trace().as_f64(), tol))
}

fn seeded_direction<T: Scalar>(seed: u64) -> Vec2<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    Vec2::new(T::lit(a.cos()), T::lit(a.sin()))
}

fn lyapunov_impl<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize, seed: u64, backward: bool) -> Result<f64, MapError> {
    let mut v = seeded_direction::<T>(seed);
    let mut q = p;
    let mut sum = 0.0;
    for _ in 0..n {
        let (next, d) = if backward { map.inverse_with_differential(q)? } else { map.eval_with_differential(q)? };
        let w = d.apply(v);
        let g = w.norm();
        sum += g.as_f64().ln();
        v = w.scale(T::one() / g);
        q = next;
    }
    Ok(sum / n.max(1) as f64)
}

/// Largest Lyapunov exponent estimate over `n` steps from a seeded initial tangent direction.
pub fn lyapunov<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize, seed: u64) -> Result<f64, MapError> {
    lyapunov_impl(map, p, n, seed, false)
}

/// The same estimate for `f⁻¹`.
pub fn lyapunov_backward<T: Scalar>(map: &MapSpec<T>, p: Point<T>, n: usize, seed: u64) -> Result<f64, MapError> {
    lyapunov_impl(map, p, n, seed, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum CertificateVerdict {
    CertifiedOnGrid,
    FailedAt { points: Vec<[f64; 2]> },
}

/// Per-node cone data: axes (unit, dominant singular directions of `Df^{±m}`) and the
/// worst expansion factors over each cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCell {
    pub point: [f64; 2],
    pub unstable_axis: [f64; 2],
    pub stable_axis: [f64; 2],
    pub unstable_growth: f64,
    pub stable_growth: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCertificate {
    pub m: usize,
    pub sigma: f64,
    pub grid: GridSpec,
    /// Half-opening angle of every cone, in radians.
    pub cone_half_angle: f64,
    pub verdict: CertificateVerdict,
    pub cells: Vec<ConeCell>,
}

impl HyperbolicityCertificate {
    pub fn certified(&self) -> bool {
        self.verdict == CertificateVerdict::CertifiedOnGrid
    }

    pub fn failures(&self) -> &[[f64; 2]] {
        match &self.verdict {
            CertificateVerdict::CertifiedOnGrid => &[],
            CertificateVerdict::FailedAt { points } => points,
        }
    }
}

const CONE_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

/// Dominant right singular direction of the product over `m` steps starting at `p`.
fn cone_axis<T: Scalar>(map: &MapSpec<T>, p: Point<T>, m: usize, backward: bool) -> Result<(Vec2<T>, Mat2<T>, Point<T>), CocycleError> {
    let prod = if backward { inverse_orbit_matrix(map, p, m)? } else { orbit_matrix(map, p, m)? };
    let mut q = p;
    for _ in 0..m {
        q = if backward { map.eval_inverse(q)? } else { map.eval(q)? };
    }
    let svd = prod.matrix.svd();
    Ok((svd.v.col(0), prod.value(), q))
}

/// Invariance and growth of the cone around `axis` at `p` under `m` steps (forward or backward).
fn cone_test<T: Scalar>(map: &MapSpec<T>, p: Point<T>, m: usize, sigma: f64, backward: bool) -> Result<(Vec2<T>, f64, bool), CocycleError> {
    let (axis, mat, image) = cone_axis(map, p, m, backward)?;
    let (target, _, _) = cone_axis(map, image, m, backward)?;
    let h = T::lit(CONE_HALF_ANGLE);
    let edges = [Mat2::rotation(h).apply(axis), axis, Mat2::rotation(-h).apply(axis)];
    let cos_h = T::lit(CONE_HALF_ANGLE.cos()) - T::lit(1e-12);
    let mut growth = f64::INFINITY;
    let mut inside = true;
    let mut sign = None;
    for e in edges {
        let w = mat.apply(e);
        let n = w.norm();
        growth = growth.min(n.as_f64());
        if !(n > T::zero() && n.is_finite()) {
            inside = false;
            continue;
        }
        let c = w.dot(target) / n;
        let s = c >= T::zero();
        if *sign.get_or_insert(s) != s || c.abs() < cos_h {
            inside = false;
        }
    }
    let passed = inside && growth * sigma >= 1.0;
    Ok((axis, growth, passed))
}

/// Grid probe of `m`-uniform hyperbolicity: at each node the cone of half-angle 45° about
/// the dominant singular direction of `Dfᵐ` must map into the corresponding cone at the
/// image with every vector stretched by at least `1/σ`, and likewise for `f⁻¹`.
pub fn cone_certificate<T: Scalar>(
    map: &MapSpec<T>,
    grid: &GridSpec,
    m: usize,
    sigma: f64,
) -> Result<HyperbolicityCertificate, CocycleError> {
    if m == 0 {
        return Err(CocycleError::ZeroPeriod);
    }
    let cells: Vec<ConeCell> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p: Point<T> = grid.node(i);
            let (ua, ug, up) = cone_test(map, p, m, sigma, false)?;
            let (sa, sg, sp) = cone_test(map, p, m, sigma, true)?;
            Ok(ConeCell {
                point: [p.x.as_f64(), p.y.as_f64()],
                unstable_axis: [ua.x.as_f64(), ua.y.as_f64()],
                stable_axis: [sa.x.as_f64(), sa.y.as_f64()],
                unstable_growth: clamp(ug),
                stable_growth: clamp(sg),
                passed: up && sp,
            })
        })
        .collect::<Result<_, CocycleError>>()?;
    let failed: Vec<[f64; 2]> = cells.iter().filter(|c| !c.passed).map(|c| c.point).collect();
    let verdict = if failed.is_empty() { CertificateVerdict::CertifiedOnGrid } else { CertificateVerdict::FailedAt { points: failed } };
    Ok(HyperbolicityCertificate { m, sigma, grid: *grid, cone_half_angle: CONE_HALF_ANGLE, verdict, cells })
}
