//! Reversible local surgery: twin symmetrization of bumps, C¹ distances, prescribed
//! derivatives at free points, and trace shaping of periodic orbits by rotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bump::{factor_unimodular, linear_generator_for, Bump, BumpError, Generator, PROFILE_C1, PROFILE_C2};
use crate::cocycle::{orbit_matrix, CocycleError, OrbitClassification, PARABOLIC_TOL};
use crate::involution::InvolutionSpec;
use crate::linalg::{Mat2, Vec2};
use crate::maps::{Layer, MapError, MapSpec, Placement};
use crate::orbits::{rf_free_check, PeriodicOrbitRecord};
use crate::torus::{torus_distance, Point};
use crate::validation::{check_reversibility, GridSpec};

type P = Point<f64>;
type M = Mat2<f64>;

/// Reversibility tolerance required of the map being perturbed.
pub const REVERSIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("hypothesis violated: {hypothesis} ({detail})")]
    Hypothesis { hypothesis: &'static str, detail: String },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Bump(#[from] BumpError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("no trace bracket found within |theta| <= {0}")]
    Bracket(f64),
    #[error("verification failed: {0}")]
    Verification(String),
}

fn hypothesis(hypothesis: &'static str, detail: impl Into<String>) -> PerturbError {
    PerturbError::Hypothesis { hypothesis, detail: detail.into() }
}

fn require_reversible(f: &MapSpec<f64>, r: &InvolutionSpec<f64>) -> Result<(), PerturbError> {
    let rep = check_reversibility(f, r, &GridSpec::square(16), REVERSIBILITY_TOL)?;
    if !rep.passed {
        return Err(hypothesis("f reversible", format!("error {:e}", rep.max_reversibility_error)));
    }
    Ok(())
}

/// Polar sample of the closed disk `B(c, ρ)`.
pub fn disk_samples(c: P, rho: f64, rings: usize, spokes: usize) -> Vec<P> {
    let mut out = vec![c];
    for i in 1..=rings {
        let r = rho * i as f64 / rings as f64;
        for j in 0..spokes {
            let a = std::f64::consts::TAU * (j as f64 + 0.5 * (i % 2) as f64) / spokes as f64;
            out.push(c.offset(Vec2::new(r * a.cos(), r * a.sin())));
        }
    }
    out
}

/// Checks the twin hypotheses for a bump `h` about to be placed on `f`.
fn twin_admissible(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, h: &Bump<f64>, placement: Placement) -> Result<(), PerturbError> {
    let c = h.center;
    let rho = h.outer_radius;
    let fc = f.eval(c)?;
    let gap = torus_distance(fc, r.apply(c));
    if gap <= 2.0 * rho {
        return Err(hypothesis("f(x) != R(x)", format!("|f(x) - R(x)| = {gap:e} <= 2 rho = {:e}", 2.0 * rho)));
    }
    let fix = r.fix_set().map_err(MapError::from)?;
    let d = fix.distance(c);
    if d <= rho {
        return Err(hypothesis("x not in Fix(R)", format!("distance to Fix(R) {d:e} <= rho {rho:e}")));
    }
    // supports of h and its twin R∘h⁻¹∘R must not interact along the composition
    for z in disk_samples(c, rho, 12, 48) {
        if h.contains(r.apply(z)) {
            return Err(hypothesis("support disjoint from its twin", format!("R({z:?}) lies in the bump")));
        }
        let hit = match placement {
            Placement::Pre => h.contains(r.apply(f.eval(z)?)),
            Placement::Post => h.contains(f.eval(r.apply(z))?),
        };
        if hit {
            return Err(hypothesis("twin support avoids f-image of the bump", format!("sample {z:?}")));
        }
    }
    Ok(())
}

fn symmetrize_with(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, h: &Bump<f64>, placement: Placement) -> Result<MapSpec<f64>, PerturbError> {
    h.validate()?;
    if h.is_trivial() {
        return Ok(f.clone());
    }
    require_reversible(f, r)?;
    twin_admissible(f, r, h, placement)?;
    Ok(f.with_layer(Layer { placement, twin: true, bump: *h }, Some(r)))
}

/// `g = (R∘h⁻¹∘R) ∘ f ∘ h`: equals `f∘h` on the bump and stays exactly reversible.
pub fn symmetrize(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, h: &Bump<f64>) -> Result<MapSpec<f64>, PerturbError> {
    symmetrize_with(f, r, h, Placement::Pre)
}

/// `g = h ∘ f ∘ (R∘h⁻¹∘R)`.
pub fn symmetrize_post(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, h: &Bump<f64>) -> Result<MapSpec<f64>, PerturbError> {
    symmetrize_with(f, r, h, Placement::Post)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Distance {
    /// `max |f(p) − g(p)| + ‖Df(p) − Dg(p)‖` over the samples.
    pub measured: f64,
    pub worst_point: P,
    /// Sum of the analytic `C¹` bounds of the bumps `g` adds to `f`.
    pub bump_bound: f64,
    pub sample_count: usize,
}

/// Layers of `g` not already present in `f` (all of them if `g` is not an extension of `f`).
fn added_layers<'a>(f: &MapSpec<f64>, g: &'a MapSpec<f64>) -> &'a [Layer<f64>] {
    let (fl, gl) = (f.layers(), g.layers());
    if f.root() == g.root() && gl.len() >= fl.len() && &gl[..fl.len()] == fl {
        &gl[fl.len()..]
    } else {
        gl
    }
}

/// Sampled `C¹` distance between `f` and `g`: the grid plus dense samples of every added
/// bump support and the regions its twin and composition touch.
pub fn c1_distance(f: &MapSpec<f64>, g: &MapSpec<f64>, grid: &GridSpec) -> Result<C1Distance, MapError> {
    let mut samples: Vec<P> = grid.points();
    let layers = added_layers(f, g);
    let reversor = g.builtin_reversor();
    let (rings, spokes) = if layers.len() > 50 { (3, 12) } else { (16, 48) };
    for l in layers {
        let disk = disk_samples(l.bump.center, l.bump.outer_radius, rings, spokes);
        for z in disk {
            samples.push(z);
            samples.push(f.eval_inverse(z)?);
            if let Some(r) = &reversor {
                let rz = r.apply(z);
                samples.push(rz);
                samples.push(f.eval_inverse(rz)?);
            }
        }
    }
    let vals: Vec<f64> = samples
        .par_iter()
        .map(|&p| -> Result<f64, MapError> {
            let (fp, df) = f.eval_with_differential(p)?;
            let (gp, dg) = g.eval_with_differential(p)?;
            Ok(torus_distance(fp, gp) + (df - dg).norm())
        })
        .collect::<Result<_, _>>()?;
    let mut worst = (0.0, samples[0]);
    for (v, p) in vals.iter().zip(&samples) {
        if *v > worst.0 {
            worst = (*v, *p);
        }
    }
    let bump_bound = layers.iter().map(|l| l.bump.c1_bound()).sum();
    Ok(C1Distance { measured: worst.0, worst_point: worst.1, bump_bound, sample_count: samples.len() })
}

/// Dimensionless `C¹` constant of a linear-generator bump with `ρ₀ = ρ/2`:
/// `c1(h) ≲ ‖S‖·FRANKS_LAMBDA` for small `‖S‖`.
pub fn franks_lambda() -> f64 {
    // Δ = ρ/2: 2ρC1/Δ = 4C1, ½ρ²·C2/Δ² = 2C2, speed term ≤ ρ(1 + C1) ≤ 1 + C1
    (1.0 + PROFILE_C1) + (1.0 + 4.0 * PROFILE_C1 + 2.0 * PROFILE_C2)
}

/// Largest admissible `‖G − Df_x‖` for a Franks target at tolerance `ε`:
/// `δ(ε) = ε / (Λ·‖Df_x⁻¹‖·(‖Df_x‖ + ‖DR‖²))` with `Λ = franks_lambda()`: the bump
/// generator has `‖S‖ ≈ ‖Df_x⁻¹‖·‖G − Df_x‖`, and composing with `f` and the twin scales
/// its `C¹` size by at most `‖Df‖` and `‖DR‖²`. The measured distance is re-checked after
/// construction.
pub fn franks_delta(eps: f64, df: &M, dr_norm: f64) -> f64 {
    let inv = df.inverse().map(|m| m.norm()).unwrap_or(f64::INFINITY);
    eps / (franks_lambda() * inv * (df.norm() + dr_norm * dr_norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FranksOutput {
    pub map: MapSpec<f64>,
    pub deltas: Vec<f64>,
    pub c1: C1Distance,
}

/// Builds `g` with `Dg_{xᵢ} = Gᵢ` by pre-composing twinned linear-generator bumps at each `xᵢ`.
pub fn franks(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    theta: &[P],
    targets: &[M],
    rho: f64,
    eps: f64,
) -> Result<FranksOutput, PerturbError> {
    if theta.len() != targets.len() {
        return Err(hypothesis("one target per point", format!("{} points, {} targets", theta.len(), targets.len())));
    }
    require_reversible(f, r)?;
    let free = rf_free_check(f, theta, r, 4.0 * rho)?;
    if !free.free {
        return Err(hypothesis("Theta is (R,f)-free", format!("margin {:e} <= 4 rho, witness {:?}", free.margin, free.witness)));
    }
    for i in 0..theta.len() {
        for j in 0..i {
            if torus_distance(theta[i], theta[j]) <= 4.0 * rho {
                return Err(hypothesis("points separated by 4 rho", format!("points {j} and {i}")));
            }
        }
    }
    let mut g = f.clone();
    let mut deltas = Vec::new();
    for (x, target) in theta.iter().zip(targets) {
        if (target.det() - 1.0).abs() > 1e-9 {
            return Err(hypothesis("target has unit determinant", format!("det {}", target.det())));
        }
        let df = f.differential(*x)?;
        let dr = r.differential(*x).norm().max(r.differential(f.eval(*x)?).norm());
        let delta = franks_delta(eps, &df, dr);
        let dist = (*target - df).norm();
        if dist >= delta {
            return Err(PerturbError::Budget(format!("|G - Df| = {dist:e} exceeds delta(eps) = {delta:e}")));
        }
        deltas.push(delta);
        let inv = df.inverse().ok_or_else(|| hypothesis("Df invertible", format!("{df:?}")))?;
        let l = inv * *target;
        let l = l.scale(1.0 / l.det().sqrt());
        if l.approx_eq(&Mat2::identity(), 1e-15) {
            continue;
        }
        for factor in factor_unimodular(&l)? {
            let s = linear_generator_for(&factor).ok_or(BumpError::Factorization([[factor.a, factor.b], [factor.c, factor.d]]))?;
            let h = Bump::new(*x, 0.5 * rho, rho, Generator::LinearGen { s })?;
            twin_admissible(f, r, &h, Placement::Pre)?;
            // twin of every bump must stay off the images of Θ
            for y in theta {
                if h.contains(r.apply(f.eval(*y)?)) {
                    return Err(hypothesis("twin lands off Theta", format!("f({y:?}) in twin support")));
                }
            }
            g = g.with_layer(Layer { placement: Placement::Pre, twin: true, bump: h }, Some(r));
        }
    }
    for (x, target) in theta.iter().zip(targets) {
        let dg = g.differential(*x)?;
        let err = (dg - *target).max_abs();
        if err > 1e-8 {
            return Err(PerturbError::Verification(format!("Dg at {x:?} misses target by {err:e}")));
        }
    }
    let c1 = c1_distance(f, &g, &GridSpec::square(32))?;
    if c1.measured > eps {
        return Err(PerturbError::Budget(format!("c1 distance {:e} exceeds eps {eps:e}", c1.measured)));
    }
    Ok(FranksOutput { map: g, deltas, c1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceShaping {
    pub map: MapSpec<f64>,
    pub theta: f64,
    pub radius: f64,
    pub trace_before: f64,
    pub trace_after: f64,
    pub record: PeriodicOrbitRecord,
}

/// Radius for a rotation bump at `orbit[0]` that avoids the rest of the orbit and its R-image.
fn orbit_clearance(orbit: &[P], r: &InvolutionSpec<f64>) -> f64 {
    let x0 = orbit[0];
    let dr = r.differential(x0).norm().max(1.0);
    let mut d = f64::INFINITY;
    for (i, z) in orbit.iter().enumerate() {
        if i > 0 {
            d = d.min(torus_distance(x0, *z));
        }
        let rz = r.apply(*z);
        let e = torus_distance(x0, rz);
        if e > 1e-9 {
            d = d.min(e / dr);
        }
    }
    d
}

fn trace_of(g: &MapSpec<f64>, x0: P, period: usize) -> Result<f64, PerturbError> {
    Ok(orbit_matrix(g, x0, period)?.trace())
}

/// Rotation-bump family at the first orbit point; bisects the angle until `trace = target`.
fn shape_trace(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    orbit: &PeriodicOrbitRecord,
    delta: f64,
    target: f64,
    tol: f64,
) -> Result<TraceShaping, PerturbError> {
    let x0 = orbit.representative;
    let period = orbit.period;
    let t0 = trace_of(f, x0, period)?;
    let points = f.orbit(x0, period - 1)?;
    let symmetric = torus_distance(r.apply(x0), x0) <= 1e-9;
    if !symmetric {
        let free = rf_free_check(f, &points, r, 0.0)?;
        if free.margin <= 1e-6 {
            return Err(hypothesis("orbit is (R,f)-free or symmetric", format!("margin {:e}", free.margin)));
        }
    }
    let rho = (0.45 * orbit_clearance(&points, r)).min(0.05);
    if !(rho > 1e-6) {
        return Err(hypothesis("orbit points separated", format!("clearance radius {rho:e}")));
    }
    let build = |theta: f64| -> Result<MapSpec<f64>, PerturbError> {
        let h = Bump::new(x0, 0.5 * rho, rho, Generator::Rotation { theta })?;
        Ok(f.with_layer(Layer { placement: Placement::Pre, twin: true, bump: h }, Some(r)))
    };
    let tau = |theta: f64| -> Result<f64, PerturbError> { Ok(trace_of(&build(theta)?, x0, period)? - target) };
    let tau0 = t0 - target;
    let finish = |theta: f64, g: MapSpec<f64>| -> Result<TraceShaping, PerturbError> {
        let trace_after = trace_of(&g, x0, period)?;
        let record = PeriodicOrbitRecord::build(&g, Some(r), x0, period, orbit.source)?;
        Ok(TraceShaping { map: g, theta, radius: rho, trace_before: t0, trace_after, record })
    };
    if tau0.abs() <= tol {
        return finish(0.0, f.clone());
    }
    // scan outward for the smallest |θ| with a sign change, widening the range up to 4δ
    let mut bracket = None;
    let steps = 64;
    'widen: for widen in 0..3 {
        let span = delta * (1 << widen) as f64;
        let mut prev = (0.0, tau0, 0.0, tau0);
        for k in 1..=steps {
            let th = span * k as f64 / steps as f64;
            let (tp, tm) = (tau(th)?, tau(-th)?);
            if (tp > 0.0) != (prev.1 > 0.0) {
                bracket = Some((prev.0, prev.1, th));
                break 'widen;
            }
            if (tm > 0.0) != (prev.3 > 0.0) {
                bracket = Some((prev.2, prev.3, -th));
                break 'widen;
            }
            prev = (th, tp, -th, tm);
        }
    }
    let (mut a, mut ta, mut b) = bracket.ok_or(PerturbError::Bracket(4.0 * delta))?;
    let mut best = (a, ta);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tm = tau(m)?;
        if tm.abs() < best.1.abs() {
            best = (m, tm);
        }
        if tm.abs() <= 0.1 * tol || m == a || m == b {
            break;
        }
        if (tm > 0.0) == (ta > 0.0) {
            a = m;
            ta = tm;
        } else {
            b = m;
        }
    }
    if best.1.abs() > tol {
        return Err(PerturbError::Verification(format!("trace bisection stalled at residual {:e}", best.1)));
    }
    finish(best.0, build(best.0)?)
}

fn rotation_budget(period: usize, delta: f64) -> f64 {
    2.0 * (period as f64 * (1.0 + delta).ln()).cosh()
}

/// Drives `|trace Dg^p|` of the orbit to 2 by a twinned rotation bump at its representative.
pub fn make_parabolic(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, orbit: &PeriodicOrbitRecord, delta: f64) -> Result<TraceShaping, PerturbError> {
    let t0 = trace_of(f, orbit.representative, orbit.period)?;
    let budget = rotation_budget(orbit.period, delta);
    if t0.abs() > budget {
        return Err(PerturbError::Budget(format!("|trace| = {} exceeds rotation budget {budget}", t0.abs())));
    }
    let target = if t0 < 0.0 { -2.0 } else { 2.0 };
    shape_trace(f, r, orbit, delta, target, 1e-9)
}

/// Pushes the orbit to `|trace| = 2 − min(0.1, 10·tol)`, an elliptic orbit.
pub fn make_elliptic(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, orbit: &PeriodicOrbitRecord, delta: f64) -> Result<TraceShaping, PerturbError> {
    let t0 = trace_of(f, orbit.representative, orbit.period)?;
    let band = (10.0 * PARABOLIC_TOL).min(0.1);
    if t0.abs() < 2.0 - PARABOLIC_TOL {
        let record = PeriodicOrbitRecord::build(f, Some(r), orbit.representative, orbit.period, orbit.source)?;
        return Ok(TraceShaping { map: f.clone(), theta: 0.0, radius: 0.0, trace_before: t0, trace_after: t0, record });
    }
    let budget = rotation_budget(orbit.period, delta);
    if t0.abs() > budget {
        return Err(PerturbError::Budget(format!("|trace| = {} exceeds rotation budget {budget}", t0.abs())));
    }
    let target = (2.0 - band) * t0.signum();
    let out = shape_trace(f, r, orbit, delta, target, 1e-3 * band)?;
    if !matches!(out.record.classification, OrbitClassification::Elliptic { .. }) {
        return Err(PerturbError::Verification(format!("result classified {}", out.record.classification.label())));
    }
    Ok(out)
}

/// Pushes a parabolic orbit to `|trace| = 2 + min(0.1, 10·tol)`, a hyperbolic orbit.
pub fn make_hyperbolic(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, orbit: &PeriodicOrbitRecord, delta: f64) -> Result<TraceShaping, PerturbError> {
    let t0 = trace_of(f, orbit.representative, orbit.period)?;
    let band = (10.0 * PARABOLIC_TOL).min(0.1);
    if t0.abs() > 2.0 + PARABOLIC_TOL {
        let record = PeriodicOrbitRecord::build(f, Some(r), orbit.representative, orbit.period, orbit.source)?;
        return Ok(TraceShaping { map: f.clone(), theta: 0.0, radius: 0.0, trace_before: t0, trace_after: t0, record });
    }
    let sign = if t0 < 0.0 { -1.0 } else { 1.0 };
    let out = shape_trace(f, r, orbit, delta, (2.0 + band) * sign, 1e-3 * band)?;
    if !matches!(out.record.classification, OrbitClassification::Hyperbolic { .. }) {
        return Err(PerturbError::Verification(format!("result classified {}", out.record.classification.label())));
    }
    Ok(out)
}
