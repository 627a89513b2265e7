//! Closing a recurrent orbit: pick two returns of a seed orbit to a small disk, then
//! steer the later one onto the orbit of the earlier one with a chain of reversible push
//! bumps, so that it becomes periodic for the perturbed map.

use std::sync::OnceLock;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bump::{Bump, BumpError, Generator};
use crate::cocycle::CocycleError;
use crate::involution::InvolutionSpec;
use crate::linalg::{Mat2, Vec2};
use crate::maps::{Layer, MapError, MapSpec, Placement};
use crate::orbits::{refine_periodic, rf_free_check, OrbitSource, PeriodicOrbitRecord};
use crate::perturb::{c1_distance, disk_samples, C1Distance, REVERSIBILITY_TOL};
use crate::torus::{torus_distance, Point, PointIndex};
use crate::validation::{check_area, check_reversibility, GridSpec, ValidationReport};

type P = Point<f64>;
type M = Mat2<f64>;

/// Closure `|gᴺ(a) − fᴺ(b)|` the chain must reach before polishing.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Residual of the returned periodic point.
pub const POLISH_TOL: f64 = 1e-10;
pub const AREA_TOL: f64 = 1e-8;
/// Constant of the `N > 40·𝔅/σ` budget formula.
pub const BUDGET_CONSTANT: f64 = 40.0;

/// Outer over inner radius of each chain bump.
const PLATEAU_RATIO: f64 = 20.0;
/// Fraction of the obstacle clearance used as bump radius.
const CLEARANCE_FRACTION: f64 = 0.45;
const CAPACITY_MARGIN: f64 = 1.05;
const HYPOTHESIS_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosingError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Bump(#[from] BumpError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(
        "no recurrence within {n_max} iterates: best near-return at n = {best_time}, distance {best_distance:e} (disk radius {disk_radius:e})"
    )]
    NoRecurrence { n_max: usize, best_time: usize, best_distance: f64, disk_radius: f64 },
    #[error("no admissible pair at inflation {eta}: use a smaller inflation or a longer orbit")]
    NoAdmissiblePair { eta: f64 },
    #[error("push capacity exceeded at step {step} (ratio {ratio:.3}); about N = {needed} steps would suffice, have {have}")]
    Capacity { step: usize, ratio: f64, needed: usize, have: usize },
    #[error("bump supports not disjoint at step {step} (clearance {clearance:e})")]
    Disjointness { step: usize, clearance: f64 },
    #[error("orbit window not (R,f)-free (margin {margin:e})")]
    NotFree { margin: f64 },
    #[error("verification failed: {0}")]
    Verification(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: P,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: P, radius: f64) -> Self {
        Disk { center, radius }
    }

    pub fn contains(&self, p: P) -> bool {
        torus_distance(self.center, p) < self.radius
    }
}

/// Square aligned with a basis `E`: `{ p : |Eᵀ(p − center)|_∞ ≤ half_width }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub center: P,
    pub half_width: f64,
}

impl Square {
    /// Membership in the square inflated by `1 + eta`.
    pub fn contains(&self, basis: &M, p: P, eta: f64) -> bool {
        sup_in_basis(basis, self.center.delta_to(p)) <= self.half_width * (1.0 + eta)
    }
}

fn sup_in_basis(basis: &M, d: Vec2<f64>) -> f64 {
    let c = basis.transpose().apply(d);
    c.x.abs().max(c.y.abs())
}

/// Working state of one closing attempt; serialized as the closing trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosingContext {
    pub anchor: P,
    pub radius: f64,
    pub epsilon: f64,
    pub disk_radius: f64,
    pub seed_point: P,
    /// Orbit prefix `n₀` the returns were taken from.
    pub recurrence_length: usize,
    /// `max ‖Df^{±1}‖` along the chain.
    pub norm_bound: f64,
    /// `𝔅`: largest condition number of the cocycle products along the chain.
    pub distortion: f64,
    /// Chain length `N`.
    pub budget: usize,
    /// `40·𝔅/σ`, recorded for comparison with `budget`.
    pub budget_formula: f64,
    /// `σ`: smallest admissible displacement per unit of `C¹` size over the chain.
    pub push_ratio: f64,
    pub basis: M,
    pub return_times: Vec<usize>,
    pub pair: Option<(usize, usize)>,
    pub square: Option<Square>,
    pub eta: f64,
    /// Period `j − i` of the closed orbit (the chain length if no pair is set).
    pub period: usize,
    pub attempt: usize,
}

impl ClosingContext {
    pub fn new(anchor: P, radius: f64, epsilon: f64) -> Self {
        ClosingContext {
            anchor,
            radius,
            epsilon,
            disk_radius: 0.5 * radius,
            seed_point: anchor,
            recurrence_length: 0,
            norm_bound: 0.0,
            distortion: 1.0,
            budget: 0,
            budget_formula: 0.0,
            push_ratio: 0.0,
            basis: Mat2::identity(),
            return_times: Vec::new(),
            pair: None,
            square: None,
            eta: 0.25,
            period: 0,
            attempt: 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("context serializes")
    }
}

/// All `k ≤ n_max` with `fᵏ(y) ∈ D`.
pub fn return_times(map: &MapSpec<f64>, y: P, disk: &Disk, n_max: usize) -> Result<Vec<usize>, MapError> {
    let orbit = map.orbit(y, n_max)?;
    Ok((0..=n_max).filter(|&k| disk.contains(orbit[k])).collect())
}

/// Candidate pairs `(i, j, Q)` with `(1+η)Q` free of the other points, in order of
/// increasing `E`-sup distance (ties by `(i, j)`), at most `limit` of them.
pub fn admissible_pairs(points: &[(usize, P)], eta: f64, basis: &M, limit: usize) -> Vec<(usize, usize, Square)> {
    let mut ranked = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for (s, &(ki, pi)) in points.iter().enumerate() {
        for &(kj, pj) in &points[s + 1..] {
            if ki == kj {
                continue;
            }
            let d = sup_in_basis(basis, pi.delta_to(pj));
            ranked.push((d, ki.min(kj), ki.max(kj)));
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let at = |k: usize| points.iter().find(|(i, _)| *i == k).map(|(_, p)| *p).expect("index present");
    let mut out = Vec::new();
    for (d, i, j) in ranked {
        if out.len() >= limit {
            break;
        }
        let (pi, pj) = (at(i), at(j));
        let square = Square { center: pi.offset(pi.delta_to(pj).scale(0.5)), half_width: 0.5 * d };
        let clear = points.iter().all(|&(k, p)| k == i || k == j || !square.contains(basis, p, eta));
        if clear {
            out.push((i, j, square));
        }
    }
    out
}

/// The first admissible pair (see [`admissible_pairs`]).
pub fn fundamental_pair(points: &[(usize, P)], eta: f64, basis: &M) -> Result<(usize, usize, Square), ClosingError> {
    if points.len() < 2 {
        return Err(ClosingError::Input("fundamental_pair needs at least two points".into()));
    }
    admissible_pairs(points, eta, basis, 1).pop().ok_or(ClosingError::NoAdmissiblePair { eta })
}

/// Left singular frame of `Dfᴺ_y` (columns `e₁`, `e₂ = J e₁`, `e₁` with nonnegative first entry).
pub fn select_basis(map: &MapSpec<f64>, y: P, n: usize) -> Result<M, MapError> {
    if n == 0 {
        return Ok(Mat2::identity());
    }
    let mut prod = Mat2::identity();
    let mut z = y;
    for _ in 0..n {
        let (next, d) = map.eval_with_differential(z)?;
        prod = d * prod;
        let s = prod.norm();
        if s > 1e100 {
            prod = prod.scale(1.0 / s);
        }
        z = next;
    }
    let mut e1 = prod.svd().u.col(0);
    if e1.x < 0.0 || (e1.x == 0.0 && e1.y < 0.0) {
        e1 = e1.scale(-1.0);
    }
    Ok(Mat2::from_columns(e1, e1.perp()))
}

/// `C¹` size of a push bump per unit `|v|/ρ` in the linear regime (sup of `‖Dh − I‖·ρ/|v|`),
/// measured once on a dense polar sample.
pub fn lift_constant() -> f64 {
    static LIFT: OnceLock<f64> = OnceLock::new();
    *LIFT.get_or_init(|| {
        let (c, rho, m) = (Point::new(0.5, 0.5), 0.1, 1e-9);
        let s = std::f64::consts::FRAC_1_SQRT_2 * m;
        let mut worst: f64 = 0.0;
        for v in [Vec2::new(m, 0.0), Vec2::new(0.0, m), Vec2::new(s, s)] {
            let h = Bump::new(c, rho / PLATEAU_RATIO, rho, Generator::Push { v }).expect("valid bump");
            for z in disk_samples(c, rho, 60, 120) {
                let d = h.differential(z).expect("push flow converges");
                worst = worst.max((d - Mat2::identity()).norm());
            }
        }
        worst * rho / m
    })
}

/// The Push bumps of a chain plus the bookkeeping recorded in the context.
#[derive(Debug, Clone, PartialEq)]
struct ChainPlan {
    bumps: Vec<Bump<f64>>,
    norm_bound: f64,
    distortion: f64,
    push_ratio: f64,
}

fn build_chain(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    ctx: &ClosingContext,
    a: P,
    b: P,
    eps_scale: f64,
) -> Result<ChainPlan, ClosingError> {
    let n = ctx.budget;
    let period = ctx.period.max(n);
    let mut plan = ChainPlan { bumps: Vec::new(), norm_bound: 0.0, distortion: 1.0, push_ratio: f64::INFINITY };
    if n == 0 || torus_distance(a, b) == 0.0 {
        return Ok(plan);
    }
    let fa = f.orbit(a, n)?;
    let t = f.orbit(b, period)?;

    // obstacles: the segments [fᵐ(a), fᵐ(b)] the chain travels along, then the untouched
    // tail of the orbit of b; each bump must also avoid the R-images of all of them
    let mut ends: Vec<(P, P)> = (0..n).map(|m| (fa[m], t[m])).collect();
    ends.extend(t[n..period].iter().map(|&q| (q, q)));
    let mirrored_ends: Vec<(P, P)> = ends.iter().map(|&(p, q)| (r.apply(p), r.apply(q))).collect();
    let midpoint = |&(p, q): &(P, P)| p.offset(p.delta_to(q).scale(0.5));
    let h_max = ends.iter().map(|&(p, q)| 0.5 * torus_distance(p, q)).fold(0.0, f64::max);
    let h_mirror = mirrored_ends.iter().map(|&(p, q)| 0.5 * torus_distance(p, q)).fold(0.0, f64::max);
    let k_r = 1.05 * ends.iter().map(|&(p, _)| r.differential(p).norm()).fold(1.0, f64::max);
    let direct = PointIndex::new(ends.iter().map(midpoint).collect());
    let mirrored = PointIndex::new(mirrored_ends.iter().map(midpoint).collect());

    let rho_max = 0.5 * ctx.radius;
    let lift = lift_constant();
    let eps = ctx.epsilon * eps_scale;
    let mut z = a;
    let mut prod = Mat2::identity();
    let mut worst = (0.0, 0);
    for k in 0..n {
        let reach = rho_max / CLEARANCE_FRACTION;
        let clearance = |index: &PointIndex, ends: &[(P, P)], h: f64, skip: Option<usize>, reach: f64| {
            index
                .within(z, reach + h)
                .into_iter()
                .filter(|&i| Some(i) != skip)
                .map(|i| segment_distance(z, ends[i].0, ends[i].1))
                .fold(reach, f64::min)
        };
        let d_direct = clearance(&direct, &ends, h_max, Some(k), reach);
        let d_mirror = clearance(&mirrored, &mirrored_ends, h_mirror, None, reach * k_r);
        let clearance = d_direct.min(d_mirror / k_r);
        let rho = rho_max.min(CLEARANCE_FRACTION * clearance);
        if !(rho > 1e-12) {
            return Err(ClosingError::Disjointness { step: k, clearance });
        }
        let v = z.delta_to(t[k]).scale(1.0 / (n - k) as f64);

        // C¹ size of f∘h and of the twin composed with f, per unit C¹ size of h
        let df = f.differential(z)?;
        let rz = r.apply(z);
        let twin = r.differential(z).norm() * r.differential(rz).norm() * f.differential(f.eval_inverse(rz)?)?.norm();
        let spread = 1.1 * df.norm().max(twin);
        let unit = 1.0 + CAPACITY_MARGIN * lift / rho;
        let limit = (eps / spread / unit).min(rho / (2.0 * PLATEAU_RATIO));
        let ratio = v.norm() / limit;
        if ratio > worst.0 {
            worst = (ratio, k);
        }
        plan.push_ratio = plan.push_ratio.min(1.0 / unit);
        plan.norm_bound = plan.norm_bound.max(df.norm()).max(df.inverse().map_or(f64::INFINITY, |i| i.norm()));
        prod = df * prod;
        plan.distortion = plan.distortion.max(prod.condition_number());
        let s = prod.norm();
        if s > 1e100 {
            prod = prod.scale(1.0 / s);
        }

        plan.bumps.push(Bump::new(z, rho / PLATEAU_RATIO, rho, Generator::Push { v })?);
        z = f.eval(z.offset(v))?;
    }
    if worst.0 > 1.0 {
        let needed = (n as f64 * worst.0).ceil() as usize + 1;
        return Err(ClosingError::Capacity { step: worst.1, ratio: worst.0, needed, have: n });
    }
    Ok(plan)
}

/// Torus distance from `z` to the short segment `[p, q]` (lifted next to `z`).
fn segment_distance(z: P, p: P, q: P) -> f64 {
    let d = z.delta_to(p);
    let e = p.delta_to(q);
    let ee = e.dot(e);
    let t = if ee > 0.0 { (-d.dot(e) / ee).clamp(0.0, 1.0) } else { 0.0 };
    (d + e.scale(t)).norm()
}

/// `N = ctx.budget` Push bumps, the `k`-th centred on the `k`-th chain point, whose
/// twinned composition with `f` carries the orbit of `a` onto the orbit of `b` after
/// `N` steps. Each step carries `1/(N−k)` of the remaining (cocycle-transported)
/// displacement. Points `fᵐ(b)` for `N ≤ m < ctx.period` are kept outside all supports.
pub fn lift_chain(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    ctx: &ClosingContext,
    a: P,
    b: P,
) -> Result<Vec<Bump<f64>>, ClosingError> {
    Ok(build_chain(f, r, ctx, a, b, 1.0)?.bumps)
}

/// `f` with every bump added as a twinned pre-layer.
pub fn chain_map(f: &MapSpec<f64>, r: &InvolutionSpec<f64>, bumps: &[Bump<f64>]) -> MapSpec<f64> {
    if bumps.is_empty() {
        return f.clone();
    }
    f.with_layers(bumps.iter().map(|&bump| Layer { placement: Placement::Pre, twin: true, bump }), Some(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosingBudget {
    /// Forward iterates examined for returns.
    pub n_max: usize,
    pub seed: u64,
    pub eta: f64,
    /// Seeds tried: the anchor itself, then seeded jitters within `r/4`.
    pub attempts: usize,
    pub pairs_per_prefix: usize,
    /// Chain length override (default: the full period `j − i`).
    pub steps: Option<usize>,
}

impl Default for ClosingBudget {
    fn default() -> Self {
        ClosingBudget { n_max: 10_000, seed: 0, eta: 0.25, attempts: 4, pairs_per_prefix: 8, steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosingOutcome {
    pub map: MapSpec<f64>,
    pub record: PeriodicOrbitRecord,
    pub context: ClosingContext,
    pub c1: C1Distance,
    pub reversibility: ValidationReport,
    pub area: ValidationReport,
}

fn verify(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    g: MapSpec<f64>,
    rep: P,
    period: usize,
    context: ClosingContext,
) -> Result<ClosingOutcome, ClosingError> {
    let grid = GridSpec::default();
    let c1 = c1_distance(f, &g, &GridSpec::square(32))?;
    let reversibility = check_reversibility(&g, r, &grid, REVERSIBILITY_TOL)?;
    let area = check_area(&g, &grid, AREA_TOL)?;
    if !reversibility.passed || !area.passed {
        return Err(ClosingError::Verification(format!(
            "reversibility {:e}, area {:e}",
            reversibility.max_reversibility_error, area.max_area_error
        )));
    }
    let record = PeriodicOrbitRecord::build(&g, Some(r), rep, period, OrbitSource::ClosingOutput)?;
    Ok(ClosingOutcome { map: g, record, context, c1, reversibility, area })
}

/// Perturbs `f` by at most `ε` in `C¹` so that some point of `B(x, r)` becomes periodic,
/// keeping the map `R`-reversible and area-preserving.
pub fn close_orbit(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    x: P,
    radius: f64,
    eps: f64,
    budget: &ClosingBudget,
) -> Result<ClosingOutcome, ClosingError> {
    if !(radius > 0.0 && radius <= 0.25) {
        return Err(ClosingError::Input(format!("radius {radius} outside (0, 0.25]")));
    }
    if !(eps > 0.0) || budget.n_max == 0 || !(budget.eta > 0.0) {
        return Err(ClosingError::Input("need eps > 0, n_max >= 1, eta > 0".into()));
    }
    let rep = check_reversibility(f, r, &GridSpec::square(16), REVERSIBILITY_TOL)?;
    if !rep.passed {
        return Err(ClosingError::Hypothesis(format!("f not R-reversible (error {:e})", rep.max_reversibility_error)));
    }
    let mut ctx = ClosingContext::new(x, radius, eps);
    ctx.eta = budget.eta;

    let orbit = f.orbit(x, budget.n_max)?;
    if let Some(p) = (1..=budget.n_max).find(|&k| torus_distance(orbit[k], x) <= POLISH_TOL) {
        ctx.period = p;
        ctx.recurrence_length = p;
        return verify(f, r, f.clone(), x, p, ctx);
    }
    let gap = torus_distance(f.eval(x)?, r.apply(x));
    if gap <= HYPOTHESIS_MARGIN {
        return Err(ClosingError::Hypothesis(format!("f(x) = R(x) (gap {gap:e})")));
    }
    let fix = r.fix_set().map_err(MapError::from)?.distance(x);
    if fix <= HYPOTHESIS_MARGIN {
        return Err(ClosingError::Hypothesis(format!("x on Fix(R) (distance {fix:e})")));
    }

    let disk = Disk::new(x, ctx.disk_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut last: Option<ClosingError> = None;
    for attempt in 0..budget.attempts.max(1) {
        let y = if attempt == 0 {
            x
        } else {
            let (s, a): (f64, f64) = (rng.gen(), rng.gen());
            let rad = 0.25 * radius * s.sqrt();
            let ang = std::f64::consts::TAU * a;
            x.offset(Vec2::new(rad * ang.cos(), rad * ang.sin()))
        };
        let orbit = f.orbit(y, budget.n_max)?;
        let ups: Vec<usize> = (0..=budget.n_max).filter(|&k| disk.contains(orbit[k])).collect();
        if ups.len() < 2 {
            let (best_time, best_distance) = (1..=budget.n_max)
                .map(|k| (k, torus_distance(orbit[k], y)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((0, f64::INFINITY));
            if !matches!(last, Some(ClosingError::Capacity { .. } | ClosingError::Disjointness { .. })) {
                last = Some(ClosingError::NoRecurrence {
                    n_max: budget.n_max,
                    best_time,
                    best_distance,
                    disk_radius: disk.radius,
                });
            }
            continue;
        }
        ctx.seed_point = y;
        ctx.attempt = attempt;
        ctx.return_times = ups.clone();
        let mut n0 = ups[1].max(16).min(budget.n_max);
        loop {
            let points: Vec<(usize, P)> = ups.iter().filter(|&&k| k <= n0).map(|&k| (k, orbit[k])).collect();
            if points.len() >= 2 {
                let basis = select_basis(f, y, n0)?;
                let pairs = admissible_pairs(&points, budget.eta, &basis, budget.pairs_per_prefix);
                if pairs.is_empty() && last.is_none() {
                    last = Some(ClosingError::NoAdmissiblePair { eta: budget.eta });
                }
                for (i, j, square) in pairs {
                    ctx.recurrence_length = n0;
                    ctx.basis = basis;
                    ctx.pair = Some((i, j));
                    ctx.square = Some(square);
                    match close_pair(f, r, &mut ctx, &orbit, budget) {
                        Ok(out) => return Ok(out),
                        Err(
                            e @ (ClosingError::Capacity { .. }
                            | ClosingError::Disjointness { .. }
                            | ClosingError::NotFree { .. }
                            | ClosingError::Verification(_)),
                        ) => {
                            debug!("pair ({i}, {j}) at n0 = {n0}: {e}");
                            last = Some(e);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            if n0 >= budget.n_max {
                break;
            }
            n0 = (2 * n0).min(budget.n_max);
        }
    }
    Err(last.unwrap_or(ClosingError::NoAdmissiblePair { eta: budget.eta }))
}

fn close_pair(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    ctx: &mut ClosingContext,
    orbit: &[P],
    budget: &ClosingBudget,
) -> Result<ClosingOutcome, ClosingError> {
    let (i, j) = ctx.pair.expect("pair selected");
    let (a, b) = (orbit[j], orbit[i]);
    let period = j - i;
    ctx.period = period;
    ctx.budget = budget.steps.unwrap_or(period).clamp(1, period);
    let free = rf_free_check(f, &orbit[i..j], r, HYPOTHESIS_MARGIN)?;
    if !free.free {
        return Err(ClosingError::NotFree { margin: free.margin });
    }
    let mut measured = f64::NAN;
    for eps_scale in [1.0, 0.8, 0.64, 0.5] {
        let plan = build_chain(f, r, ctx, a, b, eps_scale)?;
        ctx.norm_bound = plan.norm_bound;
        ctx.distortion = plan.distortion;
        ctx.push_ratio = plan.push_ratio;
        ctx.budget_formula = BUDGET_CONSTANT * plan.distortion / plan.push_ratio;
        let g = chain_map(f, r, &plan.bumps);

        let landed = torus_distance(g.iterate(a, ctx.budget)?, f.iterate(b, ctx.budget)?);
        if landed > CLOSURE_TOL {
            return Err(ClosingError::Verification(format!("chain closure {landed:e}")));
        }
        let mut rep = a;
        let mut residual = torus_distance(g.iterate(a, period)?, a);
        if residual > POLISH_TOL {
            let refined = refine_periodic(&g, a, period)?;
            rep = refined.point;
            residual = refined.residual;
        }
        if residual > POLISH_TOL {
            return Err(ClosingError::Verification(format!("polished residual {residual:e}")));
        }
        if torus_distance(rep, ctx.anchor) >= ctx.radius {
            return Err(ClosingError::Verification("periodic point left B(x, r)".into()));
        }
        let g_orbit = g.orbit(rep, period)?;
        if let Some(k) = (1..period).find(|&k| torus_distance(g_orbit[k], rep) <= CLOSURE_TOL) {
            return Err(ClosingError::Verification(format!("minimal period {k} < {period}")));
        }
        let out = verify(f, r, g, rep, period, ctx.clone())?;
        if out.c1.measured <= ctx.epsilon {
            return Ok(out);
        }
        measured = out.c1.measured;
        debug!("c1 distance {measured:e} above {:e}; shrinking the pushes", ctx.epsilon);
    }
    Err(ClosingError::Verification(format!("c1 distance {measured:e} above {:e}", ctx.epsilon)))
}
