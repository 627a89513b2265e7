//! Periodic orbits: Newton refinement, (R,f)-freeness, and the symmetric-orbit search
//! along `Fix(R) ∩ f⁻ⁿ(Fix(R))`.

use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cocycle::{classify_periodic, CocycleError, OrbitClassification, PARABOLIC_TOL};
use crate::involution::{sample_branches, InvolutionError, InvolutionSpec};
use crate::linalg::{Mat2, Vec2};
use crate::maps::{MapError, MapSpec};
use crate::torus::{torus_distance, Point, PointIndex};
use crate::validation::{check_reversibility, GridSpec};

/// Residual an accepted periodic orbit must reach.
pub const ACCEPT_RESIDUAL: f64 = 1e-8;
/// Two orbits closer than this (anywhere along the orbit) are the same orbit.
pub const DEDUP_TOL: f64 = 1e-6;

type P = Point<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Involution(#[from] InvolutionError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("map is not reversible under the given involution (error {0:e})")]
    NotReversible(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitSource {
    FixSetSearch,
    GridSearch,
    ClosingOutput,
    Seed,
}

impl OrbitSource {
    pub fn label(&self) -> &'static str {
        match self {
            OrbitSource::FixSetSearch => "fix-set-search",
            OrbitSource::GridSearch => "grid-search",
            OrbitSource::ClosingOutput => "closing-output",
            OrbitSource::Seed => "seed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    pub representative: P,
    pub period: usize,
    pub classification: OrbitClassification,
    pub symmetric: bool,
    pub residual: f64,
    pub source: OrbitSource,
}

impl PeriodicOrbitRecord {
    /// Builds a record for a refined point, classifying it by its orbit matrix.
    pub fn build(
        map: &MapSpec<f64>,
        r: Option<&InvolutionSpec<f64>>,
        p: P,
        period: usize,
        source: OrbitSource,
    ) -> Result<Self, CocycleError> {
        let residual = torus_distance(map.iterate(p, period)?, p);
        let classification = classify_periodic(map, p, period, PARABOLIC_TOL)?;
        let symmetric = r.is_some_and(|r| on_fix(r, p));
        Ok(PeriodicOrbitRecord { representative: p, period, classification, symmetric, residual, source })
    }
}

fn on_fix(r: &InvolutionSpec<f64>, p: P) -> bool {
    torus_distance(r.apply(p), p) <= ACCEPT_RESIDUAL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub point: P,
    pub residual: f64,
    pub iterations: usize,
    /// A damped least-squares step was needed because `Dfⁿ − I` was (nearly) singular.
    pub fallback: bool,
    /// Condition number of `Dfⁿ − I` at the starting point.
    pub condition: f64,
}

const SINGULAR_COND: f64 = 1e10;

fn closure(map: &MapSpec<f64>, q: P, n: usize) -> Result<(Vec2<f64>, Mat2<f64>), MapError> {
    let mut d = Mat2::identity();
    let mut z = q;
    for _ in 0..n {
        let (next, dz) = map.eval_with_differential(z)?;
        d = dz * d;
        z = next;
    }
    Ok((q.delta_to(z), d))
}

/// Newton iteration on `F(q) = fⁿ(q) − q` (lifted locally), with backtracking and a
/// damped least-squares step where `Dfⁿ − I` is singular.
pub fn refine_periodic(map: &MapSpec<f64>, p: P, n: usize) -> Result<Refinement, MapError> {
    let n = n.max(1);
    let mut q = p;
    let (mut f, mut d) = closure(map, q, n)?;
    let mut res = f.norm();
    let j0 = d - Mat2::identity();
    let condition = j0.condition_number();
    let mut fallback = !(condition < SINGULAR_COND);
    let mut iterations = 0;
    while res > 0.0 && iterations < 50 {
        iterations += 1;
        let j = d - Mat2::identity();
        let step = match j.inverse().filter(|_| j.condition_number() < SINGULAR_COND) {
            Some(inv) => -inv.apply(f),
            None => {
                fallback = true;
                let jt = j.transpose();
                let lambda = 1e-8 * j.frobenius().powi(2) + 1e-300;
                let normal = jt * j + Mat2::identity().scale(lambda);
                match normal.inverse() {
                    Some(inv) => -inv.apply(jt.apply(f)),
                    None => break,
                }
            }
        };
        let mut accepted = false;
        let mut t = 1.0;
        for _ in 0..12 {
            let cand = q.offset(step.scale(t));
            let (fc, dc) = closure(map, cand, n)?;
            if fc.norm() < res {
                q = cand;
                f = fc;
                d = dc;
                res = fc.norm();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(Refinement { point: q, residual: res, iterations, fallback, condition })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreenessReport {
    pub free: bool,
    /// `min torus_distance(f(x), R(y))` over `x, y ∈ X` (infinite for empty `X`).
    pub margin: f64,
    /// Minimizing pair `(x, y)` as indices into `X`.
    pub witness: Option<(usize, usize)>,
}

/// `X` is `(R,f)`-free iff `f(x) ≠ R(y)` for all `x, y ∈ X`, decided at tolerance `tol`.
pub fn rf_free_check(map: &MapSpec<f64>, xs: &[P], r: &InvolutionSpec<f64>, tol: f64) -> Result<FreenessReport, MapError> {
    if xs.is_empty() {
        return Ok(FreenessReport { free: true, margin: f64::INFINITY, witness: None });
    }
    let images = xs.iter().map(|&x| map.eval(x)).collect::<Result<Vec<_>, _>>()?;
    let index = PointIndex::new(xs.iter().map(|&y| r.apply(y)).collect());
    let mut best = (f64::INFINITY, None);
    for (i, fx) in images.iter().enumerate() {
        if let Some((j, d)) = index.nearest(*fx) {
            if d < best.0 {
                best = (d, Some((i, j)));
            }
        }
    }
    Ok(FreenessReport { free: best.0 > tol, margin: best.0, witness: best.1 })
}

/// Sampled `Fix(R)` branches as polylines.
pub fn fix_branches(r: &InvolutionSpec<f64>, resolution: usize) -> Result<Vec<Vec<P>>, InvolutionError> {
    sample_branches(r, resolution, 1e-10)
}

/// A curve of periodic points (e.g. an invariant circle of the integrable shear) hit by the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateFamily {
    pub period: usize,
    pub branch: usize,
    pub point: P,
    pub direction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSearch {
    pub orbits: Vec<PeriodicOrbitRecord>,
    pub degenerate: Vec<DegenerateFamily>,
    /// Candidates abandoned because Newton did not reach the acceptance residual.
    pub dropped: usize,
}

enum Candidate {
    Orbit(P, usize),
    Family(DegenerateFamily),
    Dropped,
}

/// Tests whether `q` sits on a curve of period-`n` points; returns the curve direction.
fn degenerate_direction(map: &MapSpec<f64>, q: P, n: usize) -> Result<Option<Vec2<f64>>, MapError> {
    let (_, d) = closure(map, q, n)?;
    let j = d - Mat2::identity();
    if j.condition_number() < 1e8 && j.max_abs() > 1e-12 {
        return Ok(None);
    }
    let t = if j.max_abs() <= 1e-12 { Vec2::new(1.0, 0.0) } else { j.svd().v.col(1) };
    for s in [1e-4, -1e-4] {
        let z = q.offset(t.scale(s));
        if torus_distance(map.iterate(z, n)?, z) > 1e-10 {
            return Ok(None);
        }
    }
    Ok(Some(t))
}

fn process_candidate(map: &MapSpec<f64>, q: P, n: usize, branch: usize) -> Result<Candidate, MapError> {
    let orbit = map.orbit(q, 2 * n)?;
    let Some(period) = (1..=2 * n).find(|d| (2 * n) % d == 0 && torus_distance(orbit[*d], q) <= 1e-6) else {
        return Ok(Candidate::Dropped);
    };
    if let Some(t) = degenerate_direction(map, q, period)? {
        return Ok(Candidate::Family(DegenerateFamily { period, branch, point: q, direction: [t.x, t.y] }));
    }
    let refined = refine_periodic(map, q, period)?;
    if refined.residual > ACCEPT_RESIDUAL {
        warn!("dropping candidate near {q:?} (period {period}): Newton residual {:e}", refined.residual);
        return Ok(Candidate::Dropped);
    }
    let z = refined.point;
    let minimal = (1..=period).find(|d| period % d == 0 && torus_distance(map.iterate(z, *d).unwrap_or(z), z) <= ACCEPT_RESIDUAL);
    Ok(Candidate::Orbit(z, minimal.unwrap_or(period)))
}

/// Lexicographically smallest orbit point lying on `Fix(R)`, falling back to `p` itself.
fn canonical_representative(map: &MapSpec<f64>, r: Option<&InvolutionSpec<f64>>, p: P, period: usize) -> Result<(P, Vec<P>), MapError> {
    let orbit = map.orbit(p, period.saturating_sub(1))?;
    let mut rep = p;
    if let Some(r) = r {
        let mut on: Vec<P> = orbit.iter().copied().filter(|&z| on_fix(r, z)).collect();
        on.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        if let Some(first) = on.first() {
            rep = *first;
        }
    }
    Ok((rep, orbit))
}

/// Merges refined candidates into deduplicated records sorted by `(period, x, y)`.
pub fn merge_orbits(
    map: &MapSpec<f64>,
    r: Option<&InvolutionSpec<f64>>,
    mut found: Vec<(P, usize)>,
    source: OrbitSource,
    existing: &mut Vec<(PeriodicOrbitRecord, Vec<P>)>,
) -> Result<(), CocycleError> {
    found.sort_by(|a, b| (a.1, a.0.x, a.0.y).partial_cmp(&(b.1, b.0.x, b.0.y)).unwrap());
    for (q, period) in found {
        if existing.iter().any(|(rec, orb)| rec.period == period && orb.iter().any(|z| torus_distance(*z, q) < DEDUP_TOL)) {
            continue;
        }
        let (rep, orbit) = canonical_representative(map, r, q, period)?;
        let rec = PeriodicOrbitRecord::build(map, r, rep, period, source)?;
        if rec.residual > ACCEPT_RESIDUAL {
            continue;
        }
        existing.push((rec, orbit));
    }
    existing.sort_by(|a, b| {
        let (x, y) = (&a.0, &b.0);
        (x.period, x.representative.x, x.representative.y).partial_cmp(&(y.period, y.representative.x, y.representative.y)).unwrap()
    });
    Ok(())
}

fn bisect(g: impl Fn(f64) -> Result<f64, MapError>, mut a: f64, mut b: f64, mut ga: f64) -> Result<f64, MapError> {
    while b - a > 1e-10 {
        let m = 0.5 * (a + b);
        let gm = g(m)?;
        if gm == 0.0 {
            return Ok(m);
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Symmetric periodic orbits of period dividing `2n`, `n ≤ n_max`, found as sign changes
/// of the `Fix(R)` level function along `s ↦ fⁿ(γ(s))` for every branch `γ`.
pub fn symmetric_search(map: &MapSpec<f64>, r: &InvolutionSpec<f64>, n_max: usize, density: usize) -> Result<SymmetricSearch, SearchError> {
    let rev = check_reversibility(map, r, &GridSpec::square(16), 1e-9)?;
    if !rev.passed {
        return Err(SearchError::NotReversible(rev.max_reversibility_error));
    }
    let fix = r.fix_set()?;
    let branches = fix.branches();
    let density = density.max(8);
    let near_branch = 0.25 / (fix.count as f64 * Vec2::new(fix.normal[0] as f64, fix.normal[1] as f64).norm());

    let tasks: Vec<(usize, usize)> = (0..branches.len()).flat_map(|b| (1..=n_max).map(move |n| (b, n))).collect();
    let per_task: Vec<Vec<Candidate>> = tasks
        .par_iter()
        .map(|&(b, n)| -> Result<Vec<Candidate>, MapError> {
            let gamma = &branches[b];
            let g = |s: f64| -> Result<f64, MapError> { Ok(fix.level_function(map.iterate(gamma.at(s), n)?)) };
            let vals = (0..density).map(|i| g(i as f64 / density as f64)).collect::<Result<Vec<_>, _>>()?;
            let mut roots = Vec::new();
            for i in 0..density {
                let (s0, s1) = (i as f64 / density as f64, (i + 1) as f64 / density as f64);
                let (g0, g1) = (vals[i], vals[(i + 1) % density]);
                if g0 == 0.0 {
                    roots.push(s0);
                } else if g1 != 0.0 && (g0 > 0.0) != (g1 > 0.0) {
                    roots.push(bisect(g, s0, s1, g0)?);
                }
            }
            let mut out = Vec::new();
            for s in roots {
                let q = gamma.at(s);
                if fix.distance(map.iterate(q, n)?) > near_branch {
                    continue;
                }
                out.push(process_candidate(map, q, n, b)?);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut found = Vec::new();
    let mut families: Vec<DegenerateFamily> = Vec::new();
    let mut dropped = 0;
    for c in per_task.into_iter().flatten() {
        match c {
            Candidate::Orbit(p, period) => found.push((p, period)),
            Candidate::Dropped => dropped += 1,
            Candidate::Family(f) => {
                let same = families.iter().any(|g| {
                    let d = g.point.delta_to(f.point);
                    g.period == f.period && (d.x * g.direction[1] - d.y * g.direction[0]).abs() < DEDUP_TOL
                });
                if !same {
                    families.push(f);
                }
            }
        }
    }
    let mut merged = Vec::new();
    merge_orbits(map, Some(r), found, OrbitSource::FixSetSearch, &mut merged)?;
    // periodic points found inside a degenerate family belong to it
    let orbits = merged
        .into_iter()
        .map(|(rec, _)| rec)
        .filter(|rec| {
            !families.iter().any(|g| {
                let d = g.point.delta_to(rec.representative);
                rec.period % g.period == 0 && (d.x * g.direction[1] - d.y * g.direction[0]).abs() < DEDUP_TOL
            })
        })
        .collect();
    Ok(SymmetricSearch { orbits, degenerate: families, dropped })
}

/// Newton from each seed for every period `n ≤ n_max` whose near-return is within 0.05.
pub fn newton_seed_search(
    map: &MapSpec<f64>,
    r: Option<&InvolutionSpec<f64>>,
    seeds: &[P],
    n_max: usize,
) -> Result<Vec<PeriodicOrbitRecord>, SearchError> {
    let found: Vec<Vec<(P, usize)>> = seeds
        .par_iter()
        .map(|&s| -> Result<Vec<(P, usize)>, MapError> {
            let orbit = map.orbit(s, n_max)?;
            let mut out = Vec::new();
            for n in 1..=n_max {
                if torus_distance(orbit[n], s) > 0.05 {
                    continue;
                }
                let refined = refine_periodic(map, s, n)?;
                if refined.residual <= 1e-10 {
                    let z = refined.point;
                    let minimal = (1..=n).find(|d| n % d == 0 && torus_distance(map.iterate(z, *d).unwrap_or(z), z) <= ACCEPT_RESIDUAL);
                    out.push((z, minimal.unwrap_or(n)));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let mut merged = Vec::new();
    merge_orbits(map, r, found.into_iter().flatten().collect(), OrbitSource::GridSearch, &mut merged)?;
    Ok(merged.into_iter().map(|(rec, _)| rec).collect())
}

pub const CATALOG_HEADER: &str = "period,x,y,trace,class,symmetric,residual,source";

/// CSV catalog, one orbit per line.
pub fn catalog_csv(records: &[PeriodicOrbitRecord]) -> String {
    let mut s = String::from(CATALOG_HEADER);
    s.push('\n');
    for r in records {
        let trace = r.classification.trace().map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.period,
            r.representative.x,
            r.representative.y,
            trace,
            r.classification.label(),
            r.symmetric,
            r.residual,
            r.source.label()
        );
    }
    s
}

/// Reads `(point, period)` seeds back from a CSV catalog.
pub fn load_catalog_seeds(csv: &str) -> Result<Vec<(P, usize)>, String> {
    let mut out = Vec::new();
    for (line_no, line) in csv.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| cols.get(i).ok_or_else(|| format!("line {}: missing column {i}", line_no + 1));
        let period = parse(0)?.parse::<usize>().map_err(|e| format!("line {}: {e}", line_no + 1))?;
        let x = parse(1)?.parse::<f64>().map_err(|e| format!("line {}: {e}", line_no + 1))?;
        let y = parse(2)?.parse::<f64>().map_err(|e| format!("line {}: {e}", line_no + 1))?;
        out.push((Point::new(x, y), period));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refine_examples() {
        let f = MapSpec::standard(1.0);
        let r = refine_periodic(&f, Point::new(0.501, 0.002), 1).unwrap();
        assert!(torus_distance(r.point, Point::new(0.5, 0.0)) < 1e-10 && r.residual <= 1e-10);
        let exact = refine_periodic(&f, Point::new(0.0, 0.0), 1).unwrap();
        assert_eq!((exact.point, exact.residual), (Point::new(0.0, 0.0), 0.0));
        let shear = refine_periodic(&MapSpec::standard(0.0), Point::new(0.3, 0.0), 1).unwrap();
        assert!(shear.fallback && shear.residual == 0.0);
        let near = refine_periodic(&MapSpec::standard(0.0), Point::new(0.3, 0.001), 1).unwrap();
        assert!(near.fallback && near.residual < 1e-12);
    }

    #[test]
    fn freeness_examples() {
        let f = MapSpec::standard(1.0);
        let r = InvolutionSpec::standard(1.0);
        let p = Point::new(0.5, 0.0);
        let rep = rf_free_check(&f, &[p], &r, 1e-9).unwrap();
        assert!(!rep.free && rep.witness == Some((0, 0)));
        let orbit = f.orbit(Point::new(0.3123, 0.2077), 49).unwrap();
        let rep = rf_free_check(&f, &orbit, &r, 1e-9).unwrap();
        assert!(rep.free && rep.margin > 1e-3, "{rep:?}");
        // brute-force oracle for the margin
        let brute = orbit.iter().flat_map(|x| orbit.iter().map(move |y| (x, y))).map(|(x, y)| torus_distance(f.eval(*x).unwrap(), r.apply(*y))).fold(f64::INFINITY, f64::min);
        assert_eq!(rep.margin, brute);
        assert!(rf_free_check(&f, &[], &r, 1e-9).unwrap().free);
    }

    #[test]
    fn branch_sampling() {
        let b = fix_branches(&InvolutionSpec::standard(1.0), 10).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b[0].iter().all(|p| p.x == 0.0) && b[1].iter().all(|p| p.x == 0.5));
        let cat = fix_branches(&InvolutionSpec::linear([[1, 0], [-1, -1]]).unwrap(), 10).unwrap();
        assert!(cat.iter().flatten().all(|p| ((p.x + 2.0 * p.y) - (p.x + 2.0 * p.y).round()).abs() < 1e-12));
        assert!(InvolutionSpec::<f64>::identity().fix_set().is_err());
    }

    #[test]
    fn standard_map_fixed_points() {
        let f = MapSpec::standard(1.0);
        let out = symmetric_search(&f, &InvolutionSpec::standard(1.0), 1, 200).unwrap();
        let fixed: Vec<_> = out.orbits.iter().filter(|o| o.period == 1).collect();
        assert_eq!(fixed.len(), 2, "{:?}", out.orbits);
        assert_eq!(fixed[0].representative, Point::new(0.0, 0.0));
        assert_eq!(fixed[0].classification.label(), "hyperbolic");
        assert_eq!(fixed[1].representative, Point::new(0.5, 0.0));
        assert_eq!(fixed[1].classification.label(), "elliptic");
        assert!(out.orbits.iter().all(|o| o.symmetric && o.residual <= 1e-8));
    }

    #[test]
    fn shear_reports_degenerate_families() {
        let out = symmetric_search(&MapSpec::standard(0.0), &InvolutionSpec::standard(0.0), 2, 64).unwrap();
        assert!(out.degenerate.iter().any(|f| f.period == 1 && f.point.y == 0.0));
        assert!(out.orbits.is_empty(), "{:?}", out.orbits);
    }

    #[test]
    fn cat_map_low_period_orbits_are_hyperbolic() {
        let cat = MapSpec::cat();
        let r = cat.builtin_reversor().unwrap();
        let out = symmetric_search(&cat, &r, 3, 120).unwrap();
        assert!(out.orbits.iter().any(|o| o.period == 1 && o.representative == Point::new(0.0, 0.0)));
        assert!(out.orbits.len() > 3);
        assert!(out.orbits.iter().all(|o| o.classification.label() == "hyperbolic"));
        for o in &out.orbits {
            // reversibility maps a symmetric orbit onto itself
            let rp = r.apply(o.representative);
            let orbit = cat.orbit(o.representative, o.period).unwrap();
            assert!(orbit.iter().any(|z| torus_distance(*z, rp) < 1e-6));
        }
    }

    #[test]
    fn catalog_round_trip() {
        let f = MapSpec::standard(1.0);
        let out = symmetric_search(&f, &InvolutionSpec::standard(1.0), 2, 100).unwrap();
        let csv = catalog_csv(&out.orbits);
        let seeds = load_catalog_seeds(&csv).unwrap();
        assert_eq!(seeds.len(), out.orbits.len());
        for ((p, n), rec) in seeds.iter().zip(&out.orbits) {
            assert_eq!((*p, *n), (rec.representative, rec.period));
        }
    }

    #[test]
    fn seeding_finds_elliptic_point() {
        let f = MapSpec::standard(1.0);
        let recs = newton_seed_search(&f, None, &[Point::new(0.52, 0.03)], 3).unwrap();
        assert!(recs.iter().any(|r| r.period == 1 && torus_distance(r.representative, Point::new(0.5, 0.0)) < 1e-10));
    }
}
