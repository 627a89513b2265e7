//! Empirical side of the "Anosov or dense elliptic orbits" dichotomy: elliptic coverage of
//! ball families, the combined hyperbolicity/elliptic probe, the general-density pipeline
//! and parameter scans of the standard family.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closing::{close_orbit, ClosingBudget, ClosingError, ClosingOutcome};
use crate::cocycle::{cone_certificate, lyapunov, CocycleError};
use crate::involution::InvolutionSpec;
use crate::linalg::Vec2;
use crate::maps::{MapError, MapSpec};
use crate::orbits::{merge_orbits, refine_periodic, symmetric_search, OrbitSource, PeriodicOrbitRecord, SearchError, ACCEPT_RESIDUAL};
use crate::perturb::{make_elliptic, make_hyperbolic, PerturbError};
use crate::torus::{torus_distance, Point};
use crate::validation::GridSpec;

type P = Point<f64>;

/// First line of every scan CSV.
pub const SCAN_SCHEMA: &str = "#schema=scan-report/1";
pub const SCAN_HEADER: &str =
    "parameter,elliptic_coverage,covered_balls,unknown_balls,total_balls,hyperbolic_fraction,zero_lyapunov_mass,lyapunov_threshold,elliptic,hyperbolic,parabolic,evaluations";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Closing(#[from] ClosingError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("invalid input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: P,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, p: P) -> bool {
        torus_distance(self.center, p) < self.radius
    }
}

/// Radical inverse of `i` in base `b`.
pub fn halton(mut i: u64, b: u64) -> f64 {
    let (mut f, mut out) = (1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        out += f * (i % b) as f64;
        i /= b;
    }
    out
}

/// `count` balls with Halton (2, 3) centres and radii `r0/√(1 + n/8)`, floored at `r0/2`.
pub fn ball_family(count: usize, r0: f64) -> Vec<Ball> {
    (1..=count as u64)
        .map(|n| Ball {
            center: Point::new(halton(n, 2), halton(n, 3)),
            radius: (r0 / (1.0 + n as f64 / 8.0).sqrt()).max(0.5 * r0),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Largest period searched.
    pub n_max: usize,
    /// Map evaluations allowed for Newton seeding inside each ball.
    pub budget: usize,
    /// Samples per `Fix(R)` branch in the symmetric search.
    pub density: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { n_max: 8, budget: 50_000, density: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallStatus {
    Covered,
    NotCovered,
    /// Budget exhausted before the search finished, no elliptic orbit seen.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallVerdict {
    pub ball: Ball,
    pub status: BallStatus,
    /// An elliptic orbit meeting the ball, if any.
    pub witness: Option<PeriodicOrbitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub balls: Vec<BallVerdict>,
    /// `covered / (balls − unknown)`; 1 when no ball completed (vacuous).
    pub coverage: f64,
    pub covered: usize,
    pub unknown: usize,
    /// Every orbit found (symmetric search plus seeding), deduplicated.
    pub orbits: Vec<PeriodicOrbitRecord>,
    /// Map evaluations spent on seeding.
    pub evaluations: usize,
}

impl DensityReport {
    pub fn count(&self, label: &str) -> usize {
        self.orbits.iter().filter(|o| o.classification.label() == label).count()
    }
}

fn meets(map: &MapSpec<f64>, rec: &PeriodicOrbitRecord, ball: &Ball) -> Result<bool, MapError> {
    Ok(map.orbit(rec.representative, rec.period.saturating_sub(1))?.into_iter().any(|z| ball.contains(z)))
}

/// Newton seeding inside a ball: periods `1..=n_max` from the centre and 8 points at half
/// radius, in that order, until the evaluation budget runs out.
fn seed_ball(map: &MapSpec<f64>, ball: &Ball, cfg: &DensityConfig) -> Result<(Vec<(P, usize)>, bool, usize), MapError> {
    let mut seeds = vec![ball.center];
    for i in 0..8 {
        let a = std::f64::consts::TAU * i as f64 / 8.0;
        seeds.push(ball.center.offset(Vec2::new(a.cos(), a.sin()).scale(0.5 * ball.radius)));
    }
    let mut found = Vec::new();
    let mut cost = 0;
    for n in 1..=cfg.n_max {
        for &s in &seeds {
            if cost >= cfg.budget {
                return Ok((found, false, cost));
            }
            let refined = refine_periodic(map, s, n)?;
            cost += (refined.iterations + 1) * n;
            if refined.residual <= 1e-10 {
                let z = refined.point;
                let minimal = (1..=n).find(|d| n % d == 0 && map.iterate(z, *d).is_ok_and(|w| torus_distance(w, z) <= ACCEPT_RESIDUAL));
                found.push((z, minimal.unwrap_or(n)));
            }
        }
    }
    Ok((found, true, cost))
}

/// Marks each ball covered iff an elliptic periodic orbit (period `≤ n_max`) found by the
/// symmetric search or by Newton seeding inside the ball meets it.
pub fn elliptic_density(map: &MapSpec<f64>, r: &InvolutionSpec<f64>, balls: &[Ball], cfg: &DensityConfig) -> Result<DensityReport, HarnessError> {
    if balls.is_empty() {
        return Ok(DensityReport { balls: Vec::new(), coverage: 1.0, covered: 0, unknown: 0, orbits: Vec::new(), evaluations: 0 });
    }
    let symmetric = symmetric_search(map, r, cfg.n_max, cfg.density)?;
    let seeded: Vec<(Vec<(P, usize)>, bool, usize)> = balls.par_iter().map(|b| seed_ball(map, b, cfg)).collect::<Result<_, _>>()?;

    let mut merged: Vec<(PeriodicOrbitRecord, Vec<P>)> = Vec::new();
    for rec in &symmetric.orbits {
        merged.push((*rec, map.orbit(rec.representative, rec.period - 1)?));
    }
    let all: Vec<(P, usize)> = seeded.iter().flat_map(|s| s.0.iter().copied()).collect();
    merge_orbits(map, Some(r), all, OrbitSource::GridSearch, &mut merged)?;
    let orbits: Vec<PeriodicOrbitRecord> = merged.into_iter().map(|(rec, _)| rec).collect();

    let mut verdicts = Vec::with_capacity(balls.len());
    for (ball, (_, complete, _)) in balls.iter().zip(&seeded) {
        let mut witness = None;
        for rec in orbits.iter().filter(|o| o.classification.is_elliptic()) {
            if meets(map, rec, ball)? {
                witness = Some(*rec);
                break;
            }
        }
        let status = match (witness.is_some(), complete) {
            (true, _) => BallStatus::Covered,
            (false, true) => BallStatus::NotCovered,
            (false, false) => BallStatus::Unknown,
        };
        verdicts.push(BallVerdict { ball: *ball, status, witness });
    }
    let covered = verdicts.iter().filter(|v| v.status == BallStatus::Covered).count();
    let unknown = verdicts.iter().filter(|v| v.status == BallStatus::Unknown).count();
    let decided = verdicts.len() - unknown;
    let coverage = if decided == 0 { 1.0 } else { covered as f64 / decided as f64 };
    let evaluations = seeded.iter().map(|s| s.2).sum();
    Ok(DensityReport { balls: verdicts, coverage, covered, unknown, orbits, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeVerdict {
    HyperbolicOnGrid,
    DichotomyConsistent,
    Inconclusive,
}

impl ProbeVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            ProbeVerdict::HyperbolicOnGrid => "hyperbolic-on-grid",
            ProbeVerdict::DichotomyConsistent => "dichotomy-consistent",
            ProbeVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub verdict: ProbeVerdict,
    pub m: usize,
    pub sigma: f64,
    pub grid: GridSpec,
    pub certified_fraction: f64,
    pub failing_nodes: usize,
    /// Elliptic search over balls covering the failing region (absent when certified).
    pub density: Option<DensityReport>,
    /// Non-elliptic orbits meeting failing balls that completed their budget uncovered.
    pub witnesses: Vec<PeriodicOrbitRecord>,
}

/// Cells per side of the partition used to turn failing grid nodes into balls.
const PROBE_CELLS: usize = 4;

/// One ball per partition cell containing failing nodes, centred on the cell and
/// circumscribing it.
fn failing_balls(points: &[[f64; 2]]) -> Vec<Ball> {
    let mut hit = [[false; PROBE_CELLS]; PROBE_CELLS];
    for p in points {
        let c = |v: f64| ((v * PROBE_CELLS as f64) as usize).min(PROBE_CELLS - 1);
        hit[c(p[1])][c(p[0])] = true;
    }
    let side = 1.0 / PROBE_CELLS as f64;
    let mut out = Vec::new();
    for (j, row) in hit.iter().enumerate() {
        for (i, &h) in row.iter().enumerate() {
            if h {
                let center = Point::new((i as f64 + 0.5) * side, (j as f64 + 0.5) * side);
                out.push(Ball { center, radius: side * std::f64::consts::FRAC_1_SQRT_2 });
            }
        }
    }
    out
}

/// Cone test on a grid; where it fails, look for elliptic orbits in the failing region.
/// An empirical surrogate for the dichotomy, not a proof of either alternative.
pub fn anosov_probe(
    map: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    m: usize,
    sigma: f64,
    grid: &GridSpec,
    cfg: &DensityConfig,
) -> Result<ProbeReport, HarnessError> {
    let cert = cone_certificate(map, grid, m, sigma)?;
    let failing = cert.failures().len();
    let certified_fraction = 1.0 - failing as f64 / grid.len() as f64;
    let mut report = ProbeReport {
        verdict: ProbeVerdict::HyperbolicOnGrid,
        m,
        sigma,
        grid: *grid,
        certified_fraction,
        failing_nodes: failing,
        density: None,
        witnesses: Vec::new(),
    };
    if cert.certified() {
        return Ok(report);
    }
    let balls = failing_balls(cert.failures());
    let density = elliptic_density(map, r, &balls, cfg)?;
    let mut witnesses = Vec::new();
    for v in density.balls.iter().filter(|v| v.status == BallStatus::NotCovered) {
        for rec in &density.orbits {
            if !witnesses.contains(rec) && meets(map, rec, &v.ball)? {
                witnesses.push(*rec);
            }
        }
    }
    let completed = density.balls.iter().filter(|v| v.status != BallStatus::Unknown).count();
    report.verdict = if completed > 0 && density.balls.iter().all(|v| v.status != BallStatus::NotCovered) {
        ProbeVerdict::DichotomyConsistent
    } else {
        ProbeVerdict::Inconclusive
    };
    report.witnesses = witnesses;
    report.density = Some(density);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GdtTarget {
    Elliptic,
    Hyperbolic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdtOutcome {
    pub map: MapSpec<f64>,
    pub record: PeriodicOrbitRecord,
    pub closing: ClosingOutcome,
    /// A trace move was applied after closing.
    pub shaped: bool,
}

/// Closes an orbit through `B(x, r)`; if it lands in the parabolic band, moves its trace
/// out of the band towards `target` with a rotation bump of size `delta`.
#[allow(clippy::too_many_arguments)]
pub fn gdt_demo(
    f: &MapSpec<f64>,
    r: &InvolutionSpec<f64>,
    x: P,
    radius: f64,
    eps: f64,
    budget: &ClosingBudget,
    target: GdtTarget,
    delta: f64,
) -> Result<GdtOutcome, HarnessError> {
    let closing = close_orbit(f, r, x, radius, eps, budget)?;
    if closing.record.classification.label() != "parabolic" {
        return Ok(GdtOutcome { map: closing.map.clone(), record: closing.record, closing, shaped: false });
    }
    let shaped = match target {
        GdtTarget::Elliptic => make_elliptic(&closing.map, r, &closing.record, delta)?,
        GdtTarget::Hyperbolic => make_hyperbolic(&closing.map, r, &closing.record, delta)?,
    };
    Ok(GdtOutcome { map: shaped.map, record: shaped.record, closing, shaped: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub balls: usize,
    pub ball_radius: f64,
    pub n_max: usize,
    pub budget: usize,
    pub density: usize,
    pub cone_grid: usize,
    pub m: usize,
    pub sigma: f64,
    pub lyapunov_samples: usize,
    pub lyapunov_n: usize,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            balls: 16,
            ball_radius: 0.1,
            n_max: 6,
            budget: 20_000,
            density: 256,
            cone_grid: 32,
            m: 10,
            sigma: 0.9,
            lyapunov_samples: 32,
            lyapunov_n: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub parameter: f64,
    pub elliptic_coverage: f64,
    pub covered_balls: usize,
    pub unknown_balls: usize,
    pub total_balls: usize,
    pub hyperbolic_fraction: f64,
    pub zero_lyapunov_mass: f64,
    pub lyapunov_threshold: f64,
    pub elliptic: usize,
    pub hyperbolic: usize,
    pub parabolic: usize,
    /// Map evaluations spent on seeding (deterministic cost measure).
    pub evaluations: usize,
    /// Wall time; reported in JSON only, never in the CSV.
    pub runtime_ms: f64,
}

impl ScanReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.parameter,
            self.elliptic_coverage,
            self.covered_balls,
            self.unknown_balls,
            self.total_balls,
            self.hyperbolic_fraction,
            self.zero_lyapunov_mass,
            self.lyapunov_threshold,
            self.elliptic,
            self.hyperbolic,
            self.parabolic,
            self.evaluations
        )
    }
}

pub fn scan_csv(reports: &[ScanReport]) -> String {
    let mut out = format!("{SCAN_SCHEMA}\n{SCAN_HEADER}\n");
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Zero-exponent threshold `ln n / √n` at horizon `n`.
pub fn zero_lyapunov_threshold(n: usize) -> f64 {
    let n = n.max(2) as f64;
    n.ln() / n.sqrt()
}

fn task_seed(root: u64, index: usize) -> u64 {
    root ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One report for the standard map at parameter `k`.
pub fn scan_point(k: f64, index: usize, cfg: &ScanConfig) -> Result<ScanReport, HarnessError> {
    let start = Instant::now();
    let map = MapSpec::standard(k);
    let r = InvolutionSpec::standard(k);
    let balls = ball_family(cfg.balls, cfg.ball_radius);
    let dcfg = DensityConfig { n_max: cfg.n_max, budget: cfg.budget, density: cfg.density };
    let density = elliptic_density(&map, &r, &balls, &dcfg)?;
    let grid = GridSpec::square(cfg.cone_grid);
    let cert = cone_certificate(&map, &grid, cfg.m, cfg.sigma)?;
    let hyperbolic_fraction = 1.0 - cert.failures().len() as f64 / grid.len() as f64;

    let seed = task_seed(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(P, u64)> = (0..cfg.lyapunov_samples).map(|_| (Point::new(rng.gen(), rng.gen()), rng.gen())).collect();
    let threshold = zero_lyapunov_threshold(cfg.lyapunov_n);
    let exps: Vec<f64> = points.par_iter().map(|&(p, s)| lyapunov(&map, p, cfg.lyapunov_n, s)).collect::<Result<_, _>>()?;
    let zero = exps.iter().filter(|l| l.abs() < threshold).count();
    let zero_lyapunov_mass = if exps.is_empty() { 0.0 } else { zero as f64 / exps.len() as f64 };

    Ok(ScanReport {
        parameter: k,
        elliptic_coverage: density.coverage,
        covered_balls: density.covered,
        unknown_balls: density.unknown,
        total_balls: balls.len(),
        hyperbolic_fraction,
        zero_lyapunov_mass,
        lyapunov_threshold: threshold,
        elliptic: density.count("elliptic"),
        hyperbolic: density.count("hyperbolic"),
        parabolic: density.count("parabolic"),
        evaluations: density.evaluations,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Parameters `k_min, k_min + step, …` up to `k_max` (inclusive within rounding).
pub fn parameter_grid(k_min: f64, k_max: f64, step: f64) -> Result<Vec<f64>, HarnessError> {
    if !(step > 0.0) || !(k_max >= k_min) {
        return Err(HarnessError::Input(format!("bad range [{k_min}, {k_max}] step {step}")));
    }
    let n = ((k_max - k_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| k_min + i as f64 * step).collect())
}

/// Scans the standard family over `ks`, in parallel batches; `sink` receives each report
/// in parameter order as soon as its batch finishes.
pub fn scan_parameter(ks: &[f64], cfg: &ScanConfig, mut sink: impl FnMut(&ScanReport)) -> Result<Vec<ScanReport>, HarnessError> {
    let batch = rayon::current_num_threads().max(1);
    let mut out = Vec::with_capacity(ks.len());
    for (b, chunk) in ks.chunks(batch).enumerate() {
        let reports: Vec<ScanReport> =
            chunk.par_iter().enumerate().map(|(i, &k)| scan_point(k, b * batch + i, cfg)).collect::<Result<_, _>>()?;
        for r in reports {
            sink(&r);
            out.push(r);
        }
    }
    Ok(out)
}
