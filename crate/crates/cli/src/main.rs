//! `revmap`: command-line front end for the reversible-map toolkit.

mod config;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use revmap::closing::{close_orbit, ClosingBudget, ClosingError};
use revmap::cocycle::{classify_periodic, orbit_matrix, CocycleError, OrbitClassification, PARABOLIC_TOL};
use revmap::harness::{
    anosov_probe, parameter_grid, scan_parameter, DensityConfig, HarnessError, ScanConfig, SCAN_HEADER, SCAN_SCHEMA,
};
use revmap::maps::MapError;
use revmap::orbits::{catalog_csv, symmetric_search, OrbitSource, PeriodicOrbitRecord, SearchError};
use revmap::perturb::{franks, PerturbError};
use revmap::portrait::{portrait_svg, PortraitConfig};
use revmap::validation::{check_area, check_involution, check_reversibility, GridSpec};
use revmap::{InvolutionSpec, Mat2, MapSpec, Point};
use serde::Serialize;

use config::{load_map, load_reversor, to_toml, RunConfig, OUT_DIR_ENV};

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: unreadable or invalid configuration, violated hypotheses (exit 4).
    Config(String),
    /// A produced or supplied map failed a validation check (exit 2).
    Validation(String),
    /// A search or budget ran out without a result (exit 3).
    Search(String),
    /// Anything else, e.g. an output file could not be written (exit 1).
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Search(_) => 3,
            Failure::Config(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Validation(m) => write!(f, "validation failed: {m}"),
            Failure::Search(m) => write!(f, "search failed: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        Failure::Search(e.to_string())
    }
}

impl From<CocycleError> for Failure {
    fn from(e: CocycleError) -> Self {
        match e {
            CocycleError::Map(m) => m.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::NotReversible(_) => Failure::Validation(e.to_string()),
            other => Failure::Search(other.to_string()),
        }
    }
}

impl From<ClosingError> for Failure {
    fn from(e: ClosingError) -> Self {
        match e {
            ClosingError::Input(_) | ClosingError::Hypothesis(_) | ClosingError::NotFree { .. } => {
                Failure::Config(e.to_string())
            }
            ClosingError::Verification(_) => Failure::Validation(e.to_string()),
            other => Failure::Search(other.to_string()),
        }
    }
}

impl From<PerturbError> for Failure {
    fn from(e: PerturbError) -> Self {
        match e {
            PerturbError::Hypothesis { .. } => Failure::Config(e.to_string()),
            PerturbError::Verification(_) => Failure::Validation(e.to_string()),
            other => Failure::Search(other.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Closing(c) => c.into(),
            HarnessError::Perturb(p) => p.into(),
            HarnessError::Search(s) => s.into(),
            HarnessError::Input(m) => Failure::Config(m),
            other => Failure::Search(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "revmap", version, about = "Reversible area-preserving maps of the two-torus")]
struct Cli {
    /// Run configuration (TOML); command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Increase log verbosity (repeatable); logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct MapArgs {
    /// Map config (TOML, or JSON with a .json extension).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Reversor config; defaults to the map family's built-in reversor.
    #[arg(long)]
    reversor: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the forward orbit of a point to orbit.csv.
    Orbit {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, value_parser = parse_point)]
        p: Point,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Classify a periodic point by the trace of its orbit matrix.
    Classify {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, value_parser = parse_point)]
        p: Point,
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Catalogue symmetric periodic orbits found on Fix(R).
    FindSymmetric {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 6)]
        nmax: usize,
        #[arg(long, default_value_t = 512)]
        density: usize,
    },
    /// Create a periodic orbit through B(x, r) by a C¹-small reversible perturbation.
    Close {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, value_parser = parse_point)]
        x: Option<Point>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        nmax: Option<usize>,
        /// Required here or in the run config.
        #[arg(long)]
        seed: Option<u64>,
        /// Chain length override.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        attempts: Option<usize>,
    },
    /// Prescribe derivatives at (R,f)-free points with twinned bumps.
    Franks {
        #[command(flatten)]
        map: MapArgs,
        /// Point (repeat once per target).
        #[arg(long = "p", value_parser = parse_point, required = true)]
        points: Vec<Point>,
        /// Target derivative `a,b,c,d` (row major, det 1), one per point.
        #[arg(long = "target", value_parser = parse_matrix, required = true)]
        targets: Vec<Mat2>,
        #[arg(long, default_value_t = 0.01)]
        rho: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Sweep the standard-map parameter and write a CSV report.
    Scan {
        #[arg(long, default_value = "standard")]
        family: String,
        #[arg(long)]
        k_min: f64,
        #[arg(long)]
        k_max: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        balls: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path (default: report.csv in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cone-field test plus elliptic search where the test fails.
    Probe {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check reversibility, area preservation and the involution on a grid.
    Validate {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Render an SVG phase portrait.
    Portrait {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        size: Option<u32>,
        #[arg(long)]
        nmax: Option<usize>,
        /// Output path (default: portrait.svg in the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected {n} finite comma-separated numbers, got {s:?}"));
    }
    Ok(v)
}

fn parse_point(s: &str) -> Result<Point, String> {
    let v = parse_floats(s, 2)?;
    Ok(Point::new(v[0], v[1]))
}

fn parse_matrix(s: &str) -> Result<Mat2, String> {
    let v = parse_floats(s, 4)?;
    Ok(Mat2::new(v[0], v[1], v[2], v[3]))
}

struct Ctx {
    run: RunConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn map(&self, args: &MapArgs) -> Result<(MapSpec, InvolutionSpec), Failure> {
        let path = args
            .map
            .as_deref()
            .or(self.run.map.as_deref())
            .ok_or_else(|| Failure::Config("no map given; pass --map or set `map` in the run config".into()))?;
        let map = load_map(path)?;
        let r = load_reversor(args.reversor.as_deref().or(self.run.reversor.as_deref()), &map)?;
        Ok((map, r))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        write_file(&path, contents)?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let run = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out_dir = cli.out_dir.clone().or_else(|| run.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { run, out_dir };
    match cli.command {
        Command::Orbit { map, p, n } => orbit(&ctx, &map, p, n),
        Command::Classify { map, p, n } => classify(&ctx, &map, p, n),
        Command::FindSymmetric { map, nmax, density } => find_symmetric(&ctx, &map, nmax, density),
        Command::Close { map, x, r, eps, nmax, seed, steps, eta, attempts } => {
            let sec = ctx.run.close.clone().unwrap_or_default();
            let x = x.or(sec.x.map(|[a, b]| Point::new(a, b))).ok_or_else(|| Failure::Config("close needs --x".into()))?;
            let r = r.or(sec.r).ok_or_else(|| Failure::Config("close needs --r".into()))?;
            let eps = eps.or(sec.eps).ok_or_else(|| Failure::Config("close needs --eps".into()))?;
            let seed = seed
                .or(ctx.run.seed)
                .ok_or_else(|| Failure::Config("close needs --seed (or `seed` in the run config)".into()))?;
            let d = ClosingBudget::default();
            let budget = ClosingBudget {
                n_max: nmax.or(sec.n_max).unwrap_or(d.n_max),
                seed,
                eta: eta.or(sec.eta).unwrap_or(d.eta),
                attempts: attempts.or(sec.attempts).unwrap_or(d.attempts),
                pairs_per_prefix: d.pairs_per_prefix,
                steps: steps.or(sec.steps),
            };
            close(&ctx, &map, x, r, eps, &budget)
        }
        Command::Franks { map, points, targets, rho, eps } => franks_cmd(&ctx, &map, &points, &targets, rho, eps),
        Command::Scan { family, k_min, k_max, step, balls, budget, nmax, seed, out } => {
            if family != "standard" {
                return Err(Failure::Config(format!("unknown scan family {family:?} (supported: standard)")));
            }
            let mut cfg = ctx.run.scan.unwrap_or_default();
            cfg.balls = balls.unwrap_or(cfg.balls);
            cfg.budget = budget.unwrap_or(cfg.budget);
            cfg.n_max = nmax.unwrap_or(cfg.n_max);
            cfg.seed = seed.or(ctx.run.seed).unwrap_or(cfg.seed);
            let out = out.unwrap_or_else(|| ctx.path("report.csv"));
            scan(&cfg, k_min, k_max, step, &out)
        }
        Command::Probe { map, m, sigma, grid, nmax, budget } => {
            let sec = ctx.run.probe.clone().unwrap_or_default();
            let d = DensityConfig::default();
            let density = DensityConfig {
                n_max: nmax.or(sec.n_max).unwrap_or(d.n_max),
                budget: budget.or(sec.budget).unwrap_or(d.budget),
                density: d.density,
            };
            let m = m.or(sec.m).unwrap_or(10);
            let sigma = sigma.or(sec.sigma).unwrap_or(0.9);
            let grid = grid.or(sec.grid).unwrap_or(64);
            probe(&ctx, &map, m, sigma, grid, &density)
        }
        Command::Validate { map, grid } => validate(&ctx, &map, grid),
        Command::Portrait { map, size, nmax, out } => {
            let mut cfg = ctx.run.portrait.unwrap_or_default();
            cfg.size = size.unwrap_or(cfg.size);
            cfg.n_max = nmax.unwrap_or(cfg.n_max);
            let out = out.unwrap_or_else(|| ctx.path("portrait.svg"));
            portrait(&ctx, &map, &cfg, &out)
        }
    }
}

fn orbit(ctx: &Ctx, args: &MapArgs, p: Point, n: usize) -> Result<(), Failure> {
    let (map, _) = ctx.map(args)?;
    let mut csv = String::from("n,x,y\n");
    for (i, q) in map.orbit(p, n)?.iter().enumerate() {
        csv.push_str(&format!("{i},{},{}\n", q.x, q.y));
    }
    let path = ctx.write("orbit.csv", &csv)?;
    println!("wrote {} points to {}", n + 1, path.display());
    Ok(())
}

fn classify(ctx: &Ctx, args: &MapArgs, p: Point, n: usize) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let class = classify_periodic(&map, p, n, PARABOLIC_TOL)?;
    if let OrbitClassification::NotPeriodic { residual } = class {
        return Err(Failure::Search(format!("point is not {n}-periodic (residual {residual:e})")));
    }
    let trace = orbit_matrix(&map, p, n)?.trace();
    let record = PeriodicOrbitRecord::build(&map, Some(&r), p, n, OrbitSource::Seed)?;
    ctx.write_json("classify.json", &record)?;
    println!("{}, trace {trace:?}", class.label());
    Ok(())
}

fn find_symmetric(ctx: &Ctx, args: &MapArgs, nmax: usize, density: usize) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let found = symmetric_search(&map, &r, nmax, density)?;
    ctx.write("catalog.csv", &catalog_csv(&found.orbits))?;
    ctx.write_json("symmetric_search.json", &found)?;
    let count = |l: &str| found.orbits.iter().filter(|o| o.classification.label() == l).count();
    println!(
        "{} symmetric orbits (elliptic {}, hyperbolic {}, parabolic {}), {} degenerate families",
        found.orbits.len(),
        count("elliptic"),
        count("hyperbolic"),
        count("parabolic"),
        found.degenerate.len()
    );
    Ok(())
}

fn close(ctx: &Ctx, args: &MapArgs, x: Point, radius: f64, eps: f64, budget: &ClosingBudget) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let out = close_orbit(&map, &r, x, radius, eps, budget)?;
    ctx.write("closed_map.toml", &to_toml(&out.map))?;
    ctx.write_json("orbit.json", &out.record)?;
    ctx.write("closing_trace.json", &(out.context.to_json() + "\n"))?;
    #[derive(Serialize)]
    struct Checks<'a> {
        c1: &'a revmap::perturb::C1Distance,
        reversibility: &'a revmap::validation::ValidationReport,
        area: &'a revmap::validation::ValidationReport,
    }
    ctx.write_json("closing_checks.json", &Checks { c1: &out.c1, reversibility: &out.reversibility, area: &out.area })?;
    println!(
        "closed: period {} at ({}, {}), {}, c1 distance {:e}, {} bumps",
        out.record.period,
        out.record.representative.x,
        out.record.representative.y,
        out.record.classification.label(),
        out.c1.measured,
        out.map.layers().len()
    );
    Ok(())
}

fn franks_cmd(ctx: &Ctx, args: &MapArgs, points: &[Point], targets: &[Mat2], rho: f64, eps: f64) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let out = franks(&map, &r, points, targets, rho, eps)?;
    ctx.write("franks_map.toml", &to_toml(&out.map))?;
    ctx.write_json("franks.json", &serde_json::json!({ "deltas": out.deltas, "c1": out.c1 }))?;
    println!("franks: {} bumps, c1 distance {:e}", out.map.layers().len(), out.c1.measured);
    Ok(())
}

fn scan(cfg: &ScanConfig, k_min: f64, k_max: f64, step: f64, out: &Path) -> Result<(), Failure> {
    let ks = parameter_grid(k_min, k_max, step)?;
    write_file(out, &format!("{SCAN_SCHEMA}\n{SCAN_HEADER}\n"))?;
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(out)
        .map_err(|e| Failure::Io(format!("cannot open {}: {e}", out.display())))?;
    let mut io_err = None;
    let reports = scan_parameter(&ks, cfg, |rep| {
        if io_err.is_none() {
            if let Err(e) = writeln!(file, "{}", rep.csv_row()).and_then(|_| file.flush()) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(Failure::Io(format!("cannot write {}: {e}", out.display())));
    }
    println!("scanned {} parameters into {}", reports.len(), out.display());
    Ok(())
}

fn probe(ctx: &Ctx, args: &MapArgs, m: usize, sigma: f64, grid: usize, density: &DensityConfig) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let rep = anosov_probe(&map, &r, m, sigma, &GridSpec::square(grid), density)?;
    ctx.write_json("probe.json", &rep)?;
    println!("{} (certified fraction {})", rep.verdict.label(), rep.certified_fraction);
    Ok(())
}

fn validate(ctx: &Ctx, args: &MapArgs, n: usize) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let tol = ctx.run.tolerances;
    let grid = GridSpec::square(n);
    let reports = vec![
        check_involution(&r, &grid, tol.involution),
        check_reversibility(&map, &r, &grid, tol.reversibility)?,
        check_area(&map, &grid, tol.area)?,
    ];
    ctx.write_json("validation.json", &reports)?;
    let mut failed = Vec::new();
    for rep in &reports {
        println!("{}: {} (max error {:e}, tol {:e})", rep.check, if rep.passed { "pass" } else { "FAIL" }, rep.error(), rep.tol);
        if !rep.passed {
            failed.push(rep.check.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(failed.join(", ")))
    }
}

fn portrait(ctx: &Ctx, args: &MapArgs, cfg: &PortraitConfig, out: &Path) -> Result<(), Failure> {
    let (map, r) = ctx.map(args)?;
    let svg = portrait_svg(&map, Some(&r), &[], cfg)?;
    write_file(out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("revmap: {e}");
            ExitCode::from(e.code())
        }
    }
}
