use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revmap::bump::{Bump, Generator};
use revmap::linalg::Vec2;
use revmap::perturb::{symmetrize, symmetrize_post};
use revmap::validation::GridSpec;
use revmap::{InvolutionSpec, MapSpec, Point};
use tempfile::TempDir;

fn revmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revmap"))
        .current_dir(dir)
        .env_remove("REVMAP_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn workspace() -> TempDir {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "std_k1.toml", "family = \"standard\"\nk = 1.0\n");
    write(d.path(), "cat.toml", "family = \"linear-auto\"\nmatrix = [[2, 1], [1, 1]]\n");
    d
}

#[test]
fn validate_passes_on_the_standard_map() {
    let d = workspace();
    let o = revmap(d.path(), &["validate", "--map", "std_k1.toml", "--grid", "32"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("reversibility: pass") && s.contains("area: pass"), "{s}");
    assert!(d.path().join("validation.json").exists());
}

#[test]
fn validate_fails_with_the_wrong_reversor() {
    let d = workspace();
    write(d.path(), "rev.toml", "kind = \"standard-reversor\"\nk = 0.5\n");
    let o = revmap(d.path(), &["validate", "--map", "std_k1.toml", "--reversor", "rev.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("reversibility: FAIL"));
}

#[test]
fn classify_reports_the_elliptic_fixed_point() {
    let d = workspace();
    let o = revmap(d.path(), &["classify", "--map", "std_k1.toml", "--p", "0.5,0", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "elliptic, trace 1.0");
    let o = revmap(d.path(), &["classify", "--map", "std_k1.toml", "--p", "0,0", "--n", "1"]);
    assert_eq!(stdout(&o).trim(), "hyperbolic, trace 3.0");
}

#[test]
fn classify_rejects_a_non_periodic_point() {
    let d = workspace();
    let o = revmap(d.path(), &["classify", "--map", "std_k1.toml", "--p", "0.3,0.2", "--n", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let d = workspace();
    write(d.path(), "run.toml", "map = \"std_k1.toml\"\ncolour = \"red\"\n");
    let o = revmap(d.path(), &["--config", "run.toml", "validate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    write(d.path(), "bad_map.toml", "family = \"standard\"\nk = 1.0\nextra = 2\n");
    let o = revmap(d.path(), &["validate", "--map", "bad_map.toml"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn run_config_supplies_map_and_output_directory() {
    let d = workspace();
    write(d.path(), "run.toml", "map = \"std_k1.toml\"\nout_dir = \"results\"\n");
    let o = revmap(d.path(), &["--config", "run.toml", "orbit", "--p", "0.1,0.2", "--n", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(d.path().join("results/orbit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn close_requires_a_seed() {
    let d = workspace();
    let o = revmap(d.path(), &["close", "--map", "std_k1.toml", "--x", "0.3,0.3", "--r", "0.05", "--eps", "0.05"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn franks_rejects_a_symmetric_point() {
    let d = workspace();
    let o = revmap(d.path(), &["franks", "--map", "std_k1.toml", "--p", "0.5,0", "--target", "1,0,0,1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn cat_portrait_has_no_elliptic_markers() {
    let d = workspace();
    let o = revmap(d.path(), &["portrait", "--map", "cat.toml", "--size", "200", "--nmax", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let svg = fs::read_to_string(d.path().join("portrait.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(!svg.contains(r#"class="elliptic""#));
    assert!(svg.contains(r#"class="hyperbolic""#));
}

#[test]
fn probe_certifies_the_cat_map() {
    let d = workspace();
    let o = revmap(d.path(), &["probe", "--map", "cat.toml", "--grid", "32"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("hyperbolic-on-grid"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let d = workspace();
    let o = Command::new(env!("CARGO_BIN_EXE_revmap"))
        .current_dir(d.path())
        .env("REVMAP_OUT_DIR", "env_out")
        .args(["find-symmetric", "--map", "std_k1.toml", "--nmax", "2", "--density", "64"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let catalog = fs::read_to_string(d.path().join("env_out/catalog.csv")).unwrap();
    assert!(catalog.lines().count() > 1);
}

#[test]
fn scan_report_is_byte_identical_across_runs() {
    let d = workspace();
    let args = ["scan", "--k-min", "0.5", "--k-max", "1.0", "--step", "0.5", "--balls", "4", "--budget", "1000", "--seed", "3"];
    let run = |name: &str| {
        let mut a = args.to_vec();
        a.extend(["--out", name]);
        assert_eq!(revmap(d.path(), &a).status.code(), Some(0));
        fs::read(d.path().join(name)).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("#schema=scan-report/1\n"));
    assert_eq!(text.lines().count(), 4);
}

fn perturbed() -> (MapSpec, InvolutionSpec) {
    let f = MapSpec::standard(0.7);
    let r = InvolutionSpec::standard(0.7);
    let push = Bump::new(Point::new(0.3, 0.2), 0.01, 0.04, Generator::Push { v: Vec2::new(1e-3, -4e-4) }).unwrap();
    let rot = Bump::new(Point::new(0.7, 0.6), 0.01, 0.03, Generator::Rotation { theta: 0.05 }).unwrap();
    let g = symmetrize(&f, &r, &push).unwrap();
    (symmetrize_post(&g, &r, &rot).unwrap(), r)
}

#[test]
fn perturbed_map_config_round_trips_bit_identically() {
    let (g, _) = perturbed();
    let text = toml::to_string(&g).unwrap();
    let back: MapSpec = toml::from_str(&text).unwrap();
    assert_eq!(back, g);
    for p in GridSpec::square(64).points::<f64>() {
        let (a, b) = (g.eval(p).unwrap(), back.eval(p).unwrap());
        assert_eq!((a.x.to_bits(), a.y.to_bits()), (b.x.to_bits(), b.y.to_bits()));
    }
}

#[test]
fn orbit_of_a_perturbed_map_file_matches_the_library() {
    let d = workspace();
    let (g, _) = perturbed();
    write(d.path(), "g.toml", &toml::to_string(&g).unwrap());
    let o = revmap(d.path(), &["orbit", "--map", "g.toml", "--p", "0.29,0.21", "--n", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let expected = g.orbit(Point::new(0.29, 0.21), 20).unwrap();
    let csv = fs::read_to_string(d.path().join("orbit.csv")).unwrap();
    for (line, q) in csv.lines().skip(1).zip(&expected) {
        let v: Vec<f64> = line.split(',').skip(1).map(|t| t.parse().unwrap()).collect();
        assert_eq!((v[0].to_bits(), v[1].to_bits()), (q.x.to_bits(), q.y.to_bits()));
    }
    let o = revmap(d.path(), &["validate", "--map", "g.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
