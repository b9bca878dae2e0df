use std::fs;
use std::path::{Path, PathBuf};

use coupled_index::commands::{run, Command};
use coupled_index::config::RunConfig;
use coupled_index::io::{
    read_surface_csv, BOUNDS_HEADER, COVERAGE_HEADER, REPORT_HEADER, SLOPES_HEADER, SMILE_HEADER, STUDY_HEADER,
    SUMMARY_HEADER, WORST_OF_HEADER,
};
use coupled_index::Error;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn parse(text: &str, dir: &Path) -> RunConfig {
    RunConfig::parse(text, dir, &dir.join("inline.toml")).unwrap()
}

/// Rows of a CSV file as `(header, rows)`.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().unwrap();
    (header, lines.collect())
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const CALIBRATE: &str = r#"
seed = 3
[calibrate]
s0 = 100.0
rate = 0.05
horizon = 1.0
local_vol = { constant = 0.6 }
beta = 0.7
particles = 600
steps = 8
smile_moneyness = [0.8, 1.0, 1.2]
[calibrate.index_vol.skew]
atm = 0.25
slope = -0.3
curvature = 0.2
floor = 0.1
ceiling = 0.6
reference = 100.0
"#;

#[test]
fn same_config_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse(CALIBRATE, dir.path());
    let a = run(Command::Calibrate, &config, &dir.path().join("a")).unwrap();
    let b = run(Command::Calibrate, &config, &dir.path().join("b")).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn single_stock_discounted_mean_is_the_spot() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
seed = 11
[model]
stocks = 1
s0 = 100.0
rate = 0.04
horizon = 1.0
idio_vol = { constant = 0.3 }
index_vol = { constant = 0.2 }
[simulate]
family = "simplified"
paths = 20000
steps = 10
"#;
    let out = dir.path().join("out");
    run(Command::Simulate, &parse(text, dir.path()), &out).unwrap();
    let (header, rows) = read_csv(&out.join("summary.csv"));
    let at = |name: &str| header.iter().position(|h| h == name).unwrap();
    for row in &rows {
        let mean: f64 = row[at("discounted_mean")].parse().unwrap();
        let stderr: f64 = row[at("discounted_stderr")].parse().unwrap();
        assert!((mean - 100.0).abs() <= 3.0 * stderr, "{}: {mean} +- {stderr}", row[0]);
    }
}

#[test]
fn toy_eta_surface_lies_between_the_index_bounds() {
    // eta^2 = v - beta^2 E[sigma^2 | S] with sigma in [0.1, 0.6]
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::from_file(&configs().join("toy_calibration.toml")).unwrap();
    let c = config.calibrate.as_mut().unwrap();
    c.particles = 1500;
    c.steps = 10;
    c.independent_paths = None;
    let out = dir.path().join("out");
    run(Command::Calibrate, &config, &out).unwrap();
    let eta = read_surface_csv(&out.join("eta_surface.csv")).unwrap();
    let lo = (0.36f64 - 0.49 * 0.36).sqrt();
    let hi = (0.36f64 - 0.49 * 0.01).sqrt();
    assert!(eta.values().iter().all(|&v| v >= 0.0 && v <= hi + 1e-9));
    for &t in eta.times() {
        let atm = eta.eval(t, 100.0);
        assert!(atm >= lo - 1e-9 && atm <= hi + 1e-9, "t = {t}: {atm}");
    }
    // the index skew puts high sigma on low levels, so eta rises with the level
    assert!(eta.eval(0.5, 70.0) < eta.eval(0.5, 140.0));
}

#[test]
fn zero_beta_recovers_the_local_vol() {
    let dir = tempfile::tempdir().unwrap();
    let text = CALIBRATE.replace("beta = 0.7", "beta = 0.0").replace("constant = 0.6", "constant = 0.4");
    let out = dir.path().join("out");
    run(Command::Calibrate, &parse(&text, dir.path()), &out).unwrap();
    let eta = read_surface_csv(&out.join("eta_surface.csv")).unwrap();
    assert!(eta.values().iter().all(|&v| (v - 0.4).abs() < 1e-12));
}

#[test]
fn missing_surface_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = CALIBRATE.replace("{ constant = 0.6 }", "{ file = \"nowhere/vloc.csv\" }");
    let err = run(Command::Calibrate, &parse(&text, dir.path()), &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("vloc.csv"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn constant_vol_smile_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
seed = 8
[model]
stocks = 2
s0 = 100.0
rate = 0.02
horizon = 1.0
idio_vol = { constant = 0.3 }
index_vol = { constant = 0.2 }
[simulate]
family = "market"
rho = 0.4
paths = 40000
steps = 50
[smile]
underlying = "stock_2"
moneyness = [0.8, 0.9, 1.0, 1.1, 1.2]
"#;
    let out = dir.path().join("out");
    run(Command::Smile, &parse(text, dir.path()), &out).unwrap();
    let (header, rows) = read_csv(&out.join("smile.csv"));
    assert_eq!(header, SMILE_HEADER);
    let vols = column(&rows, 1);
    assert_eq!(vols.len(), 5);
    assert!(vols.iter().all(|v| (v - 0.3).abs() < 0.01), "{vols:?}");
}

#[test]
fn lognormal_dupire_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::from_file(&configs().join("dupire_lognormal.toml")).unwrap();
    run(Command::Dupire, &config, dir.path()).unwrap();
    let surface = read_surface_csv(&dir.path().join("local_vol.csv")).unwrap();
    let worst = surface.values().iter().map(|v| (v - 0.2).abs()).fold(0.0, f64::max);
    assert!(worst < 3e-3, "{worst}");
}

#[test]
fn theorem_study_decays_like_one_over_m() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::from_file(&configs().join("theorems.toml")).unwrap();
    run(Command::Theorems, &config, dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("study_slopes.csv"));
    assert_eq!(header, SLOPES_HEADER);
    let slope: f64 = rows[0][1].parse().unwrap();
    assert!(slope <= -0.8, "{slope}");
}

#[test]
fn output_headers_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let model = r#"
seed = 2
[model]
stocks = 2
s0 = 100.0
rate = 0.0
horizon = 1.0
idio_vol = { constant = 0.2 }
index_vol = { constant = 0.2 }
[simulate]
family = "original"
paths = 200
steps = 4
[worst_of]
strikes = [0.9, 1.0]
[theorems]
sizes = [2, 4]
paths = 100
steps = 4
"#;
    let config = parse(model, dir.path());
    let out = dir.path().join("out");
    run(Command::Simulate, &config, &out).unwrap();
    run(Command::WorstOf, &config, &out).unwrap();
    run(Command::Theorems, &config, &out).unwrap();
    run(Command::Calibrate, &parse(CALIBRATE, dir.path()), &out).unwrap();
    for (file, header) in [
        ("summary.csv", SUMMARY_HEADER),
        ("worst_of.csv", WORST_OF_HEADER),
        ("bounds.csv", BOUNDS_HEADER),
        ("study.csv", STUDY_HEADER),
        ("study_slopes.csv", SLOPES_HEADER),
        ("calibration_report.csv", REPORT_HEADER),
        ("coverage.csv", COVERAGE_HEADER),
        ("particle_smile.csv", SMILE_HEADER),
    ] {
        assert_eq!(read_csv(&out.join(file)).0, header, "{file}");
    }
    let (header, _) = read_csv(&out.join("eta_surface.csv"));
    let reference: f64 = header[0].strip_prefix("moneyness:").unwrap().parse().unwrap();
    assert_eq!(reference, 100.0);
}

#[test]
fn bad_input_maps_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let text = CALIBRATE.replace("particles = 600", "particles = 0");
    let err = run(Command::Calibrate, &parse(&text, dir.path()), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Validation { .. }), "{err}");
    let text = format!("{CALIBRATE}\n[budget]\nbudget = 10.0\n");
    let err = run(Command::Calibrate, &parse(&text, dir.path()), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}
