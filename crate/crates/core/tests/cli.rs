use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_coupled-index");

const MODEL: &str = r#"
[model]
stocks = 3
s0 = 100.0
rate = 0.03
horizon = 1.0
idio_vol = { constant = 0.2 }
index_vol = { constant = 0.25 }
"#;

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}"));
    let output = Command::new(BIN)
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_summary_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("seed = 1\n{MODEL}\n[simulate]\nfamily = \"original\"\npaths = 50\nsteps = 4\ndump = true\ncompanion = true\n");
    let (o, out) = run(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("asset,initial,mean"));
    assert!(summary.contains("\nlimit_index,"));
    let dump = fs::read_to_string(out.join("paths.csv")).unwrap();
    assert_eq!(dump.lines().count(), 1 + 50 * 5);
}

#[test]
fn zero_paths_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("seed = 1\n{MODEL}\n[simulate]\nfamily = \"simplified\"\npaths = 0\nsteps = 4\n");
    let (o, out) = run(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths"), "{}", stderr(&o));
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn missing_config_and_bad_toml_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["smile", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"));
    let (o, _) = run(dir.path(), "smile", "seed = \"one\"\n", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let (o, _) = run(dir.path(), "worst-of", "seed = 1\n", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("worst_of"), "{}", stderr(&o));
}

#[test]
fn over_budget_calibration_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 1\n[budget]\nbudget = 1e6\n[calibrate]\ns0 = 100.0\nrate = 0.0\nhorizon = 1.0\n\
               local_vol = { constant = 0.4 }\nindex_vol = { constant = 0.2 }\nbeta = 1.0\nparticles = 1000\nsteps = 10\n";
    let (o, out) = run(dir.path(), "calibrate", cfg, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn arbitrage_in_prices_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // non-convex in strike at 100
    let prices = "strike,90,100,110\n0.5,12,9,1\n1.0,14,11,5\n";
    fs::write(dir.path().join("prices.csv"), prices).unwrap();
    let cfg = "seed = 0\n[dupire]\nspot = 100.0\nrate = 0.0\nprices = \"prices.csv\"\n";
    let (o, _) = run(dir.path(), "dupire", cfg, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("seed = 1\n{MODEL}\n[simulate]\nfamily = \"market\"\nrho = 0.5\npaths = 100\nsteps = 3\n");
    let (a, out_a) = run(dir.path(), "simulate", &cfg, &[]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let first = fs::read(out_a.join("summary.csv")).unwrap();
    let (b, out_b) = run(dir.path(), "simulate", &cfg, &["--seed", "2", "--threads", "1"]);
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(first, fs::read(out_b.join("summary.csv")).unwrap());
    let (c, out_c) = run(dir.path(), "simulate", &cfg, &["--seed", "1", "--threads", "3"]);
    assert_eq!(c.status.code(), Some(0));
    assert_eq!(first, fs::read(out_c.join("summary.csv")).unwrap());
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        coupled_index::config::RunConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}
