use clap::Parser;
use qspike::cli::{build_config, cache_key, read_profile_cache, Cli, Command, RunConfig, Subcommand};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command as Proc, Output};

fn qspike(args: &[&str], out: &Path) -> Output {
    Proc::new(env!("CARGO_BIN_EXE_qspike"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QSPIKE_OUT")
        .output()
        .unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut m = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_file() {
            m.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
        }
    }
    m
}

fn config_from(args: &[&str]) -> RunConfig {
    let cli = Cli::try_parse_from(args).unwrap();
    let (sub, flags) = match cli.command {
        Command::Ground(f) => (Subcommand::Ground, f),
        Command::Expansion(f) => (Subcommand::Expansion, f),
        other => panic!("unexpected {other:?}"),
    };
    build_config(sub, &flags).unwrap()
}

#[test]
fn constants_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = qspike(&["constants"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("constants.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# qspike"));
    assert!(csv.contains("# config_hash"));
    assert!(csv.contains("\n# seed 1\n"));
    let row = csv.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(&cols[..4], &["5", "10", "1.0000000000000000e0", "15"]);
    assert_eq!(*cols.last().unwrap(), "false");
    let a: f64 = cols[4].parse().unwrap();
    assert!((a - 655985.0 / 132496.0).abs() < 1e-12 * a);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("constants.json")).unwrap()).unwrap();
    assert_eq!(json["subcommand"], "constants");
    assert_eq!(json["seed"], 1);
}

#[test]
fn ground_reuses_cache_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let first = qspike(&["ground"], dir.path());
    assert_eq!(first.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&first.stderr).contains("solved profile"));
    let a = snapshot(dir.path());
    let second = qspike(&["ground"], dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&second.stderr).contains("cached profile"));
    assert_eq!(a, snapshot(dir.path()));
    assert!(a.contains_key("profile.csv") && a.contains_key("ground.json"));

    let cfg = config_from(&["qspike", "ground"]);
    let params = cfg.params().unwrap();
    let grid = qspike::groundstate::RadialGrid::for_params(&params, cfg.h).unwrap();
    let cached = dir.path().join("cache").join(cache_key(&params, &grid, cfg.tol));
    let prof = read_profile_cache(&cached).unwrap();
    assert!((prof.u[0] - 11.299642039995531).abs() < 1e-6);
}

#[test]
fn identities_reproduce_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert_eq!(qspike(&["identities", "--draws", "20"], d.path()).status.code(), Some(0));
    }
    assert_eq!(snapshot(a.path()).get("identities.csv"), snapshot(b.path()).get("identities.csv"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["ground", "--eps", "0.1,0.2"],
        &["ground", "--a", "5"],
        &["ground", "--no-such-flag"],
        &["expansion", "--jet", "/nonexistent/jet.json"],
        &["ground", "--set", "not_a_field=1"],
    ];
    for args in cases {
        let o = qspike(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!dir.path().join("diagnostics.json").exists());
    let help = qspike(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn numeric_failures_exit_3_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let o = qspike(&["ground", "--tol", "1e-15"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let d = fs::read_to_string(dir.path().join("diagnostics.json")).unwrap();
    assert!(d.contains("exit_code"));

    let field = dir.path().join("field.json");
    fs::write(&field, r#"{"points": [[0,0,0,0,0],[0.1,0,0,0,0],[0,0.1,0,0,0]], "tau": [1,1,1]}"#).unwrap();
    let o = qspike(&["reduce", "--field", field.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no isolated extremum"));
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"a": 4.0, "b": 5.0, "tol": 1e-8, "quad": {"angular": 8}}"#).unwrap();
    let p = path.to_str().unwrap();
    let cfg = config_from(&["qspike", "ground", "--config", p, "--b", "6", "--set", "quad.stride=2"]);
    assert_eq!((cfg.a, cfg.b, cfg.tol, cfg.p), (4.0, 6.0, 1e-8, 1.5));
    assert_eq!((cfg.quad.angular, cfg.quad.stride), (8, 2));
    let plain = config_from(&["qspike", "ground"]);
    assert_eq!((plain.a, plain.b, plain.quad.angular), (1.0, 3.0, 6));
    assert_ne!(cfg.hash(), plain.hash());
    // output location does not enter the hash
    let moved = config_from(&["qspike", "ground", "--out", "/tmp/elsewhere"]);
    assert_eq!(moved.hash(), plain.hash());
    let eps = config_from(&["qspike", "expansion", "--eps", "0.3,0.2,0.1,0.05"]);
    assert_eq!(eps.eps, vec![0.3, 0.2, 0.1, 0.05]);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("env-out");
    let o = Proc::new(env!("CARGO_BIN_EXE_qspike"))
        .arg("constants")
        .env("QSPIKE_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("constants.csv").is_file());
}

#[test]
fn reduce_on_a_small_bump() {
    let dir = tempfile::tempdir().unwrap();
    let o = qspike(&["reduce", "--side", "5", "--eps", "0.1,0.05"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json = fs::read_to_string(dir.path().join("reduce.json")).unwrap();
    assert!(json.contains("\"verdict\": \"PASS\""));
}
