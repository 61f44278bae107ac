use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mfgdta::io::{self, ExperimentConfig, RunMode, Summary};
use mfgdta::Error;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    io::load_config(&config_path(name)).unwrap()
}

/// A bundled config as JSON, with the mesh coarsened so debug builds stay quick.
fn coarse_json(name: &str, dx: f64) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(config_path(name)).unwrap()).unwrap();
    v["grid"]["dx"] = dx.into();
    v
}

fn write_config(dir: &Path, v: &serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

#[test]
fn two_path_config_holds_the_convergence_settings() {
    let cfg = load("braess2.json");
    assert_eq!(cfg.grid.horizon, 3.0);
    assert_eq!(cfg.network.links.len(), 4);
    for l in &cfg.network.links {
        assert_eq!((l.c1, l.c2, l.c3, l.length), (1.0, 1.0, 0.5, 1.0));
    }
    assert_eq!(cfg.costs.c4, 1.0);
    assert!(cfg.network.capacities.values().all(|&m| m == 1.0));
    let d = &cfg.network.demand["1"];
    assert_eq!(d.len(), 1);
    assert_eq!((d[0].start, d[0].end, d[0].rate), (0.0, 0.5, 0.5));
    assert!(cfg.terminal.nodal.values().all(|&v| v == 0.0));
}

#[test]
fn ow_config_holds_the_network_settings() {
    let cfg = load("ow.json");
    assert_eq!(cfg.grid.horizon, 12.0);
    assert_eq!(cfg.network.nodes.len(), 13);
    assert_eq!(cfg.network.links.len(), 24);
    let d = &cfg.network.demand["1"];
    assert_eq!((d[0].start, d[0].end, d[0].rate), (0.0, 2.0, 0.75));
    assert_eq!(cfg.network.destination, "13");
    let p = cfg.problem().unwrap();
    assert_eq!(p.dnet.num_original_nodes(), 13);
}

#[test]
fn every_bundled_config_validates() {
    for name in ["braess2.json", "braess3.json", "paradox2.json", "paradox3.json", "ow.json"] {
        let cfg = load(name);
        assert_eq!(cfg.schema_version, io::SCHEMA_VERSION, "{name}");
    }
}

#[test]
fn missing_destination_names_the_field() {
    let mut v = coarse_json("braess2.json", 0.25);
    v["network"].as_object_mut().unwrap().remove("destination");
    match io::parse_config(&v.to_string()) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "destination"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_values_name_their_section() {
    let mut v = coarse_json("braess2.json", 0.25);
    v["grid"]["dx"] = 0.3.into();
    match io::parse_config(&v.to_string()) {
        Err(Error::Config { field, .. }) => assert!(field.starts_with("grid"), "{field}"),
        other => panic!("unexpected {other:?}"),
    }
    let mut v = coarse_json("braess2.json", 0.25);
    v["schema_version"] = 99.into();
    assert!(matches!(io::parse_config(&v.to_string()), Err(Error::Config { field, .. }) if field == "schema_version"));
}

#[test]
fn syntax_errors_report_their_line() {
    let text = "{\n  \"schema_version\": 1,\n  \"name\": oops\n}";
    match io::parse_config(text) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    let unknown = coarse_json("braess2.json", 0.25).to_string().replacen("\"grid\"", "\"grdi\"", 1);
    assert!(io::parse_config(&unknown).is_err());
}

#[test]
fn floats_keep_seventeen_digits() {
    for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
        let s = io::fmt_f64(x);
        assert_eq!(s.parse::<f64>().unwrap(), x);
        let mantissa = s.split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    }
}

#[test]
fn summary_round_trips_and_csvs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = io::parse_config(&coarse_json("braess2.json", 0.25).to_string()).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out_a = io::run_experiment(&cfg, RunMode::Mfg, &a).unwrap();
    io::run_experiment(&cfg, RunMode::Mfg, &b).unwrap();
    assert!(out_a.converged());

    let read = io::read_summary(&a.join("summary.json")).unwrap();
    let mut expected = Summary::new(cfg.name.clone(), &out_a.solutions[0]);
    expected.wall_time = read.wall_time;
    assert_eq!(read, expected);

    for file in ["fields.csv", "queues.csv", "beta.csv"] {
        let x = fs::read_to_string(a.join(file)).unwrap();
        assert_eq!(x, fs::read_to_string(b.join(file)).unwrap(), "{file}");
        let rows: Vec<&str> = x.lines().skip(1).collect();
        assert!(!rows.is_empty());
    }
    let fields = fs::read_to_string(a.join("fields.csv")).unwrap();
    let header = fields.lines().next().unwrap();
    assert_eq!(header, "variable,parent_link,sublink_index,k,value");
    let keys: Vec<(String, String, usize, usize)> = fields
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].into(), c[1].into(), c[2].parse().unwrap(), c[3].parse().unwrap())
        })
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn both_modes_write_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = io::parse_config(&coarse_json("braess2.json", 0.25).to_string()).unwrap();
    let out = io::run_experiment(&cfg, RunMode::Both, dir.path()).unwrap();
    assert_eq!(out.solutions.len(), 2);
    for sub in ["mfg/summary.json", "lwr/summary.json", "comparison.json"] {
        assert!(dir.path().join(sub).exists(), "{sub}");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfgdta"))
}

#[test]
fn cli_exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), &coarse_json("braess2.json", 0.25));
    let status = cli().arg("run").arg(&good).arg("--out").arg(dir.path().join("ok")).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.path().join("ok/summary.json").exists());

    let mut capped = coarse_json("braess2.json", 0.25);
    capped["solver"]["max_inner"] = 1.into();
    let capped = write_config(dir.path(), &capped);
    let status = cli().arg("run").arg(&capped).arg("--out").arg(dir.path().join("nc")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(dir.path().join("nc/summary.json").exists());

    let mut broken = coarse_json("braess2.json", 0.25);
    broken["network"].as_object_mut().unwrap().remove("destination");
    let broken = write_config(dir.path(), &broken);
    let out = cli().arg("run").arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("destination"));
}

#[test]
fn cli_convergence_and_car_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &coarse_json("braess2.json", 0.25));
    let out = cli()
        .args(["convergence"])
        .arg(&cfg)
        .args(["--dx", "0.5,0.25"])
        .arg("--out")
        .arg(dir.path().join("conv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("conv/convergence.csv").exists());

    let out = cli()
        .arg("simulate-car")
        .arg(&cfg)
        .args(["--origin", "1", "--seed", "3"])
        .arg("--out")
        .arg(dir.path().join("car"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("car cost"));
    assert!(dir.path().join("car/trajectory.json").exists());
}
