use std::path::PathBuf;
use std::process::Command;

use qram_cli::{cmd_costs, cmd_factory, cmd_fidelity_scan, cmd_haar_check, cmd_verify, RunConfig};
use qram_core::noiselab::ModelKind;

fn qram() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qram"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qram-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn costs_table() {
    let cfg = RunConfig { n: vec![8], ..RunConfig::default() };
    let out = cmd_costs(&cfg).unwrap();
    assert!(out.passed);
    assert!(out.body.lines().nth(1).unwrap().starts_with("8,true,11,11,44,5,"));
    let big = RunConfig { n: (1..=12).map(|k| 1 << k).collect(), ..RunConfig::default() };
    let out = cmd_costs(&big).unwrap();
    assert!(out.passed);
    for (k, line) in out.body.lines().skip(1).enumerate() {
        let depth: usize = line.split(',').nth(5).unwrap().parse().unwrap();
        assert_eq!(depth, 2 * (k + 1) - 1);
    }
}

#[test]
fn verify_passes_and_is_deterministic() {
    let cfg = RunConfig { seed: 5, haar_samples: 20_000, ..RunConfig::default() };
    let a = cmd_verify(&cfg).unwrap();
    let b = cmd_verify(&cfg).unwrap();
    assert!(a.passed, "{}", a.body);
    assert_eq!(a.body, b.body);
}

#[test]
fn factory_defaults() {
    let cfg = RunConfig { n: vec![8192], ..RunConfig::default() };
    let out = cmd_factory(&cfg).unwrap();
    assert!(out.passed);
    let v: serde_json::Value = serde_json::from_str(&out.body).unwrap();
    assert_eq!(v["timing"]["T_query_us"].as_f64().unwrap(), 13_000.0);
    let rate = v["timing"]["rate_khz"].as_f64().unwrap();
    assert!((0.05..0.15).contains(&rate));
    assert!(out.side[0].1.starts_with("layer,from_X,from_Y,to_X,to_Y"));
}

#[test]
fn scan_zero_epsilon_and_alpha() {
    let cfg = RunConfig {
        n: vec![8, 16, 32, 64],
        models: vec![ModelKind::Ec],
        epsilons: vec![0.0, 1e-3],
        samples: 100,
        datasets: 20,
        ..RunConfig::default()
    };
    let out = cmd_fidelity_scan(&cfg).unwrap();
    let mut rdr = csv::Reader::from_reader(out.body.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for r in rows.iter().filter(|r| &r[2] == "0") {
        assert_eq!(&r[8], "0");
    }
    let alpha = &out.side[0].1;
    assert_eq!(alpha.lines().count(), 3);
    assert!(alpha.lines().nth(2).unwrap().starts_with("EC,0.001,bound,"));
}

#[test]
fn haar_check_passes() {
    let cfg = RunConfig { haar_samples: 50_000, seed: 9, ..RunConfig::default() };
    assert!(cmd_haar_check(&cfg).unwrap().passed);
}

#[test]
fn binary_exit_codes_and_files() {
    let out = tmp("report.json");
    let st = qram().args(["factory", "--n", "4096", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(out.with_file_name("report.moves.csv").exists());

    let st = qram().args(["costs", "--n", "6"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = qram().arg("nonsense").status().unwrap();
    assert_eq!(st.code(), Some(2));

    let cfg = tmp("cfg.json");
    std::fs::write(&cfg, r#"{"n": [2, 4], "seed": 11, "haar_samples": 5000}"#).unwrap();
    let run = || qram().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);

    std::fs::write(&cfg, r#"{"n": [2], "unknown_field": true}"#).unwrap();
    let st = qram().args(["costs", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let sim = qram().args(["simulate", "--n", "2", "--seed", "3", "--threads", "1"]).output().unwrap();
    assert_eq!(sim.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&sim.stdout).unwrap();
    assert!(v["fidelity"].as_f64().unwrap() > 1.0 - 1e-8);
}
