use std::path::Path;
use std::process::{Command, Output};

use esh_core::io::{read_branch, read_profile, write_profile, Profile, Provenance};
use esh_core::{Field, Grid, ModelParams};

fn esh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esh")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> serde_json::Value {
    let out = esh(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn nf_report_at_sh23() {
    let v = ok_json(&["nf", "--b", "1.8", "--alpha", "0", "--beta", "0"]);
    assert!((v["q2"].as_f64().unwrap() + 2.67).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(esh(&["nf", "--b", "1.8"]).status.code(), Some(2));
    assert_eq!(esh(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(esh(&["nf", "--surface", "--alpha-range", "3:1"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\ngamma = 1\n").unwrap();
    assert_eq!(esh(&["--config", cfg.to_str().unwrap(), "maxwell"]).status.code(), Some(2));
}

#[test]
fn surface_slice_brackets_both_q2_zeros() {
    let out = esh(&["nf", "--surface", "--slice", "beta=0", "--b", "1.8", "--alpha-range", "-2:20"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# tool: esh "));
    let rows: Vec<(f64, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 221);
    let changes: Vec<(f64, f64)> =
        rows.windows(2).filter(|w| w[0].1.signum() != w[1].1.signum()).map(|w| (w[0].0, w[1].0)).collect();
    assert_eq!(changes.len(), 2, "{changes:?}");
    // each bracket must overlap the reference zero and its tolerance
    assert!(changes[0].0 <= -1.306 + 0.002 && changes[0].1 >= -1.306 - 0.002);
    assert!(changes[1].0 <= 18.4 + 0.05 && changes[1].1 >= 18.4 - 0.05);
}

#[test]
fn zero_profile_spectrum_matches_fourier_symbol() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = Grid::new(16.0 * std::f64::consts::PI, 128).unwrap();
    let p = ModelParams::new(-0.1, 1.8, 0.0, 0.0).unwrap();
    let path = tmp.path().join("zero.dat");
    let mut f = std::fs::File::create(&path).unwrap();
    write_profile(&mut f, &Provenance::new("now", "{}"), &Profile { params: p, c: 0.0, u: Field::zeros(grid.clone()) })
        .unwrap();
    let out = tmp.path().join("out");
    let v = ok_json(&["--out", out.to_str().unwrap(), "stability", "--profile", path.to_str().unwrap()]);
    let expected = grid.wavenumbers().iter().map(|&k| p.linear_rate(k)).fold(f64::NEG_INFINITY, f64::max);
    assert!((v["leading"][0]["re"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!(body(&out.join("spectrum.csv")).starts_with("point,re,im,parity,goldstone,r"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nb = 1.5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = ok_json(&["--config", c, "--out", tmp.path().to_str().unwrap(), "maxwell"]);
    assert_eq!(from_file["b"].as_f64(), Some(1.5));
    let flagged = ok_json(&["--config", c, "--out", tmp.path().to_str().unwrap(), "maxwell", "--b", "1.8"]);
    assert_eq!(flagged["b"].as_f64(), Some(1.8));
    assert!((flagged["r_maxwell"].as_f64().unwrap() + 0.3128).abs() < 1e-3);
}

#[test]
fn seeded_evolution_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let args = ["--out", out.to_str().unwrap(), "evolve", "--n", "128", "--length", "50.26548245743669"];
        ok_json(&[&args[..], &["--r", "-0.2", "--t-end", "5", "--noise", "0.01", "--seed", "7"]].concat());
        body(&out.join("final.dat"))
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn variational_run_has_non_increasing_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let v = ok_json(&[
        "--out", out.to_str().unwrap(), "evolve", "--r", "-0.25", "--alpha", "0.15", "--beta", "0.3", "--t-end", "10",
    ]);
    assert_eq!(v["energy_non_increasing"], serde_json::Value::Bool(true));
    let monitors = esh_core::io::read_monitors(std::fs::File::open(out.join("monitors.csv")).unwrap()).unwrap();
    assert_eq!(monitors.len(), 101);
    assert!(monitors.iter().all(|m| m.energy.is_some()));
}

#[test]
fn convergence_report_has_fourth_order_slope() {
    let v = ok_json(&[
        "evolve", "--convergence", "--n", "128", "--length", "50.26548245743669", "--r", "-0.2", "--alpha", "0.5",
        "--beta", "0.2", "--dt", "0.2",
    ]);
    let orders: Vec<f64> = v["convergence"][0]["orders"].as_array().unwrap().iter().map(|o| o.as_f64().unwrap()).collect();
    assert!(orders.iter().all(|&o| o > 3.5), "{orders:?}");
}

#[test]
fn resume_reaches_the_same_next_fold() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let o = out.to_str().unwrap();
    ok_json(&["--out", o, "continue", "--alpha", "0.5", "--folds", "5"]);
    let rows = read_branch(std::fs::File::open(out.join("L0.csv")).unwrap()).unwrap();
    let folds: Vec<_> = rows.iter().filter(|r| r.event == Some(esh_core::continuation::EventType::Fold)).collect();
    assert_eq!(folds.len(), 5);
    assert!(rows.iter().all(|r| r.m_r.is_none()));
    let profile = out.join("L0_profiles").join(format!("{}.dat", folds[3].index));
    let saved = read_profile(std::io::BufReader::new(std::fs::File::open(&profile).unwrap())).unwrap();
    assert_eq!(saved.params.r, folds[3].r);

    let again = tmp.path().join("b");
    let v = ok_json(&["--out", again.to_str().unwrap(), "continue", "--resume", profile.to_str().unwrap(), "--folds", "1"]);
    let next = v["branches"][0]["folds"][0].as_f64().unwrap();
    assert!((next - folds[4].r).abs() < 1e-6, "{next} vs {}", folds[4].r);
}

#[test]
fn rungs_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let v = ok_json(&["--out", out.to_str().unwrap(), "continue", "--alpha", "0.5", "--folds", "3", "--rungs"]);
    let labels: Vec<&str> = v["branches"].as_array().unwrap().iter().map(|b| b["label"].as_str().unwrap()).collect();
    assert!(labels.contains(&"rung0"), "{labels:?}");
    let rows = read_branch(std::fs::File::open(out.join("L0_rung0.csv")).unwrap()).unwrap();
    assert!(rows.iter().any(|r| r.c.abs() > 1e-3));
    assert!(rows.first().unwrap().c.abs() < 1e-4 && rows.last().unwrap().c.abs() < 1e-4);
}
