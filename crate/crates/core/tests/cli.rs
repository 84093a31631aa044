use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 4
trials = 6
t_max = 40
checkpoints = [10, 40]

[graph]
kind = "ring"
n = 6

[f]
kind = "tanh"
slope = 2.0

[noise]
kind = "cauchy"
scale = 0.5

[sensing]
theta = 1.0
noise = { kind = "gaussian", sigma = 1.0 }

[schedule]
a = 1.0
"#;

fn rcons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcons")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(rcons(&["--frobnicate"]).status.code(), Some(1));
    assert_eq!(rcons(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(rcons(&[]).status.code(), Some(1));
    assert_eq!(rcons(&["simulate"]).status.code(), Some(1));
    assert_eq!(rcons(&["figdata", "fig9"]).status.code(), Some(1));
    assert_eq!(rcons(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("trials = 6", "trials = 0"));
    assert_eq!(rcons(&["simulate", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(dir.path(), &CONFIG.replace("kind = \"ring\"", "kind = \"torus\""));
    assert_eq!(rcons(&["simulate", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(rcons(&["analyze", "--config", "/nonexistent/exp.toml"]).status.code(), Some(1));
}

#[test]
fn unstable_gain_exits_two_and_names_margin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("a = 1.0", "a = 0.01"));
    let out = rcons(&["analyze", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("margin"));
}

#[test]
fn analyze_emits_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = rcons(&["analyze", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["header"]["seed"], 4);
    assert_eq!(v["header"]["config_hash"].as_str().unwrap().len(), 64);
    let r = &v["body"]["report"];
    for key in [
        "sigma_n_sq", "s_diag", "c_rc", "c_rc_norm", "a_star", "c_star_norm", "mse_bound", "varrho", "fisher_ratio",
        "stability_margin",
    ] {
        assert!(!r[key].is_null(), "missing {key}");
    }
    assert_eq!(r["s_diag"].as_array().unwrap().len(), 5);
}

#[test]
fn graphs_prints_spectral_summary() {
    let out = rcons(&["graphs", "--family", "ring", "--n", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().last().unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[1], "10");
    assert_eq!(cells[2], "10");
    let l2: f64 = cells[4].parse().unwrap();
    assert!((l2 - 4.0 * (std::f64::consts::PI / 10.0).sin().powi(2)).abs() < 1e-12);
    assert_eq!(rcons(&["graphs", "--table", "--n", "16"]).status.code(), Some(0));
}

#[test]
fn simulate_and_ensemble_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    for sub in ["simulate", "ensemble"] {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        for d in [&a, &b] {
            let out = rcons(&[sub, "--config", &cfg, "--out", d.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
        }
    }
    let traj = std::fs::read_to_string(dir.path().join("simulate-a/trajectory.csv")).unwrap();
    assert!(traj.lines().any(|l| l == "trial,t,node,value"));
    let summary = std::fs::read_to_string(dir.path().join("simulate-a/summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l == "trial,theta_hat,dispersion_final,seed"));
    assert!(summary.starts_with("# tool: rcons"));
}

#[test]
fn flags_override_file_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = rcons(&["ensemble", "--config", &cfg, "--seed", "9", "--trials", "3", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let trials = std::fs::read_to_string(dir.path().join("o/ensemble_trials.csv")).unwrap();
    assert!(trials.contains("# seed: 9"));
    let rows = trials.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 4);
}

#[test]
fn figdata_writes_figure_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcons(&["figdata", "fig1", "--trials", "1", "--t-max", "20", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("fig1/fig1_trajectories.csv")).unwrap();
    let rows = traj.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 75 * 21);
}
