// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use splatreg_core::SplatModel;

fn splatreg(sub: &str, cfg: &str, out: &Path) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, cfg).unwrap();
    Command::new(env!("CARGO_BIN_EXE_splatreg"))
        .args([sub, "--config"])
        .arg(&path)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn missing_seed_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = splatreg("fit", "target = fig1\nn = 20\nk = 3\nsteps = 5\n", out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn unknown_key_and_target_are_config_errors() {
    let out = tempfile::tempdir().unwrap();
    let o = splatreg("fit", "seed = 1\ntarget = fig1\nn = 20\nk = 3\nsteps = 5\nlearnin_rate = 1\n", out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learnin_rate"));
    let o = splatreg("fit", "seed = 1\ntarget = nope\nn = 20\nk = 3\nsteps = 5\n", out.path());
    assert_eq!(o.status.code(), Some(2));
    let o = splatreg("fit", "seed = 1\ntarget = fig1\nn = 20\nk = 3\nsteps = 5\nlearning_rate = -1\n", out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn fit_writes_trace_model_manifest_and_checkpoints() {
    let out = tempfile::tempdir().unwrap();
    let cfg = "seed = 3\ntarget = sin2pi\nn = 50\nk = 5\nalgorithm = adam\nlearning_rate = 1e-2\nsteps = 40\nlog_every = 10\ncheckpoint_every = 20\n";
    let o = splatreg("fit", cfg, out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "step,train_loss,val_mse,wall_ms,k_alive");
    let steps: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["0", "10", "20", "30", "40"]);
    let model = SplatModel::from_json(&fs::read_to_string(out.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model.len(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["subcommand"], "fit");
    assert!(manifest["metrics"]["val_mse"].as_f64().unwrap() > 0.0);
    let ckpts = fs::read_dir(out.path().join("checkpoints")).unwrap().count();
    assert!(ckpts >= 2);
}

#[test]
fn same_seed_same_trace() {
    let cfg = "seed = 9\ntarget = sin_cos_2d\nn = 100\nnoise_sigma = 0.1\nk = 6\nalgorithm = adam\nlearning_rate = 1e-3\nsteps = 30\nlog_every = 5\nbatch_size = 32\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(splatreg("fit", cfg, a.path()).status.success());
    assert!(splatreg("fit", cfg, b.path()).status.success());
    assert_eq!(
        fs::read(a.path().join("trace.csv")).unwrap(),
        fs::read(b.path().join("trace.csv")).unwrap()
    );
}

#[test]
fn pde_poisson_manufactured_runs() {
    let out = tempfile::tempdir().unwrap();
    let cfg = "seed = 1\nproblem = poisson\nk = 4\nn_int = 100\nn_bdy = 20\nboundary = manufactured-splat\nforcing = manufactured-splat\nalgorithm = adam\nlearning_rate = 1e-3\nsteps = 20\nresample = true\n";
    let o = splatreg("pde", cfg, out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.path().join("trace.csv").exists());
}

#[test]
fn baseline_csv() {
    let out = tempfile::tempdir().unwrap();
    let o = splatreg("baseline", "seed = 0\ntarget = sawtooth\ncheb_nodes = 30\n", out.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(out.path().join("baseline.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,params,mse");
    assert!(rows[1].starts_with("chebyshev,30,"));
    assert!(rows[2].starts_with("chebyshev_with_nodes,60,"));
    assert!(rows[3].starts_with("haar,256,"));
}

#[test]
fn gradcheck_passes_and_reports_each_block() {
    let out = tempfile::tempdir().unwrap();
    let o = splatreg("gradcheck", "seed = 2\ninstances = 5\n", out.path());
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("PASS").count(), 12);
    // An impossible threshold must fail with a nonzero exit.
    let o = splatreg("gradcheck", "seed = 2\ninstances = 2\nloss = ls\nthreshold = 0\n", out.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn approx_bound_rows() {
    let out = tempfile::tempdir().unwrap();
    let o = splatreg("approx-bound", "seed = 4\npairs = 0.2:50\nreplicates = 3\ngrid_points = 101\n", out.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(out.path().join("approx_bound.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "eps,k,seed,sup_error");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0.2,50,4,"));
    assert!(rows[3].starts_with("0.2,50,6,"));
}

#[test]
fn geodesic_endpoints_and_distance() {
    let out = tempfile::tempdir().unwrap();
    let cfg = "seed = 0\nd = 1\na0 = 1\nb0 = 0\na1 = 1\nb1 = 3\nsteps = 4\n";
    let o = splatreg("geodesic", cfg, out.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(out.path().join("geodesic.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        let t = i as f64 / 3.0;
        assert!((r[0] - t).abs() < 1e-15);
        assert!((r[2] - 3.0 * t).abs() < 1e-12);
        assert!((r[3] - 3.0 * t).abs() < 1e-12);
    }
    let o = splatreg("geodesic", "seed = 0\nd = 1\na0 = 0\nb0 = 0\na1 = 1\nb1 = 3\n", out.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pde_reads_tabulated_boundary_values() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bdy.csv"), "0,0,1\n1,1,-1\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "seed = 1\nproblem = poisson\nk = 2\nn_int = 20\nn_bdy = 10\nboundary = table:bdy.csv\nsteps = 3\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_splatreg"))
        .args(["pde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(dir.path().join("bdy.csv"), "0,0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_splatreg"))
        .args(["pde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
