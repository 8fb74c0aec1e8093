// Copyright 2026 cqdyn contributors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end tests of the `cqdyn` binary: exit-code contract, output
//! files, and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cqdyn"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const OSC_SMALL: &str = r#"
[scenario]
name = "oscillator-pair"
d1 = 1.0
lambda = 1.0
d2 = {D2}
gamma = 0.1

[grid]
axes = [{ min = -8.0, max = 8.0, points = 16 }, { min = -8.0, max = 8.0, points = 16 }]

[quantum]
n_q = 8

[run]
t_final = {T}
snapshot_stride = 50
"#;

fn osc_config(d2: f64, t: f64) -> String {
    OSC_SMALL.replace("{D2}", &d2.to_string()).replace("{T}", &t.to_string())
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    // raw scalar couplings: margin 2*1 - 1 = 1 > 0, valid
    let raw = write_config(
        dir.path(),
        "raw.toml",
        "[couplings]\nd0 = [[1.0]]\nd1 = [[1.0]]\nd2 = [[1.0]]\n",
    );
    let out = run(&["check", "--config", raw.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verdict=valid"), "{text}");
    assert!(text.contains("schur_margin=1e0"), "{text}");

    // oscillator exactly on the trade-off boundary: exit 3
    let osc = write_config(dir.path(), "osc.toml", &osc_config(1.0, 0.1));
    let out = run(&["check", "--config", osc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // below the boundary: exit 2
    let bad = write_config(dir.path(), "bad.toml", &osc_config(0.25, 0.1));
    let out = run(&["check", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_required_field_names_it_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "broken.toml", "[couplings]\nd1 = [[0.5]]\nd2 = [[1.0]]\n");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("d0"), "error message must name the missing field: {err}");
}

#[test]
fn evolve_refuses_invalid_without_flag_and_runs_with_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "viol.toml", &osc_config(0.25, 0.5));
    let out_dir = dir.path().join("run");

    let out = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "must refuse invalid dynamics");

    let out = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--allow-invalid",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("diagnostics.csv").exists());
    assert!(out_dir.join("marginals_final.csv").exists());
    assert!(out_dir.join("config.resolved.toml").exists());
    assert!(out_dir.join("certificate.json").exists());
    let diag = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let header = diag.lines().next().unwrap();
    assert_eq!(header, "t,trace_err,min_eig,mean_0,mean_1,var_0,var_1,purity");
    // monotone time column
    let times: Vec<f64> = diag
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_duration_run_emits_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg_text = osc_config(2.0, 0.0);
    cfg_text.push_str("\n");
    let cfg = write_config(dir.path(), "zero.toml", &cfg_text);
    let out_dir = dir.path().join("zrun");
    let out = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snaps: Vec<_> = fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.starts_with("snapshot_").then_some(name)
        })
        .collect();
    assert_eq!(snaps.len(), 1, "snapshots: {snaps:?}");
}

#[test]
fn identical_config_and_seed_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "det.toml", &osc_config(2.0, 0.4));
    let mut outputs = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = dir.path().join(run_dir);
        let out = run(&[
            "evolve",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((
            fs::read(out_dir.join("diagnostics.csv")).unwrap(),
            fs::read(out_dir.join("marginals_final.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "diagnostics differ between identical runs");
    assert_eq!(outputs[0].1, outputs[1].1, "marginals differ between identical runs");
}

#[test]
fn sweep_crosses_the_boundary_at_ratio_one() {
    let dir = tempfile::tempdir().unwrap();
    // a resolved grid and a negativity threshold above its discretization
    // floor, so only genuine CP violations cross it
    let body = r#"
[scenario]
name = "oscillator-pair"
d1 = 1.0
lambda = 1.0
gamma = 0.1
widths = [1.5, 1.5]

[grid]
axes = [{ min = -8.0, max = 8.0, points = 24 }, { min = -8.0, max = 8.0, points = 24 }]

[quantum]
n_q = 8

[run]
t_final = 3.0
neg_threshold = 0.002

[sweep]
parameter = "d2_ratio"
values = [0.25, 0.5, 1.0, 1.5]
"#;
    let body = body.to_string();
    let cfg = write_config(dir.path(), "sweep.toml", &body);
    let out_dir = dir.path().join("sw");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let margins: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(margins[0] < 0.0 && margins[1] < 0.0, "below ratio 1: negative margin");
    assert!(margins[2].abs() < 1e-9, "ratio 1.0 is the boundary, margin {}", margins[2]);
    assert!(margins[3] > 0.0, "above ratio 1: positive margin");

    // time-to-negativity is non-increasing as the ratio decreases below 1;
    // the strictly valid point stays above the threshold (the boundary
    // point itself may brush it through discretization error)
    let ttn: Vec<Option<f64>> = rows
        .iter()
        .map(|r| (r[3] != "inf").then(|| r[3].parse().unwrap()))
        .collect();
    let t025 = ttn[0].expect("ratio 0.25 must go negative");
    let t05 = ttn[1].expect("ratio 0.5 must go negative");
    assert!(t025 <= t05, "deeper violation must cross earlier: {t025} vs {t05}");
    assert_eq!(ttn[3], None, "valid point must not cross the negativity threshold");
}

#[test]
fn single_point_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = osc_config(1.0, 0.2);
    body.push_str("\n[sweep]\nparameter = \"d2\"\nvalues = [2.0]\n");
    let cfg = write_config(dir.path(), "sweep1.toml", &body);
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 2, "header plus one row: {text}");
}

#[test]
fn moments_emits_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ou.toml",
        r#"
[scenario]
name = "classical-ou"
gamma = 1.0
diffusion = 0.5

[grid]
axes = [{ min = -7.0, max = 7.0, points = 96 }]

[moments]
dt = 0.02
max_order = 2
"#,
    );
    let out_dir = dir.path().join("m");
    let out = run(&[
        "moments",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("moments.csv")).unwrap();
    assert!(csv.starts_with("n,indices,mu,nu,re,im,stderr\n"));
    assert!(out_dir.join("pawula.json").exists());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("classification=ConsistentWithContinuous"), "{text}");
}

#[test]
fn jump_scenarios_check_and_evolve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "deph.toml",
        r#"
[scenario]
name = "dephasing-qubit"
lambda = 0.8

[run]
t_final = 1.0
dt = 0.001
"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["evolve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    // a kernel violating the block positivity is refused
    let cfg = write_config(
        dir.path(),
        "badjump.toml",
        r#"
[scenario]
name = "two-site-jump"
rate_01 = 0.1
rate_10 = 0.2
flip_rate = 0.3
cross_coupling = 0.9

[run]
t_final = 0.5
dt = 0.001
"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["evolve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn raw_jump_kernel_config_checks_and_evolves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "kernel.toml",
        r#"
[jump]
sites = [[0.0], [1.0]]
lindblads = ["sigma_minus"]
blocks = [
  [[0.0, 0.0], [0.0, 0.2]],
  [[0.3, 0.0], [0.0, 0.0]],
  [[0.5, [0.1, 0.05]], [[0.1, -0.05], 0.6]],
  [[0.0, 0.0], [0.0, 0.0]],
]

[run]
t_final = 0.5
dt = 0.001
"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    // the kernel is valid with the zero diagonal blocks sitting at margin 0
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["evolve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("final_trace_error"), "{text}");
}

#[test]
fn scenarios_lists_the_gallery() {
    let out = run(&["scenarios"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["oscillator-pair", "classical-ou", "two-site-jump", "dephasing-qubit"] {
        assert!(text.contains(name), "missing {name}: {text}");
    }
}
