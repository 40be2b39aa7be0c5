//! End-to-end checks of the command-line front end: artifact and manifest
//! contracts, the documented exit codes (0 success, 2 configuration, 3 solver,
//! 4 inconclusive), environment/flag precedence, and byte-determinism of the
//! result files.

#![cfg(feature = "cli")]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hartree-lab"))
}

/// Fresh scratch directory under the cargo-provided test tmpdir.
fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The manifest must list exactly the non-manifest files present in the
/// output directory; returns the parsed manifest for further checks.
fn check_manifest(dir: &Path, subcommand: &str) -> Value {
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["subcommand"], subcommand);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(manifest["versions"]["hartree-lab"].is_string());
    let listed: BTreeSet<String> = manifest["outputs"]
        .as_array()
        .expect("outputs array")
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let present: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name != "manifest.json")
        .collect();
    assert_eq!(
        listed, present,
        "manifest file list does not match the directory contents"
    );
    manifest
}

#[test]
fn solve_nr_writes_artifacts_with_complete_manifest() {
    let dir = scratch("solve-nr-artifacts");
    let out = run(&[
        "solve-nr",
        "--n",
        "400",
        "--r-max",
        "25",
        "--tol",
        "1e-9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let manifest = check_manifest(&dir, "solve-nr");
    assert_eq!(manifest["config"]["grid"]["n"], 400);
    assert_eq!(manifest["config"]["grid"]["r_max"], 25.0);

    let state = read_json(&dir.join("ground_state_nr.json"));
    assert_eq!(state["model"], "nonrelativistic");
    assert_eq!(state["multiplier"].as_f64().unwrap(), 1.0);
    // The stopping rule bounds the iterate update, not the residual itself,
    // so only the converged-state residual contract applies here.
    assert!(state["residual"].as_f64().unwrap() <= 1e-8);

    let csv = fs::read_to_string(dir.join("profile_nr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,q"));
    assert_eq!(lines.count(), 400, "one row per grid node");
}

#[test]
fn config_file_is_honored_and_flags_take_precedence() {
    let dir = scratch("config-precedence");
    let cfg_path = dir.join("run.toml");
    fs::write(&cfg_path, "[grid]\nn = 300\nr_max = 25.0\n").unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "solve-nr",
        "--n",
        "400",
    ]);
    assert!(out.status.success());
    let manifest = check_manifest(&out_dir, "solve-nr");
    assert_eq!(manifest["config"]["grid"]["n"], 400, "flag beats file");
    assert_eq!(
        manifest["config"]["grid"]["r_max"], 25.0,
        "file beats default"
    );
}

#[test]
fn env_var_sets_output_dir_and_out_flag_overrides_it() {
    let env_dir = scratch("env-dir");
    let out = bin()
        .args(["solve-nr", "--n", "300", "--r-max", "25"])
        .env("HARTREE_LAB_OUT", env_dir.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("ground_state_nr.json").exists());

    let flag_dir = scratch("env-dir-overridden");
    let decoy = scratch("env-dir-decoy");
    let out = bin()
        .args([
            "solve-nr",
            "--n",
            "300",
            "--r-max",
            "25",
            "--out",
            flag_dir.to_str().unwrap(),
        ])
        .env("HARTREE_LAB_OUT", decoy.to_str().unwrap())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("ground_state_nr.json").exists());
    assert!(
        !decoy.join("ground_state_nr.json").exists(),
        "--out must override the environment variable"
    );
}

#[test]
fn result_artifacts_are_byte_deterministic() {
    let args_for = |dir: &Path, sub: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = sub.iter().map(|s| s.to_string()).collect();
        v.push("--out".into());
        v.push(dir.to_str().unwrap().into());
        v
    };
    for (name, sub) in [
        (
            "det-solve",
            &["solve-nr", "--n", "400", "--r-max", "25", "--tol", "1e-9"][..],
        ),
        (
            "det-heat",
            &["heat-kernel", "--n", "96", "--r-max", "12", "--t", "0.5"][..],
        ),
    ] {
        let d1 = scratch(&format!("{name}-1"));
        let d2 = scratch(&format!("{name}-2"));
        assert!(bin().args(args_for(&d1, sub)).output().unwrap().status.success());
        assert!(bin().args(args_for(&d2, sub)).output().unwrap().status.success());
        for entry in fs::read_dir(&d1).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "manifest.json" {
                continue; // records wall time by design
            }
            let a = fs::read(d1.join(&name)).unwrap();
            let b = fs::read(d2.join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs between identical runs");
        }
    }
}

#[test]
fn validation_failures_exit_with_code_2() {
    // Solver tolerance outside the accepted window.
    let dir = scratch("bad-tol");
    let out = run(&["solve-nr", "--tol", "1e-3", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty(), "diagnostic expected on stderr");

    // Unknown key in the configuration file.
    let dir = scratch("bad-key");
    let cfg = dir.join("run.toml");
    fs::write(&cfg, "[grid]\nn = 300\nbogus = 1\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "solve-nr"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bogus"), "stderr should name the bad key: {msg}");

    // Unknown subcommand (argument parsing).
    let out = run(&["definitely-not-a-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_collapse_exits_with_code_3() {
    // Deep in the supercritical regime (N far above the critical mass at
    // c = 1) the relativistic iteration collapses and the solver reports it.
    let dir = scratch("collapse");
    let out = run(&[
        "solve-rel",
        "--n",
        "400",
        "--r-max",
        "20",
        "--c",
        "1",
        "--N",
        "10",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn ambiguous_kernel_radius_exits_with_code_4() {
    // First pass: read off the near-zero translation eigenvalue at this
    // resolution from the spectrum artifacts.
    let dir = scratch("ambiguous-probe");
    let out = run(&[
        "spectrum",
        "--n",
        "300",
        "--r-max",
        "30",
        "--l-max",
        "1",
        "--k",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    check_manifest(&dir, "spectrum");
    let rep = read_json(&dir.join("spectrum_l1.json"));
    let e0 = rep["eigenvalues"][0].as_f64().unwrap();
    assert!(e0.abs() < 1e-2, "translation mode eigenvalue {e0:.3e}");

    // Second pass: a counting radius right on that eigenvalue must refuse to
    // count rather than guess.
    let dir2 = scratch("ambiguous-count");
    let out = run(&[
        "spectrum",
        "--n",
        "300",
        "--r-max",
        "30",
        "--l-max",
        "1",
        "--k",
        "1",
        "--kernel-radius",
        &format!("{:e}", e0.abs()),
        "--out",
        dir2.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn spectrum_artifacts_cover_every_sector() {
    let dir = scratch("spectrum-files");
    let out = run(&[
        "spectrum",
        "--n",
        "300",
        "--r-max",
        "30",
        "--l-max",
        "2",
        "--k",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    check_manifest(&dir, "spectrum");
    for l in 0..=2 {
        assert!(dir.join(format!("spectrum_l{l}.json")).exists());
        assert!(dir.join(format!("eigenfunctions_l{l}.csv")).exists());
    }
    assert!(dir.join("spectrum_lminus.json").exists());
    let summary = read_json(&dir.join("spectrum_summary.json"));
    assert_eq!(summary["kernel_count"], 3);
    assert!(summary["lminus_e0"].as_f64().unwrap().abs() < 1e-2);
}

#[test]
fn shoot_reports_threshold_and_profile() {
    let dir = scratch("shoot");
    let out = run(&[
        "shoot",
        "--n",
        "600",
        "--r-max",
        "25",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    check_manifest(&dir, "shoot");
    let shot = read_json(&dir.join("shooting.json"));
    let lo = shot["v0_lo"].as_f64().unwrap();
    let hi = shot["v0_hi"].as_f64().unwrap();
    let star = shot["v0_star"].as_f64().unwrap();
    assert!(lo < star && star < hi);
    assert!(shot["lambda_star"].as_f64().unwrap() > 0.0);
    assert!(shot["trace"].as_array().unwrap().len() >= 2);
    assert!(dir.join("shoot_profile.csv").exists());
}

#[test]
fn sweep_and_critical_mass_artifacts() {
    let dir = scratch("sweep");
    let out = run(&[
        "--jobs",
        "2",
        "sweep-c",
        "--n",
        "600",
        "--r-max",
        "30",
        "--c-list",
        "5,10",
        "--tol",
        "1e-9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    check_manifest(&dir, "sweep-c");
    let sweep = read_json(&dir.join("sweep.json"));
    let records = sweep.as_array().unwrap();
    assert_eq!(records.len(), 2);
    for rec in records {
        assert!(rec["gap"].as_f64().unwrap() < 0.0);
        assert!(rec["bound_flags"]["herbst_ok"].as_bool().unwrap());
    }
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("c,mu,gap,h1_dist,energy,residual,herbst_ok,delta1_ok,delta2_ok"));
    let summary = read_json(&dir.join("sweep_summary.json"));
    assert_eq!(summary["n_converged"], 2);

    let dir = scratch("critical");
    let out = run(&[
        "critical-mass",
        "--n",
        "300",
        "--r-max",
        "40",
        "--tol",
        "1e-8",
        "--bracket-tol",
        "0.25",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let est = read_json(&dir.join("critical_mass.json"));
    let n_lo = est["N_lo"].as_f64().unwrap();
    let n_hi = est["N_hi"].as_f64().unwrap();
    assert!(n_lo > 4.0 / std::f64::consts::PI);
    assert!(n_hi > n_lo);
}

#[test]
fn validate_suite_passes_end_to_end() {
    let dir = scratch("validate");
    let out = run(&[
        "validate",
        "--n",
        "500",
        "--r-max",
        "30",
        "--tol",
        "1e-10",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    check_manifest(&dir, "validate");
    let rows = read_json(&dir.join("validate.json"));
    for row in rows.as_array().unwrap() {
        assert_eq!(
            row["pass"],
            true,
            "invariant check failed: {} ({})",
            row["name"],
            row["detail"]
        );
    }
    let table = fs::read_to_string(dir.join("validate.txt")).unwrap();
    assert!(table.contains("0 failed"));
}
