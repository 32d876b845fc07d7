//! End-to-end tests of the binary: exit-code contract, dry runs, output
//! files, and the bundled configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_strataquad")
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("strataquad_cli_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn binary")
}

#[test]
fn no_args_is_config_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_two() {
    let cfg = config_dir().join("ex4_uniform.toml");
    let out = run(&["frobnicate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_names_offending_key() {
    let dir = tmp("malformed");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.toml");
    let body = std::fs::read_to_string(config_dir().join("ex4_uniform.toml")).unwrap();
    std::fs::write(&cfg, body.replace("[design]", "[design]\nwibble = 1")).unwrap();
    let out = run(&["mse", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("wibble"), "stderr should name the key: {stderr}");
}

#[test]
fn budget_exceeded_exits_three() {
    let cfg = config_dir().join("ex4_uniform.toml");
    let out_dir = tmp("budget");
    let out = Command::new(bin())
        .args(["mse", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .env("STRATAQUAD_BUDGET", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn singular_regular_only_path_exits_four() {
    // asymptotics on the lambda=1/10 uniform design: the asymptotic constant
    // does not exist
    let cfg = config_dir().join("ex6_l01_uniform.toml");
    let out_dir = tmp("singular");
    let out = run(&[
        "asymptotics",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dry_run_prints_projection() {
    let cfg = config_dir().join("ex4_uniform.toml");
    let out = run(&["mse", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("projected kernel evaluations"), "{stdout}");
}

#[test]
fn mse_writes_schedule_and_per_stratum() {
    let dir = tmp("mse_out");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("small.toml");
    std::fs::write(
        &cfg_path,
        r#"
[model]
name = "fbf"
l = [1]
alpha = [1.0]

[design]
densities = ["uniform"]

[run]
n_targets = [4, 8, 16, 32]
"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run(&[
        "mse",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--per-stratum",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let schedule = std::fs::read_to_string(out_dir.join("schedule.csv")).unwrap();
    assert!(schedule.starts_with("N,e2,err_est,order\n"));
    assert_eq!(schedule.lines().count(), 5);
    // Brownian closed form in the first row
    let row: Vec<&str> = schedule.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "4");
    let e2: f64 = row[1].parse().unwrap();
    assert!((e2 - 1.0 / 96.0).abs() < 1e-12);
    // per-stratum dump exists and sums to the total
    let per = std::fs::read_to_string(out_dir.join("per_stratum_4.csv")).unwrap();
    let sum: f64 = per.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((sum - e2).abs() < 1e-15);
}

#[test]
fn asymptotics_outputs_example3_constants() {
    let cfg = config_dir().join("ex3_uniform.toml");
    let out_dir = tmp("asy3");
    let out = run(&["asymptotics", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(out_dir.join("asymptotics.csv")).unwrap();
    let get = |key: &str| -> f64 {
        body.lines()
            .find(|l| l.starts_with(&format!("{key},")))
            .unwrap_or_else(|| panic!("missing {key} in {body}"))
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("v_1") - 0.2045633359).abs() < 1e-6);
    assert!((get("v_2") - 4.0 / 15.0).abs() < 1e-9);
    assert!((get("rho") - 0.3).abs() < 1e-12);
    assert!((get("optimal_rate_constant") - 0.48).abs() < 1e-2);
}

#[test]
fn asymptotics_outputs_example4_constants() {
    let cfg = config_dir().join("ex4_uniform.toml");
    let out_dir = tmp("asy4");
    let out = run(&["asymptotics", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(out_dir.join("asymptotics.csv")).unwrap();
    let v1: f64 = body
        .lines()
        .find(|l| l.starts_with("v_1,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let v_opt: f64 = body
        .lines()
        .find(|l| l.starts_with("v_opt,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((v1 - 3.0303030303).abs() < 1e-6, "v1 = {v1}");
    assert!((v_opt - 1.650310).abs() < 1e-4, "v_opt = {v_opt}");
}

#[test]
fn allocate_echoes_uniform_for_single_component() {
    let dir = tmp("alloc");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("sym.toml");
    std::fs::write(
        &cfg_path,
        r#"
[model]
name = "fbf"
l = [2]
alpha = [1.0]

[design]
densities = ["uniform"]

[run]
n_targets = [16, 64, 256, 1024]
"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = run(&["allocate", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(out_dir.join("allocate.csv")).unwrap();
    for line in body.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "optimal" {
            let uniform_line = body
                .lines()
                .find(|l| l.starts_with(&format!("{},uniform", cols[0])))
                .unwrap();
            assert_eq!(uniform_line.split(',').nth(2), Some(cols[2]));
        }
    }
}

#[test]
fn density_opt_writes_profile() {
    let cfg = config_dir().join("ex6_l01_opt.toml");
    let out_dir = tmp("dopt");
    let out = run(&["density-opt", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let consts = std::fs::read_to_string(out_dir.join("density_constants.csv")).unwrap();
    let v_opt: f64 = consts
        .lines()
        .find(|l| l.starts_with("v_opt,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((v_opt - 0.4973195).abs() < 1e-5);
    let density = std::fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert!(density.lines().count() > 500);
}

#[test]
fn diagnose_singularity_reports_trend() {
    let cfg = config_dir().join("ex6_l01_uniform.toml");
    let out_dir = tmp("diag");
    let out = run(&[
        "diagnose-singularity",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // uniform G(s)=s fails the decay condition for these exponents
    assert!(stdout.contains("Increasing"), "{stdout}");
    assert!(out_dir.join("diagnostics.csv").exists());
}

#[test]
fn experiment_outputs_full_artifact_set() {
    let cfg = config_dir().join("ex4_opt.toml");
    let out_dir = tmp("exp4");
    let out = run(&[
        "experiment",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["schedule.csv", "fit.csv", "scaled.csv", "plot.svg", "summary.txt"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("v_opt"), "{summary}");
}

#[test]
fn bundled_configs_roundtrip() {
    use strataquad::cli::ExperimentConfig;
    let mut count = 0;
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        count += 1;
        let config = ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{} fails to parse: {e}", path.display()));
        let text = config.to_toml().unwrap();
        let again = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, again, "{} does not round-trip", path.display());
    }
    assert_eq!(count, 11, "expected all bundled configs");
}

#[test]
fn config_file_not_mutated() {
    let cfg = config_dir().join("ex4_uniform.toml");
    let before = std::fs::read(&cfg).unwrap();
    let out_dir = tmp("nomut");
    let _ = run(&["experiment", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(before, std::fs::read(&cfg).unwrap());
}
