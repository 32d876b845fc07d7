//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Every tolerance is pinned in code. The table reproductions drive the
//! bundled configs through the same pipeline the CLI uses.

use std::path::{Path, PathBuf};
use std::time::Instant;

use strataquad::asymptotics::{self, VOptions};
use strataquad::cli::{resolve, ExperimentConfig, Overrides};
use strataquad::designs::{allocate_uniform, build_design, Allocation, DensitySpec};
use strataquad::experiments::{fit_loglog, run_schedule, FitModel, ScheduleTable};
use strataquad::models::{
    make_fbf, Decomposition, FieldModel, SmoothnessSpec,
};
use strataquad::mse::{exact_mse, simulate_mse, MseOptions, SimOptions};

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(&config_dir().join(name)).expect("bundled config parses")
}

fn run_config(name: &str) -> (ScheduleTable, Vec<(FitModel, usize)>) {
    let res = resolve(load(name), &Overrides::default()).expect("config resolves");
    let table = run_schedule(&res.schedule()).expect("schedule runs");
    let fits = res.fits().expect("fit block resolves");
    (table, fits)
}

fn check(ok: bool, line: &str) {
    println!("{}: {line}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{line}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

/// Criterion 1: Example-4 constants, closed-form checkable, over N=2^5..2^12.
#[test]
fn criterion_1_example4_constants() {
    let start = Instant::now();
    // closed-form antiderivative oracles
    let v_uni_oracle = (1.0 / 6.0) * 2.0 * (10.0 - 1.0 / 1.1);
    let z = 2.0f64.powf(1.0 / 3.0) * 3.0 * (1.1f64.powf(1.0 / 3.0) - 0.1f64.powf(1.0 / 3.0));
    let v_opt_oracle = z.powi(3) / 6.0;

    let res = resolve(load("ex4_uniform.toml"), &Overrides::default()).unwrap();
    let v_uni = asymptotics::v_constant(&res.model, &res.densities, 0, &VOptions::default())
        .unwrap()
        .value;
    check(
        rel(v_uni, v_uni_oracle) < 1e-6,
        &format!("criterion 1a: analytic v uniform {v_uni:.8} vs oracle {v_uni_oracle:.8} (1e-6)"),
    );
    let (_, v_opt) = strataquad::cli::resolve_optimal_density(&res.model).unwrap();
    check(
        rel(v_opt, v_opt_oracle) < 1e-6,
        &format!("criterion 1b: analytic v optimal {v_opt:.8} vs oracle {v_opt_oracle:.8} (1e-6)"),
    );

    for (name, analytic) in [("ex4_uniform.toml", v_uni_oracle), ("ex4_opt.toml", v_opt_oracle)] {
        let (table, fits) = run_config(name);
        for (model, burn_in) in fits {
            let fit = fit_loglog(&table, model.clone(), burn_in).unwrap();
            match model {
                FitModel::SinglePower => check(
                    (fit.estimates[0] + 2.0).abs() <= 0.03,
                    &format!("criterion 1 {name}: fitted slope {:.4} within -2.00 +- 0.03", fit.estimates[0]),
                ),
                FitModel::Scaled { .. } => check(
                    rel(fit.estimates[0], analytic) <= 0.03,
                    &format!(
                        "criterion 1 {name}: fitted constant {:.5} within 3% of analytic {analytic:.5}",
                        fit.estimates[0]
                    ),
                ),
                _ => {}
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, &format!("criterion 1 runtime {secs:.1}s < 60s"));
}

/// Criterion 2: the d=3 two-term decay and the rate-optimal allocation.
#[test]
fn criterion_2_example3_two_term_decay() {
    let start = Instant::now();
    let b_oracle = asymptotics::b_tilde(1.5, 2, 1 << 21).unwrap().value;

    let (table, _) = run_config("ex3_uniform.toml");
    let fit = fit_loglog(&table, FitModel::TwoPower { p1: 7.0 / 6.0, p2: 1.5 }, 0).unwrap();
    check(
        rel(fit.estimates[0], 4.0 / 15.0) <= 0.05,
        &format!("criterion 2a: C1 {:.5} within 5% of 4/15 = {:.5}", fit.estimates[0], 4.0 / 15.0),
    );
    check(
        rel(fit.estimates[1], b_oracle) <= 0.07,
        &format!("criterion 2b: C2 {:.5} within 7% of b-oracle {b_oracle:.5}", fit.estimates[1]),
    );

    let res = resolve(load("ex3_optimal.toml"), &Overrides::default()).unwrap();
    let analytic = asymptotics::analyze(&res.model, &res.densities, &VOptions::default()).unwrap();
    let c3 = 2.0 * analytic.kappa.powf(analytic.rho);
    let table = run_schedule(&res.schedule()).unwrap();
    let fit = fit_loglog(&table, FitModel::SinglePower, 0).unwrap();
    check(
        (fit.estimates[0] + 1.30).abs() <= 0.03,
        &format!("criterion 2c: optimal-allocation slope {:.4} within -1.30 +- 0.03", fit.estimates[0]),
    );
    check(
        rel(fit.estimates[1], c3) <= 0.07,
        &format!("criterion 2d: constant {:.5} within 7% of 2*kappa^0.3 = {c3:.5}", fit.estimates[1]),
    );
    let secs = start.elapsed().as_secs_f64();
    check(secs < 600.0, &format!("criterion 2 runtime {secs:.1}s < 10min"));
}

/// Criterion 3: Example-6 singularity recovery.
#[test]
fn criterion_3_example6_singularity_recovery() {
    // lambda = 9/10 uniform: slope and converged scaled constant
    let (table, _) = run_config("ex6_l09_uniform.toml");
    let slope = fit_loglog(&table, FitModel::SinglePower, 0).unwrap().estimates[0];
    check(
        (slope + 2.50).abs() <= 0.05,
        &format!("criterion 3a: lambda=9/10 slope {slope:.4} within -2.50 +- 0.05"),
    );
    let scaled = fit_loglog(&table, FitModel::Scaled { p: 2.5 }, 0).unwrap();
    let analytic_09 = (4.0 / 35.0) * 25.0 * 0.9f64.powf(1.5) / 0.85;
    check(
        rel(scaled.estimates[0], 2.87) <= 0.05,
        &format!(
            "criterion 3b: lambda=9/10 scaled constant {:.4} within 5% of 2.87 (library analytic {analytic_09:.4})",
            scaled.estimates[0]
        ),
    );

    // lambda = 1/10 uniform: degraded rate N^-2.15
    let (table, _) = run_config("ex6_l01_uniform.toml");
    let slope = fit_loglog(&table, FitModel::SinglePower, 0).unwrap().estimates[0];
    check(
        (slope + 2.15).abs() <= 0.05,
        &format!("criterion 3c: lambda=1/10 uniform slope {slope:.4} within -2.15 +- 0.05"),
    );

    // lambda = 1/10 with h_opt: rate restored, constant near 0.4976
    let (table, _) = run_config("ex6_l01_opt.toml");
    let slope = fit_loglog(&table, FitModel::SinglePower, 0).unwrap().estimates[0];
    check(
        (slope + 2.50).abs() <= 0.05,
        &format!("criterion 3d: lambda=1/10 h_opt slope {slope:.4} within -2.50 +- 0.05"),
    );
    let scaled = fit_loglog(&table, FitModel::Scaled { p: 2.5 }, 0).unwrap();
    check(
        rel(scaled.estimates[0], 0.4976) <= 0.10,
        &format!("criterion 3e: lambda=1/10 h_opt constant {:.4} within 10% of 0.4976", scaled.estimates[0]),
    );

    // lambda = 1/2: slope passes; the scaled column is monotone increasing
    // toward the analytic 4.04 and must NOT be read as converged — any
    // finite-window fit of the constant (~3.7 here) is an artifact
    let (table, _) = run_config("ex6_l05_uniform.toml");
    let slope = fit_loglog(&table, FitModel::SinglePower, 0).unwrap().estimates[0];
    check(
        (slope + 2.50).abs() <= 0.05,
        &format!("criterion 3f: lambda=1/2 slope {slope:.4} within -2.50 +- 0.05"),
    );
    let scaled = fit_loglog(&table, FitModel::Scaled { p: 2.5 }, 0).unwrap();
    let column = scaled.scaled_column.as_ref().unwrap();
    let analytic_05 = (4.0 / 35.0) * 25.0 * 0.5f64.powf(1.5) / 0.25;
    let monotone = column.windows(2).all(|w| w[1].1 > w[0].1);
    let below = column.iter().all(|&(_, v)| v < analytic_05);
    check(
        monotone && below && scaled.still_trending,
        &format!(
            "criterion 3g: lambda=1/2 scaled column monotone increasing toward {analytic_05:.4} \
             (last {:.4}), flagged still-trending; no finite-window constant reported as a limit",
            scaled.estimates[0]
        ),
    );
}

/// Criterion 4: Example-5 rates for alpha in {1/2, 1, 3/2} in d = 2.
#[test]
fn criterion_4_example5_rates() {
    for (name, alpha) in [
        ("ex5_a05.toml", 0.5f64),
        ("ex5_a10.toml", 1.0),
        ("ex5_a15.toml", 1.5),
    ] {
        let (table, _) = run_config(name);
        let slope = fit_loglog(&table, FitModel::SinglePower, 0).unwrap().estimates[0];
        let want = -(1.0 + alpha / 2.0);
        check(
            (slope - want).abs() <= 0.06,
            &format!("criterion 4: {name} slope {slope:.4} within {want:.2} +- 0.06"),
        );
    }
}

fn fbf_model(l: Vec<usize>, alpha: Vec<f64>) -> FieldModel {
    let dec = Decomposition::new(l).unwrap();
    let smooth = SmoothnessSpec::new(alpha, &dec).unwrap();
    make_fbf(dec, smooth).unwrap()
}

fn uniform_fbf_design(model: &FieldModel, n: &[u32]) -> strataquad::designs::CrossRegularDesign {
    let dec = model.decomposition();
    let alloc = Allocation::from_components(dec, n.to_vec()).unwrap();
    build_design(dec, &vec![DensitySpec::uniform(); dec.components()], &alloc).unwrap()
}

/// Criterion 5: exactness oracle — engine vs (1/N)·Σ b̃·n^{-α} on fBf models.
#[test]
fn criterion_5_exactness_oracle() {
    // d = 1: closed form a_beta * N^{-(1+beta)}
    for beta in [0.5f64, 1.0, 1.5] {
        let model = fbf_model(vec![1], vec![beta]);
        for n in [4u32, 8] {
            let design = uniform_fbf_design(&model, &[n]);
            let opts = MseOptions { order: Some(12), ..Default::default() };
            let rep = exact_mse(&model, &design, &opts).unwrap();
            let want = asymptotics::a_const(beta).unwrap() * (n as f64).powf(-(1.0 + beta));
            check(
                rel(rep.e2, want) < 1e-6,
                &format!("criterion 5: d=1 beta={beta} N={n}: e2 {:.3e} vs a_beta N^-(1+beta) {want:.3e} (1e-6)", rep.e2),
            );
        }
    }
    // general instances: (l, alpha, n, order)
    type Case = (Vec<usize>, Vec<f64>, Vec<u32>, usize);
    let cases: Vec<Case> = vec![
        (vec![2], vec![1.5], vec![8], 12),
        (vec![2], vec![0.8], vec![6], 12),
        (vec![1, 1], vec![1.2, 0.8], vec![8, 8], 12),
        (vec![2, 1], vec![1.5, 0.5], vec![8, 8], 6),
        (vec![3], vec![1.0], vec![4], 8),
        (vec![1, 1, 1], vec![0.5, 1.0, 1.5], vec![3, 4, 5], 8),
    ];
    for (l, alpha, n, order) in cases {
        let model = fbf_model(l.clone(), alpha.clone());
        let design = uniform_fbf_design(&model, &n);
        let opts = MseOptions { order: Some(order), ..Default::default() };
        let rep = exact_mse(&model, &design, &opts).unwrap();
        let mut want = 0.0;
        for (j, &lj) in l.iter().enumerate() {
            let b = asymptotics::b_tilde(alpha[j], lj, 1 << 21).unwrap().value;
            want += b * (n[j] as f64).powf(-alpha[j]);
        }
        want /= design.n_strata() as f64;
        check(
            rel(rep.e2, want) < 1e-6,
            &format!("criterion 5: l={l:?} alpha={alpha:?} n={n:?}: e2 {:.6e} vs formula {want:.6e} (1e-6)", rep.e2),
        );
    }
}

/// Criterion 6: simulation oracle agrees with the exact engine within 3 SE.
#[test]
fn criterion_6_simulation_cross_check() {
    let start = Instant::now();
    // the refinement lattice is the oracle's own ground truth; its bias was
    // measured per instance and sits well under half a standard error here
    let exp_field = strataquad::models::make_exp_field(1.0, 1).unwrap();
    let cases: Vec<(&str, FieldModel, Vec<u32>, usize)> = vec![
        ("bm d=1 N=4", fbf_model(vec![1], vec![1.0]), vec![4], 256),
        ("exp d=1 N=8", exp_field, vec![8], 256),
        ("fbf beta=1/2 d=1 N=6", fbf_model(vec![1], vec![0.5]), vec![6], 256),
        ("fbf d=2 l=(2) alpha=1 n=2", fbf_model(vec![2], vec![1.0]), vec![2], 16),
        ("fbf d=2 l=(1,1) n=4", fbf_model(vec![1, 1], vec![1.5, 1.2]), vec![4, 4], 24),
    ];
    for (label, model, n, refinement) in cases {
        let design = uniform_fbf_design(&model, &n);
        let exact = exact_mse(&model, &design, &MseOptions::default()).unwrap().e2;
        let opts = SimOptions {
            replications: 10_000,
            refinement,
            seed: 2024,
            ..Default::default()
        };
        let sim = simulate_mse(&model, &design, &opts).unwrap();
        let dev = (sim.estimate - exact).abs() / sim.std_error;
        check(
            dev <= 3.0,
            &format!(
                "criterion 6: {label}: sim {:.5e} vs exact {exact:.5e} ({dev:.2} SE)",
                sim.estimate
            ),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 120.0, &format!("criterion 6 runtime {secs:.1}s < 2min"));
}

/// Criterion 7: the Hölder bound dominates the exact MSE, with equality for
/// Brownian motion under the uniform regular design.
#[test]
fn criterion_7_holder_bound_dominance() {
    // equality case
    let bm = fbf_model(vec![1], vec![1.0]);
    let alloc = allocate_uniform(16, bm.decomposition()).unwrap();
    let design = build_design(bm.decomposition(), &[DensitySpec::uniform()], &alloc).unwrap();
    let exact = exact_mse(&bm, &design, &MseOptions::default()).unwrap().e2;
    let bound = asymptotics::holder_upper_bound(
        1.0,
        &[DensitySpec::uniform()],
        bm.smoothness(),
        bm.decomposition(),
        &alloc,
    )
    .unwrap();
    check(
        rel(bound, exact) <= 1e-9,
        &format!("criterion 7a: BM equality bound {bound:.10e} vs exact {exact:.10e} (1e-9)"),
    );

    // dominance on assorted fBf instances (Hölder constant C = 1 since
    // d_X = ||t-v||_alpha exactly)
    let cases: Vec<(Vec<usize>, Vec<f64>, Vec<u32>)> = vec![
        (vec![1], vec![0.5], vec![7]),
        (vec![1], vec![1.5], vec![5]),
        (vec![2], vec![1.0], vec![4]),
        (vec![1, 1], vec![1.2, 0.8], vec![4, 6]),
        (vec![2, 1], vec![1.5, 0.5], vec![4, 8]),
    ];
    for (l, alpha, n) in cases {
        let model = fbf_model(l.clone(), alpha.clone());
        let dec = model.decomposition();
        let alloc = Allocation::from_components(dec, n.clone()).unwrap();
        let densities = vec![DensitySpec::uniform(); dec.components()];
        let design = build_design(dec, &densities, &alloc).unwrap();
        let exact = exact_mse(&model, &design, &MseOptions::default()).unwrap().e2;
        let bound =
            asymptotics::holder_upper_bound(1.0, &densities, model.smoothness(), dec, &alloc)
                .unwrap();
        check(
            exact <= bound * (1.0 + 1e-9),
            &format!("criterion 7: l={l:?} alpha={alpha:?} n={n:?}: exact {exact:.4e} <= bound {bound:.4e}"),
        );
    }

    // a non-uniform regular density keeps dominance
    let model = fbf_model(vec![1], vec![1.0]);
    let z = 3.0 * (1.1f64.powf(1.0 / 3.0) - 0.1f64.powf(1.0 / 3.0));
    let h = DensitySpec::explicit(std::sync::Arc::new(move |t: f64| {
        (t + 0.1f64).powf(-2.0 / 3.0) / z
    }))
    .unwrap();
    let alloc = Allocation::from_components(model.decomposition(), vec![12]).unwrap();
    let design = build_design(model.decomposition(), std::slice::from_ref(&h), &alloc).unwrap();
    let exact = exact_mse(&model, &design, &MseOptions::default()).unwrap().e2;
    let bound =
        asymptotics::holder_upper_bound(1.0, &[h], model.smoothness(), model.decomposition(), &alloc)
            .unwrap();
    check(
        exact <= bound * (1.0 + 1e-9),
        &format!("criterion 7b: explicit density: exact {exact:.4e} <= bound {bound:.4e}"),
    );
}

/// Criterion 8: repeated runs of the binary are bit-identical for 1 and 4
/// threads.
#[test]
fn criterion_8_determinism() {
    let bin = env!("CARGO_BIN_EXE_strataquad");
    let base = std::env::temp_dir().join(format!("strataquad_det_{}", std::process::id()));
    let config = config_dir().join("ex4_uniform.toml");
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (i, threads) in ["1", "4", "1", "4"].iter().enumerate() {
        let out = base.join(format!("run{i}"));
        let status = std::process::Command::new(bin)
            .arg("experiment")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg("42")
            .arg("--threads")
            .arg(threads)
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| {
                let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
                ext == "csv" || ext == "svg"
            })
            .map(|p| {
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    for run in 1..outputs.len() {
        assert_eq!(outputs[0].len(), outputs[run].len());
        for (a, b) in outputs[0].iter().zip(&outputs[run]) {
            check(
                a.0 == b.0 && a.1 == b.1,
                &format!("criterion 8: {} identical across run 0 and run {run}", a.0),
            );
        }
    }
    let _ = std::fs::remove_dir_all(&base);
}
