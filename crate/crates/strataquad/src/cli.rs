//! Config-driven command-line front end.
//!
//! Subcommands: `mse`, `asymptotics`, `allocate`, `density-opt`,
//! `experiment`, `diagnose-singularity`. Experiments are described by TOML
//! configs (one bundled per reproduced table under `configs/`); every output
//! is a plain CSV or a standalone SVG, and runs never mutate their config.
//!
//! Exit codes: 0 ok, 2 config error, 3 budget exceeded, 4 domain error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, QFunction, VOptions};
use crate::designs::{self, DensitySpec};
use crate::error::{Error, Result};
use crate::experiments::{
    fit_loglog, run_schedule, AllocationRule, FitModel, FitReport, Schedule, ScheduleTable,
};
use crate::models::{
    self, Decomposition, FieldModel, HolderData, LocalStationarity, ModulationMetadata,
    SmoothnessSpec,
};
use crate::mse::{projected_evals, MseOptions};
use crate::report;

/// `[model]` block: a model name plus the union of per-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// fbf: component widths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<usize>>,
    /// fbf: per-component exponents; exp/amplitude_modulated: one entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// exp / amplitude_modulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// warped_fbm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// amplitude_modulated: "inv_shift" (a = 1/(t+shift)) or
    /// "norm_power" (a = scale·‖t‖^exponent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// One spec per component: `uniform`, `power:<theta>`,
    /// `quantile:<square|cube|sqrt>`, `optimal`.
    pub densities: Vec<String>,
    /// `uniform` (default), `optimal`, or `explicit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<String>,
    /// explicit allocation: per-component counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_targets: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<bool>,
    /// Run schedule entries concurrently, one engine thread each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concurrent_entries: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// `single_power`, `two_power`, `scaled`.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub design: DesignConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fit: Vec<FitConfig>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Builds the field model described by a `[model]` block.
pub fn build_model(cfg: &ModelConfig) -> Result<FieldModel> {
    let wrap = |e: Error| cfg_err(format!("model: {e}"));
    match cfg.name.as_str() {
        "fbf" => {
            let l = cfg.l.clone().ok_or_else(|| cfg_err("model fbf: missing key `l`"))?;
            let alpha =
                cfg.alpha.clone().ok_or_else(|| cfg_err("model fbf: missing key `alpha`"))?;
            let dec = Decomposition::new(l).map_err(wrap)?;
            let smooth = SmoothnessSpec::new(alpha, &dec).map_err(wrap)?;
            models::make_fbf(dec, smooth).map_err(wrap)
        }
        "exp" => {
            let alpha = one_alpha(cfg)?;
            let dim = cfg.dim.ok_or_else(|| cfg_err("model exp: missing key `dim`"))?;
            models::make_exp_field(alpha, dim).map_err(wrap)
        }
        "amplitude_modulated" => build_modulated(cfg).map_err(wrap),
        "warped_fbm" => {
            let lambda =
                cfg.lambda.ok_or_else(|| cfg_err("model warped_fbm: missing key `lambda`"))?;
            let beta = cfg.beta.ok_or_else(|| cfg_err("model warped_fbm: missing key `beta`"))?;
            let amplitude = cfg
                .amplitude
                .ok_or_else(|| cfg_err("model warped_fbm: missing key `amplitude`"))?;
            models::make_warped_fbm(lambda, beta, amplitude).map_err(wrap)
        }
        other => Err(cfg_err(format!(
            "unknown model `{other}` (expected fbf, exp, amplitude_modulated, warped_fbm)"
        ))),
    }
}

fn one_alpha(cfg: &ModelConfig) -> Result<f64> {
    match cfg.alpha.as_deref() {
        Some([a]) => Ok(*a),
        _ => Err(cfg_err(format!("model {}: `alpha` must hold exactly one exponent", cfg.name))),
    }
}

fn build_modulated(cfg: &ModelConfig) -> Result<FieldModel> {
    let alpha = one_alpha(cfg)?;
    let dim = cfg.dim.ok_or_else(|| cfg_err("model amplitude_modulated: missing key `dim`"))?;
    let base = models::make_exp_field(alpha, dim)?;
    let kind = cfg
        .amplitude_kind
        .clone()
        .ok_or_else(|| cfg_err("model amplitude_modulated: missing key `amplitude_kind`"))?;
    match kind.as_str() {
        "inv_shift" => {
            let shift =
                cfg.shift.ok_or_else(|| cfg_err("amplitude inv_shift: missing key `shift`"))?;
            if !(shift > 0.0) {
                return Err(cfg_err("amplitude inv_shift: shift must be positive"));
            }
            if dim != 1 {
                return Err(cfg_err("amplitude inv_shift is one-dimensional"));
            }
            // c(t) = base_c · a(t)^2 = 2/(t+shift)^2
            let c = LocalStationarity::general(Arc::new(move |t: &[f64]| {
                2.0 / ((t[0] + shift) * (t[0] + shift))
            }));
            models::make_amplitude_modulated(
                &base,
                Arc::new(move |t: &[f64]| 1.0 / (t[0] + shift)),
                ModulationMetadata {
                    local_stationarity: Some(vec![c]),
                    ..Default::default()
                },
            )
        }
        "norm_power" => {
            let exponent = cfg
                .exponent
                .ok_or_else(|| cfg_err("amplitude norm_power: missing key `exponent`"))?;
            let scale = cfg.scale.unwrap_or(1.0);
            if !(exponent > 0.0) || !(scale > 0.0) {
                return Err(cfg_err("amplitude norm_power: exponent and scale must be positive"));
            }
            // a(t) = scale·‖t‖^exponent: locally stationary away from the
            // origin with c(t) = 2·scale²·‖t‖^{2·exponent}; the squared
            // field obeys the verbatim Hölder metadata constant 3·scale².
            let beta = 2.0 * exponent;
            let c = LocalStationarity::radial_power(2.0 * scale * scale, beta);
            models::make_amplitude_modulated(
                &base,
                Arc::new(move |t: &[f64]| {
                    let r2: f64 = t.iter().map(|x| x * x).sum();
                    scale * r2.powf(exponent / 2.0)
                }),
                ModulationMetadata {
                    local_stationarity: Some(vec![c]),
                    holder: Some(HolderData { beta, constant: 3.0 * scale * scale }),
                    singular_at_origin: true,
                },
            )
        }
        other => Err(cfg_err(format!("unknown amplitude kind `{other}`"))),
    }
}

/// Resolves one density string; `optimal` needs the model's c metadata and a
/// one-dimensional model.
pub fn build_density(spec: &str, model: &FieldModel) -> Result<DensitySpec> {
    if spec == "uniform" {
        return Ok(DensitySpec::uniform());
    }
    if let Some(theta) = spec.strip_prefix("power:") {
        let theta: f64 =
            theta.parse().map_err(|_| cfg_err(format!("bad power exponent `{theta}`")))?;
        return DensitySpec::power(theta).map_err(|e| cfg_err(e.to_string()));
    }
    if let Some(name) = spec.strip_prefix("quantile:") {
        let g: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match name {
            "square" => Arc::new(|s: f64| s * s),
            "cube" => Arc::new(|s: f64| s * s * s),
            "sqrt" => Arc::new(|s: f64| s.sqrt()),
            other => return Err(cfg_err(format!("unknown quantile `{other}`"))),
        };
        return DensitySpec::quantile(g).map_err(|e| cfg_err(e.to_string()));
    }
    if spec == "optimal" {
        let (spec, _) = resolve_optimal_density(model)?;
        return Ok(spec);
    }
    Err(cfg_err(format!(
        "unknown density `{spec}` (expected uniform, power:<theta>, quantile:<name>, optimal)"
    )))
}

/// h_opt for a one-dimensional model from its local-stationarity metadata;
/// returns the density and the attained constant v_opt.
pub fn resolve_optimal_density(model: &FieldModel) -> Result<(DensitySpec, f64)> {
    if model.dim() != 1 {
        return Err(Error::Domain(
            "optimal density resolution is implemented for one-dimensional models".into(),
        ));
    }
    let c = model
        .local_stationarity()
        .ok_or_else(|| Error::Domain("model carries no local-stationarity metadata".into()))?[0]
        .clone();
    let q = match c.power() {
        Some(p) => QFunction::Power(p),
        None => QFunction::General(Arc::new(move |t: f64| c.eval(&[t]))),
    };
    asymptotics::optimal_density_1d(&q, model.smoothness().component(0))
}

/// Everything a command needs, resolved from one config plus CLI overrides.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: FieldModel,
    pub densities: Vec<DensitySpec>,
    pub allocation: AllocationRule,
    pub mse: MseOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// CLI overrides applied on top of the config.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub order: Option<usize>,
    pub per_stratum: bool,
    pub dry_run: bool,
    pub budget: Option<u64>,
}

pub fn resolve(config: ExperimentConfig, ov: &Overrides) -> Result<Resolved> {
    let model = build_model(&config.model)?;
    let dec = model.decomposition();
    if config.design.densities.len() != dec.components() {
        return Err(cfg_err(format!(
            "design: expected {} densities, got {}",
            dec.components(),
            config.design.densities.len()
        )));
    }
    let densities: Vec<DensitySpec> = config
        .design
        .densities
        .iter()
        .map(|s| build_density(s, &model))
        .collect::<Result<_>>()?;
    let allocation = match config.design.allocation.as_deref().unwrap_or("uniform") {
        "uniform" => AllocationRule::Uniform,
        "optimal" => {
            let report = asymptotics::analyze(&model, &densities, &VOptions::default())?;
            AllocationRule::Optimal { v: report.v }
        }
        "explicit" => {
            let n = config
                .design
                .n
                .clone()
                .ok_or_else(|| cfg_err("design: explicit allocation needs key `n`"))?;
            AllocationRule::Explicit { n }
        }
        other => return Err(cfg_err(format!("unknown allocation rule `{other}`"))),
    };
    let budget = std::env::var("STRATAQUAD_BUDGET")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .or(ov.budget)
        .or(config.run.budget)
        .unwrap_or_else(|| MseOptions::default().budget);
    let mse = MseOptions {
        order: ov.order.or(config.run.order),
        threads: ov.threads.or(config.run.threads).unwrap_or(0),
        budget,
        per_stratum: ov.per_stratum || config.run.per_stratum.unwrap_or(false),
        ..Default::default()
    };
    let out_dir = ov
        .out
        .clone()
        .or_else(|| config.run.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Resolved {
        seed: ov.seed.or(config.run.seed).unwrap_or(0),
        model,
        densities,
        allocation,
        mse,
        out_dir,
        config,
    })
}

impl Resolved {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            model: self.model.clone(),
            densities: self.densities.clone(),
            allocation: self.allocation.clone(),
            n_targets: self.config.run.n_targets.clone(),
            mse: self.mse.clone(),
            concurrent_entries: self.config.run.concurrent_entries.unwrap_or(false),
        }
    }

    pub fn fits(&self) -> Result<Vec<(FitModel, usize)>> {
        let mut out = Vec::new();
        for f in &self.config.fit {
            let burn_in = f.burn_in.unwrap_or(0);
            let model = match f.model.as_str() {
                "single_power" => FitModel::SinglePower,
                "two_power" => match f.exponents.as_deref() {
                    Some([p1, p2]) => FitModel::TwoPower { p1: *p1, p2: *p2 },
                    _ => return Err(cfg_err("fit two_power: needs `exponents = [p1, p2]`")),
                },
                "scaled" => FitModel::Scaled {
                    p: f.p.ok_or_else(|| cfg_err("fit scaled: needs key `p`"))?,
                },
                other => return Err(cfg_err(format!("unknown fit model `{other}`"))),
            };
            out.push((model, burn_in));
        }
        Ok(out)
    }

    fn projected_total(&self) -> Result<u64> {
        let schedule = self.schedule();
        schedule.validate()?;
        let mut total = 0u64;
        for &n_target in &schedule.n_targets {
            let dec = self.model.decomposition();
            let alloc = match &self.allocation {
                AllocationRule::Uniform => designs::allocate_uniform(n_target, dec)?,
                AllocationRule::Optimal { v } => {
                    designs::allocate_optimal(v, self.model.smoothness(), dec, n_target)?
                }
                AllocationRule::Explicit { n } => {
                    designs::Allocation::from_components(dec, n.clone())?
                }
            };
            let design = designs::build_design(dec, &self.densities, &alloc)?;
            total += projected_evals(&self.model, &design, &self.mse);
        }
        Ok(total)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// `mse` subcommand: one exact_mse call per scheduled N → schedule.csv.
pub fn cmd_mse(res: &Resolved, dry_run: bool) -> Result<Vec<PathBuf>> {
    if dry_run {
        println!("projected kernel evaluations: {}", res.projected_total()?);
        return Ok(vec![]);
    }
    eprintln!("projected kernel evaluations: {}", res.projected_total()?);
    ensure_dir(&res.out_dir)?;
    let schedule = res.schedule();
    schedule.validate()?;
    let mut outputs = Vec::new();
    // run with optional per-stratum dumps
    let mut table = ScheduleTable { rows: Vec::new() };
    for &n_target in &schedule.n_targets {
        let dec = res.model.decomposition();
        let alloc = match &res.allocation {
            AllocationRule::Uniform => designs::allocate_uniform(n_target, dec)?,
            AllocationRule::Optimal { v } => {
                designs::allocate_optimal(v, res.model.smoothness(), dec, n_target)?
            }
            AllocationRule::Explicit { n } => designs::Allocation::from_components(dec, n.clone())?,
        };
        if table.rows.iter().any(|r| r.n_actual == alloc.n_actual()) {
            continue;
        }
        let design = designs::build_design(dec, &res.densities, &alloc)?;
        let rep = crate::mse::exact_mse(&res.model, &design, &res.mse)?;
        eprintln!(
            "N={} e2={} err_est={} ({:.2}s)",
            rep.n_actual,
            report::fmt_f64(rep.e2),
            report::fmt_f64(rep.error_estimate),
            rep.seconds
        );
        if let Some(per) = &rep.per_stratum {
            let path = res.out_dir.join(format!("per_stratum_{}.csv", rep.n_actual));
            report::write_per_stratum_csv(&path, &design, per)?;
            outputs.push(path);
        }
        table.rows.push(crate::experiments::ScheduleRow {
            n_target,
            n_actual: rep.n_actual,
            e2: rep.e2,
            error_estimate: rep.error_estimate,
            order: rep.order,
            seconds: rep.seconds,
        });
    }
    let path = res.out_dir.join("schedule.csv");
    report::write_schedule_csv(&path, &table)?;
    outputs.push(path);
    Ok(outputs)
}

/// `asymptotics` subcommand: v_j, ρ, κ, optimal allocations and (in one
/// dimension) the optimal density constant → asymptotics.csv.
pub fn cmd_asymptotics(res: &Resolved) -> Result<Vec<PathBuf>> {
    ensure_dir(&res.out_dir)?;
    let report_v = asymptotics::analyze(&res.model, &res.densities, &VOptions::default())?;
    let mut rows: Vec<(String, f64)> = Vec::new();
    for (j, v) in report_v.v.iter().enumerate() {
        rows.push((format!("v_{}", j + 1), *v));
        rows.push((format!("v_{}_err_est", j + 1), report_v.v_error_estimates[j]));
    }
    rows.push(("rho".into(), report_v.rho));
    rows.push(("kappa".into(), report_v.kappa));
    rows.push((
        "optimal_rate_constant".into(),
        res.model.decomposition().components() as f64 * report_v.kappa.powf(report_v.rho),
    ));
    if res.model.dim() == 1 {
        if let Ok((_, v_opt)) = resolve_optimal_density(&res.model) {
            rows.push(("v_opt".into(), v_opt));
        }
    }
    let alpha = res.model.smoothness();
    let dec = res.model.decomposition();
    for &n in &res.config.run.n_targets {
        let uni = designs::allocate_uniform(n, dec)?;
        rows.push((format!("predicted_mse_uniform_N{n}"), asymptotics::predicted_mse(&report_v.v, alpha, &uni)));
        let opt = designs::allocate_optimal(&report_v.v, alpha, dec, n)?;
        for (j, nj) in opt.per_component().iter().enumerate() {
            rows.push((format!("n_opt_{}_N{n}", j + 1), *nj as f64));
        }
        rows.push((format!("N_actual_opt_N{n}"), opt.n_actual() as f64));
        rows.push((format!("predicted_mse_optimal_N{n}"), asymptotics::predicted_mse(&report_v.v, alpha, &opt)));
    }
    let path = res.out_dir.join("asymptotics.csv");
    report::write_kv_csv(&path, &rows)?;
    Ok(vec![path])
}

/// `allocate` subcommand: uniform and rate-optimal allocations per target.
pub fn cmd_allocate(res: &Resolved) -> Result<Vec<PathBuf>> {
    ensure_dir(&res.out_dir)?;
    let dec = res.model.decomposition();
    let alpha = res.model.smoothness();
    let v = match &res.allocation {
        AllocationRule::Optimal { v } => Some(v.clone()),
        _ => asymptotics::analyze(&res.model, &res.densities, &VOptions::default())
            .ok()
            .map(|r| r.v),
    };
    let mut out = String::from("N_target,rule,n_components,N_actual\n");
    for &n in &res.config.run.n_targets {
        let uni = designs::allocate_uniform(n, dec)?;
        out.push_str(&format!(
            "{n},uniform,{},{}\n",
            join_u32(uni.per_component()),
            uni.n_actual()
        ));
        if let Some(v) = &v {
            let opt = designs::allocate_optimal(v, alpha, dec, n)?;
            out.push_str(&format!(
                "{n},optimal,{},{}\n",
                join_u32(opt.per_component()),
                opt.n_actual()
            ));
        }
    }
    let path = res.out_dir.join("allocate.csv");
    std::fs::write(&path, out)?;
    Ok(vec![path])
}

fn join_u32(xs: &[u32]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// `density-opt` subcommand: h_opt profile and constants for d=1 models.
pub fn cmd_density_opt(res: &Resolved) -> Result<Vec<PathBuf>> {
    ensure_dir(&res.out_dir)?;
    let (spec, v_opt) = resolve_optimal_density(&res.model)?;
    let v_uni =
        asymptotics::v_constant(&res.model, &[DensitySpec::uniform()], 0, &VOptions::default());
    let mut out = String::from("t,h_opt\n");
    for i in 0..512 {
        let t = (i as f64 + 0.5) / 512.0;
        out.push_str(&format!("{},{}\n", report::fmt_f64(t), report::fmt_f64(spec.h(t).unwrap())));
    }
    let density_path = res.out_dir.join("density.csv");
    std::fs::write(&density_path, out)?;
    let mut rows = vec![("v_opt".to_string(), v_opt)];
    if let Ok(vu) = v_uni {
        rows.push(("v_uniform".into(), vu.value));
    }
    let const_path = res.out_dir.join("density_constants.csv");
    report::write_kv_csv(&const_path, &rows)?;
    Ok(vec![density_path, const_path])
}

/// `diagnose-singularity` subcommand: condition-(C′) ratio trend and the
/// shifting-condition diagnostic for the first component's design.
pub fn cmd_diagnose(res: &Resolved) -> Result<Vec<PathBuf>> {
    ensure_dir(&res.out_dir)?;
    let alpha = res.model.smoothness().component(0);
    let beta = res.model.holder().map(|h| h.beta).unwrap_or(alpha);
    let density = res.densities[0].clone();
    let g = move |s: f64| density.quantile_fn(s).unwrap_or(f64::NAN);
    let c0 = res.model.local_stationarity().map(|c| c[0].clone());
    let rep = match c0.and_then(|c| c.power()) {
        Some(p) => asymptotics::singularity_diagnostics(
            &g,
            alpha,
            beta,
            res.model.dim(),
            Some(&move |t: f64| p.coef * t.powf(p.exponent)),
        ),
        None => asymptotics::singularity_diagnostics(&g, alpha, beta, res.model.dim(), None),
    };
    let mut out = String::from("s,ratio\n");
    for (s, r) in &rep.ratio_rows {
        out.push_str(&format!("{},{}\n", report::fmt_f64(*s), report::fmt_f64(*r)));
    }
    let path = res.out_dir.join("diagnostics.csv");
    std::fs::write(&path, out)?;
    println!(
        "critical exponent (1+alpha)/(2+beta) = {:.6}; trend: {:?}{}",
        rep.critical_exponent,
        rep.trend,
        rep.shifting_sup
            .map(|s| format!("; shifting sup = {s:.6}"))
            .unwrap_or_default()
    );
    Ok(vec![path])
}

/// `experiment` subcommand: schedule + fits + scaled columns + SVG + summary.
pub fn cmd_experiment(res: &Resolved, dry_run: bool) -> Result<Vec<PathBuf>> {
    if dry_run {
        println!("projected kernel evaluations: {}", res.projected_total()?);
        return Ok(vec![]);
    }
    eprintln!("projected kernel evaluations: {}", res.projected_total()?);
    ensure_dir(&res.out_dir)?;
    let table = run_schedule(&res.schedule())?;
    let mut outputs = Vec::new();
    let schedule_path = res.out_dir.join("schedule.csv");
    report::write_schedule_csv(&schedule_path, &table)?;
    outputs.push(schedule_path);

    let mut fits: Vec<FitReport> = Vec::new();
    for (model, burn_in) in res.fits()? {
        fits.push(fit_loglog(&table, model, burn_in)?);
    }
    if !fits.is_empty() {
        let fit_path = res.out_dir.join("fit.csv");
        report::write_fit_csv(&fit_path, &fits)?;
        outputs.push(fit_path);
    }
    let n_scaled = fits.iter().filter(|f| f.scaled_column.is_some()).count();
    let mut scaled_seen = 0usize;
    for f in &fits {
        if let Some(col) = &f.scaled_column {
            let p = match f.model {
                FitModel::Scaled { p } => p,
                _ => unreachable!(),
            };
            let path = res.out_dir.join(if n_scaled == 1 {
                "scaled.csv".to_string()
            } else {
                format!("scaled_{scaled_seen}.csv")
            });
            scaled_seen += 1;
            report::write_scaled_csv(&path, col, p)?;
            outputs.push(path);
        }
    }

    // analytic prediction alongside, when the theory applies
    let analytic = asymptotics::analyze(&res.model, &res.densities, &VOptions::default()).ok();
    let mut series = vec![report::Series {
        label: "exact e2",
        points: table.rows.iter().map(|r| (r.n_actual as f64, r.e2)).collect(),
    }];
    let predicted = analytic.as_ref().and_then(|a| {
        crate::experiments::predicted_table(&res.schedule(), &a.v).ok()
    });
    if let Some(pred) = &predicted {
        series.push(report::Series {
            label: "predicted asymptotic e2",
            points: pred.iter().map(|&(n, e)| (n as f64, e)).collect(),
        });
    }
    let svg_path = res.out_dir.join("plot.svg");
    report::write_loglog_svg(&svg_path, "stratified MC quadrature MSE", &series)?;
    outputs.push(svg_path);

    // human-readable summary: fitted vs analytic, windows, timings
    let mut summary = String::new();
    summary.push_str(&format!(
        "model: {}\ndensities: {:?}\nallocation: {}\n",
        res.config.model.name,
        res.config.design.densities,
        res.config.design.allocation.as_deref().unwrap_or("uniform"),
    ));
    summary.push_str(&format!(
        "rows: {} (N = {} .. {})\n",
        table.rows.len(),
        table.rows.first().map(|r| r.n_actual).unwrap_or(0),
        table.rows.last().map(|r| r.n_actual).unwrap_or(0)
    ));
    let total_secs: f64 = table.rows.iter().map(|r| r.seconds).sum();
    summary.push_str(&format!("engine time: {total_secs:.2}s\n"));
    if let Some(a) = &analytic {
        summary.push_str(&format!(
            "analytic: v = {:?}, rho = {:.6}, kappa = {:.6e}, k*kappa^rho = {:.6}\n",
            a.v,
            a.rho,
            a.kappa,
            res.model.decomposition().components() as f64 * a.kappa.powf(a.rho)
        ));
    }
    if res.model.dim() == 1 {
        if let Ok((_, v_opt)) = resolve_optimal_density(&res.model) {
            summary.push_str(&format!("optimal-density constant v_opt = {v_opt:.6}\n"));
        }
    }
    for f in &fits {
        match &f.model {
            FitModel::SinglePower => summary.push_str(&format!(
                "fit single-power over rows {}..{}: slope = {:.4}, C = {:.6} (residual {:.2e})\n",
                f.window.0,
                f.window.0 + f.window.1,
                f.estimates[0],
                f.estimates[1],
                f.residual
            )),
            FitModel::TwoPower { p1, p2 } => summary.push_str(&format!(
                "fit two-power (N^-{p1:.4}, N^-{p2:.4}): C1 = {:.6}, C2 = {:.6}{}\n",
                f.estimates[0],
                f.estimates[1],
                if f.degenerate { " [degenerate]" } else { "" }
            )),
            FitModel::Scaled { p } => summary.push_str(&format!(
                "scaled column N^{p:.2}·e2: last = {:.6}{}\n",
                f.estimates[0],
                if f.still_trending {
                    " [still trending: not a converged constant]"
                } else {
                    ""
                }
            )),
        }
    }
    let summary_path = res.out_dir.join("summary.txt");
    std::fs::write(&summary_path, summary)?;
    outputs.push(summary_path);
    Ok(outputs)
}

const USAGE: &str = "usage: strataquad <mse|asymptotics|allocate|density-opt|experiment|diagnose-singularity> \
 [CONFIG] [--config PATH] [--out DIR] [--seed U64] [--threads K] [--order P] [--dry-run] [--per-stratum]";

/// Parses arguments and dispatches; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                eprintln!("{USAGE}");
            }
            e.exit_code()
        }
    }
}

fn run_inner(args: &[String]) -> Result<()> {
    let mut it = args.iter();
    let cmd = it.next().ok_or_else(|| cfg_err(USAGE))?.clone();
    let mut config_path: Option<PathBuf> = None;
    let mut ov = Overrides::default();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(
                    it.next().ok_or_else(|| cfg_err("--config needs a path"))?,
                ));
            }
            "--out" => {
                ov.out =
                    Some(PathBuf::from(it.next().ok_or_else(|| cfg_err("--out needs a dir"))?));
            }
            "--seed" => {
                ov.seed = Some(parse_flag(it.next(), "--seed")?);
            }
            "--threads" => {
                ov.threads = Some(parse_flag(it.next(), "--threads")?);
            }
            "--order" => {
                ov.order = Some(parse_flag(it.next(), "--order")?);
            }
            "--dry-run" => ov.dry_run = true,
            "--per-stratum" => ov.per_stratum = true,
            other if !other.starts_with('-') && config_path.is_none() => {
                config_path = Some(PathBuf::from(other));
            }
            other => return Err(cfg_err(format!("unknown argument `{other}`"))),
        }
    }
    let path = config_path.ok_or_else(|| cfg_err("no config given"))?;
    let config = ExperimentConfig::from_path(&path)?;
    let res = resolve(config, &ov)?;
    let outputs = match cmd.as_str() {
        "mse" => cmd_mse(&res, ov.dry_run)?,
        "asymptotics" => cmd_asymptotics(&res)?,
        "allocate" => cmd_allocate(&res)?,
        "density-opt" => cmd_density_opt(&res)?,
        "experiment" => cmd_experiment(&res, ov.dry_run)?,
        "diagnose-singularity" => cmd_diagnose(&res)?,
        other => return Err(cfg_err(format!("unknown subcommand `{other}`"))),
    };
    for p in outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn parse_flag<T: std::str::FromStr>(v: Option<&String>, flag: &str) -> Result<T> {
    v.ok_or_else(|| cfg_err(format!("{flag} needs a value")))?
        .parse()
        .map_err(|_| cfg_err(format!("bad value for {flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX4: &str = r#"
[model]
name = "amplitude_modulated"
alpha = [1.0]
dim = 1
amplitude_kind = "inv_shift"
shift = 0.1

[design]
densities = ["uniform"]

[run]
n_targets = [32, 64, 128, 256]

[[fit]]
model = "single_power"
burn_in = 1
"#;

    #[test]
    fn parse_and_resolve() {
        let config = ExperimentConfig::from_toml_str(EX4).unwrap();
        let res = resolve(config, &Overrides::default()).unwrap();
        assert_eq!(res.model.dim(), 1);
        assert_eq!(res.densities.len(), 1);
        assert!(matches!(res.allocation, AllocationRule::Uniform));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EX4.replace("[design]", "[design]\nfrobnicate = 3");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("frobnicate"), "{msg}");
    }

    #[test]
    fn roundtrip_serialization() {
        let config = ExperimentConfig::from_toml_str(EX4).unwrap();
        let text = config.to_toml().unwrap();
        let again = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn optimal_density_resolution_warped() {
        let config = ExperimentConfig::from_toml_str(
            r#"
[model]
name = "warped_fbm"
lambda = 0.1
beta = 1.5
amplitude = 5.0

[design]
densities = ["optimal"]

[run]
n_targets = [32, 64, 128, 256]
"#,
        )
        .unwrap();
        let res = resolve(config, &Overrides::default()).unwrap();
        // theta = -1.35 * 2/7
        let g = res.densities[0].quantile_fn(0.5).unwrap();
        let theta = -1.35 * 2.0 / 7.0;
        approx::assert_relative_eq!(
            g,
            0.5f64.powf(1.0 / (1.0 + theta)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bad_model_name_is_config_error() {
        let bad = EX4.replace("amplitude_modulated", "gaussian_blob");
        let config = ExperimentConfig::from_toml_str(&bad).unwrap();
        match resolve(config, &Overrides::default()) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }
}
