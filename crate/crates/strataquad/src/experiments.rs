//! N-schedules, convergence-rate fits, and scaled-error tables.
//!
//! A [`Schedule`] runs the exact-MSE engine over an increasing list of
//! target sample counts; [`fit_loglog`] extracts rates and constants from
//! the resulting table. Fits describe the sampled range only — the scaled
//! mode refuses to call a still-trending column converged.

use crate::asymptotics;
use crate::designs::{self, Allocation, CrossRegularDesign, DensitySpec};
use crate::error::{Error, Result};
use crate::models::FieldModel;
use crate::mse::{exact_mse, MseOptions, MseReport};

/// How the intercomponent allocation is chosen at each scheduled N.
#[derive(Debug, Clone)]
pub enum AllocationRule {
    /// n_j = round(N^{1/d}) for every component.
    Uniform,
    /// Rate-optimal allocation from per-component constants v_j.
    Optimal { v: Vec<f64> },
    /// Fixed per-component counts (N targets are ignored).
    Explicit { n: Vec<u32> },
}

/// An experiment schedule: model, densities, allocation rule, N targets.
#[derive(Clone)]
pub struct Schedule {
    pub model: FieldModel,
    pub densities: Vec<DensitySpec>,
    pub allocation: AllocationRule,
    pub n_targets: Vec<u64>,
    pub mse: MseOptions,
    /// Run schedule entries concurrently (each entry then single-threaded
    /// inside) instead of sequentially with internal parallelism. Output is
    /// identical either way.
    pub concurrent_entries: bool,
}

/// One schedule row.
#[derive(Debug, Clone)]
pub struct ScheduleRow {
    pub n_target: u64,
    pub n_actual: u64,
    pub e2: f64,
    pub error_estimate: f64,
    pub order: usize,
    pub seconds: f64,
}

/// The full schedule output.
#[derive(Debug, Clone)]
pub struct ScheduleTable {
    pub rows: Vec<ScheduleRow>,
}

impl ScheduleTable {
    pub fn n(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n_actual as f64).collect()
    }

    pub fn e2(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e2).collect()
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_targets.len() < 4 {
            return Err(Error::invalid("a schedule needs at least 4 targets"));
        }
        if self.n_targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("N targets must be strictly increasing"));
        }
        Ok(())
    }

    fn design_for(&self, n_target: u64) -> Result<CrossRegularDesign> {
        let dec = self.model.decomposition();
        let alloc = match &self.allocation {
            AllocationRule::Uniform => designs::allocate_uniform(n_target, dec)?,
            AllocationRule::Optimal { v } => {
                designs::allocate_optimal(v, self.model.smoothness(), dec, n_target)?
            }
            AllocationRule::Explicit { n } => Allocation::from_components(dec, n.clone())?,
        };
        designs::build_design(dec, &self.densities, &alloc)
    }
}

/// Runs exact_mse once per scheduled N. Rows come back in schedule order;
/// targets that collapse onto an already-realized N are dropped.
pub fn run_schedule(schedule: &Schedule) -> Result<ScheduleTable> {
    schedule.validate()?;
    let mut entries: Vec<(u64, CrossRegularDesign)> = Vec::new();
    for &n_target in &schedule.n_targets {
        let design = schedule.design_for(n_target)?;
        if entries.iter().any(|(_, d)| d.allocation().n_actual() == design.allocation().n_actual())
        {
            continue;
        }
        entries.push((n_target, design));
    }

    let reports: Vec<MseReport> = if schedule.concurrent_entries && entries.len() > 1 {
        // entries claim work through a shared counter; each runs the engine
        // single-threaded, results land in their slot
        let opts = MseOptions { threads: 1, ..schedule.mse.clone() };
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<MseReport>>>> =
            entries.iter().map(|_| std::sync::Mutex::new(None)).collect();
        let workers = std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
            .min(entries.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= entries.len() {
                        break;
                    }
                    let rep = exact_mse(&schedule.model, &entries[i].1, &opts);
                    *slots[i].lock().unwrap() = Some(rep);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("worker stored a result"))
            .collect::<Result<Vec<_>>>()?
    } else {
        entries
            .iter()
            .map(|(_, design)| exact_mse(&schedule.model, design, &schedule.mse))
            .collect::<Result<Vec<_>>>()?
    };

    let rows = entries
        .iter()
        .zip(reports)
        .map(|(&(n_target, _), rep)| ScheduleRow {
            n_target,
            n_actual: rep.n_actual,
            e2: rep.e2,
            error_estimate: rep.error_estimate,
            order: rep.order,
            seconds: rep.seconds,
        })
        .collect();
    Ok(ScheduleTable { rows })
}

/// The fit family applied to a schedule table.
#[derive(Debug, Clone, PartialEq)]
pub enum FitModel {
    /// e² ≈ C·N^{-p}: least squares on (log N, log e²).
    SinglePower,
    /// e² ≈ C₁N^{-p₁} + C₂N^{-p₂} with fixed exponents: relative linear
    /// least squares with a nonnegativity clamp.
    TwoPower { p1: f64, p2: f64 },
    /// Scaled column N^p·e²: reports the sequence and its last value, and
    /// flags whether the column is still trending.
    Scaled { p: f64 },
}

/// Fit output; `window` records the (burn_in, len) rows actually used.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: FitModel,
    /// SinglePower: [slope, C]. TwoPower: [C1, C2]. Scaled: [last value].
    pub estimates: Vec<f64>,
    /// Relative residual norm over the fitted window.
    pub residual: f64,
    pub window: (usize, usize),
    /// TwoPower: a coefficient was clamped at zero.
    pub degenerate: bool,
    /// Scaled: the column still moves by more than 1% per step, so the last
    /// value must not be read as the limit.
    pub still_trending: bool,
    /// Scaled: the full column, for plots and reports.
    pub scaled_column: Option<Vec<(f64, f64)>>,
}

/// Fits a convergence model to (N, e²) data, skipping `burn_in` leading rows.
pub fn fit_loglog(table: &ScheduleTable, model: FitModel, burn_in: usize) -> Result<FitReport> {
    let n_all = table.n();
    let e_all = table.e2();
    if burn_in + 4 > n_all.len() && !matches!(model, FitModel::Scaled { .. }) {
        return Err(Error::invalid("need at least 4 points after burn-in"));
    }
    let ns = &n_all[burn_in.min(n_all.len().saturating_sub(1))..];
    let es = &e_all[burn_in.min(n_all.len().saturating_sub(1))..];
    if es.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Domain("convergence fits need strictly positive errors".into()));
    }
    let window = (burn_in, ns.len());
    match model {
        FitModel::SinglePower => {
            let lx: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
            let ly: Vec<f64> = es.iter().map(|v| v.ln()).collect();
            let n = lx.len() as f64;
            let mx = lx.iter().sum::<f64>() / n;
            let my = ly.iter().sum::<f64>() / n;
            let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
            let slope = sxy / sxx;
            let c = (my - slope * mx).exp();
            let residual = rel_residual(ns, es, |n| c * n.powf(slope));
            if !(c > 0.0) {
                return Err(Error::Domain("degenerate single-power fit".into()));
            }
            Ok(FitReport {
                model,
                estimates: vec![slope, c],
                residual,
                window,
                degenerate: false,
                still_trending: false,
                scaled_column: None,
            })
        }
        FitModel::TwoPower { p1, p2 } => {
            // relative least squares keeps both decades in play; the system
            // stays linear in (C1, C2)
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (n, y) in ns.iter().zip(es) {
                let f1 = n.powf(-p1) / y;
                let f2 = n.powf(-p2) / y;
                a11 += f1 * f1;
                a12 += f1 * f2;
                a22 += f2 * f2;
                b1 += f1;
                b2 += f2;
            }
            let det = a11 * a22 - a12 * a12;
            if det.abs() < 1e-300 {
                return Err(Error::Domain("two-power basis is numerically collinear".into()));
            }
            let mut c1 = (a22 * b1 - a12 * b2) / det;
            let mut c2 = (a11 * b2 - a12 * b1) / det;
            let mut degenerate = false;
            if c1 < 0.0 {
              degenerate = true;
                c1 = 0.0;
                c2 = b2 / a22;
            } else if c2 < 0.0 {
                degenerate = true;
                c2 = 0.0;
                c1 = b1 / a11;
            }
            let residual = rel_residual(ns, es, |n| c1 * n.powf(-p1) + c2 * n.powf(-p2));
            Ok(FitReport {
                model,
                estimates: vec![c1, c2],
                residual,
                window,
                degenerate,
                still_trending: false,
                scaled_column: None,
            })
        }
        FitModel::Scaled { p } => {
            let column: Vec<(f64, f64)> =
                ns.iter().zip(es).map(|(&n, &e)| (n, n.powf(p) * e)).collect();
            if column.is_empty() {
                return Err(Error::invalid("empty table"));
            }
            let last = column.last().unwrap().1;
            // flagged when the column moved by >1% in the last step, or when
            // the steps decay slowly enough that the projected geometric tail
            // exceeds 1% of the last value
            let still_trending = if column.len() >= 2 {
                let prev = column[column.len() - 2].1;
                let step1 = last - prev;
                let mut trending = step1.abs() > 0.01 * last.abs().max(f64::MIN_POSITIVE);
                if !trending && column.len() >= 3 {
                    let step2 = prev - column[column.len() - 3].1;
                    if step1 * step2 > 0.0 {
                        let r = (step1 / step2).abs();
                        if r > 0.3 {
                            let tail = step1.abs() * r / (1.0 - r.min(0.95));
                            trending = tail > 0.01 * last.abs().max(f64::MIN_POSITIVE);
                        }
                    }
                }
                trending
            } else {
                true
            };
            Ok(FitReport {
                model,
                estimates: vec![last],
                residual: 0.0,
                window,
                degenerate: false,
                still_trending,
                scaled_column: Some(column),
            })
        }
    }
}

fn rel_residual(ns: &[f64], es: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    for (&n, &e) in ns.iter().zip(es) {
        let r = (f(n) - e) / e;
        s += r * r;
    }
    (s / ns.len() as f64).sqrt()
}

/// Elementwise (N, N^p e²) transform of a table.
pub fn scaled_error(table: &ScheduleTable, p: f64) -> Vec<(f64, f64)> {
    table
        .rows
        .iter()
        .map(|r| (r.n_actual as f64, (r.n_actual as f64).powf(p) * r.e2))
        .collect()
}

/// Convenience: the first-order MSE prediction for every row of a schedule,
/// used to print fitted and analytic constants side by side.
pub fn predicted_table(
    schedule: &Schedule,
    v: &[f64],
) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    for &n_target in &schedule.n_targets {
        let dec = schedule.model.decomposition();
        let alloc = match &schedule.allocation {
            AllocationRule::Uniform => designs::allocate_uniform(n_target, dec)?,
            AllocationRule::Optimal { v: vv } => {
                designs::allocate_optimal(vv, schedule.model.smoothness(), dec, n_target)?
            }
            AllocationRule::Explicit { n } => Allocation::from_components(dec, n.clone())?,
        };
        out.push((
            alloc.n_actual(),
            asymptotics::predicted_mse(v, schedule.model.smoothness(), &alloc),
        ));
    }
    Ok(out)
}
