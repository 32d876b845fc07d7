//! Exact mean squared error of the stratified Monte Carlo quadrature.
//!
//! The MSE of I_N(X) = Σ_i X(η_i)|D_i| with one uniform point per stratum is
//! e_N² = ½ Σ_i ∬_{D_i×D_i} d_X(t,v) dt dv — a deterministic functional of
//! the incremental variance. [`exact_mse`] evaluates each stratum with the
//! diagonal-split tensor Gauss-Legendre rule and reduces the per-stratum
//! terms with compensated summation in lexicographic order, so serial and
//! parallel runs agree bitwise. [`simulate_mse`] is the independent
//! Monte-Carlo oracle: it actually draws the field and the η points.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::designs::CrossRegularDesign;
use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::models::FieldModel;
use crate::quadrature::{StratumRule, DEFAULT_GRADING};

/// Exact-MSE engine options.
#[derive(Debug, Clone)]
pub struct MseOptions {
    /// Gauss-Legendre order per dimension; `None` picks the default for the
    /// model/design (8 for d ≤ 2, 6 for d = 3, 4 above; raised to 12 in d=1
    /// for rough kernels or origin singularities).
    pub order: Option<usize>,
    /// Worker threads; 0 uses the machine parallelism.
    pub threads: usize,
    /// Kernel-evaluation cap for one call.
    pub budget: u64,
    /// Keep the per-stratum error decomposition.
    pub per_stratum: bool,
    /// Grading exponent of the stratum rule.
    pub grading: i32,
}

impl Default for MseOptions {
    fn default() -> Self {
        Self {
            order: None,
            threads: 0,
            budget: 1_000_000_000,
            per_stratum: false,
            grading: DEFAULT_GRADING,
        }
    }
}

/// Result of one exact-MSE evaluation.
#[derive(Debug, Clone)]
pub struct MseReport {
    pub n_actual: u64,
    /// Total MSE e².
    pub e2: f64,
    /// |e²(order) − e²(order−2)|: the built-in convergence check.
    pub error_estimate: f64,
    pub order: usize,
    /// Per-stratum contributions in lexicographic order, when requested.
    pub per_stratum: Option<Vec<f64>>,
    pub kernel_evals: u64,
    pub seconds: f64,
}

/// Default per-dimension order for a model/design pair.
pub fn default_order(model: &FieldModel, design: &CrossRegularDesign) -> usize {
    let d = design.dim();
    let rough = model
        .smoothness()
        .per_component()
        .iter()
        .any(|&a| a < 1.0);
    match d {
        1 if rough || model.singular_at_origin() => 12,
        1 | 2 => 8,
        3 => 6,
        _ => 4,
    }
}

fn build_rules(
    model: &FieldModel,
    design: &CrossRegularDesign,
    opts: &MseOptions,
) -> (usize, StratumRule, StratumRule, Option<(StratumRule, StratumRule)>) {
    let d = design.dim();
    let order = opts.order.unwrap_or_else(|| default_order(model, design)).max(3);
    let low = (order - 2).max(1);
    let main = StratumRule::new(d, order, opts.grading);
    let check = StratumRule::new(d, low, opts.grading);
    let origin = model.singular_at_origin().then(|| {
        (
            StratumRule::new_origin(d, order, opts.grading),
            StratumRule::new_origin(d, low, opts.grading),
        )
    });
    (order, main, check, origin)
}

/// Kernel evaluations [`exact_mse`] would spend, for budget checks and
/// `--dry-run` projections.
pub fn projected_evals(
    model: &FieldModel,
    design: &CrossRegularDesign,
    opts: &MseOptions,
) -> u64 {
    let (_, main, check, origin) = build_rules(model, design, opts);
    let n = design.n_strata();
    let per = main.nodes_per_stratum() + check.nodes_per_stratum();
    match origin {
        None => n * per,
        Some((om, oc)) => (n - 1) * per + om.nodes_per_stratum() + oc.nodes_per_stratum(),
    }
}

/// Computes e² exactly (up to cubature error) from the incremental variance.
pub fn exact_mse(
    model: &FieldModel,
    design: &CrossRegularDesign,
    opts: &MseOptions,
) -> Result<MseReport> {
    if model.dim() != design.dim() {
        return Err(Error::invalid("model and design dimensions differ"));
    }
    let start = Instant::now();
    let evals = projected_evals(model, design, opts);
    if evals > opts.budget {
        return Err(Error::Budget(format!(
            "projected {evals} kernel evaluations exceed the budget {}; \
             lower the order or N, or raise STRATAQUAD_BUDGET",
            opts.budget
        )));
    }
    let (order, main, check, origin) = build_rules(model, design, opts);
    let n = design.n_strata();
    let n_usize = usize::try_from(n).map_err(|_| Error::invalid("too many strata"))?;

    let mut slots_main = vec![0.0f64; n_usize];
    let mut slots_check = vec![0.0f64; n_usize];

    let threads = if opts.threads == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        opts.threads
    }
    .min(n_usize.max(1));

    let worker = |range: std::ops::Range<usize>,
                  out_main: &mut [f64],
                  out_check: &mut [f64]|
     -> Result<()> {
        let dx = model.incremental_variance_fn().clone();
        let mut f = |t: &[f64], v: &[f64]| dx(t, v);
        for (slot, flat) in range.clone().enumerate() {
            let stratum = design.stratum(flat as u64);
            let is_origin = origin.is_some() && stratum.index.iter().all(|&i| i == 0);
            let (rm, rc) = if is_origin {
                let (om, oc) = origin.as_ref().unwrap();
                (om, oc)
            } else {
                (&main, &check)
            };
            let em = rm.half_double_integral(&stratum.vertex, &stratum.diagonal, &mut f);
            let ec = rc.half_double_integral(&stratum.vertex, &stratum.diagonal, &mut f);
            if !em.is_finite() || !ec.is_finite() {
                return Err(Error::Domain(format!(
                    "non-finite stratum contribution at index {:?}",
                    stratum.index
                )));
            }
            out_main[slot] = em;
            out_check[slot] = ec;
        }
        Ok(())
    };

    if threads <= 1 {
        worker(0..n_usize, &mut slots_main, &mut slots_check)?;
    } else {
        let chunk = n_usize.div_ceil(threads);
        let mut results: Vec<Result<()>> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for ((lo, chunk_main), chunk_check) in (0..n_usize)
                .step_by(chunk)
                .zip(slots_main.chunks_mut(chunk))
                .zip(slots_check.chunks_mut(chunk))
            {
                let hi = (lo + chunk_main.len()).min(n_usize);
                handles.push(scope.spawn(move || worker(lo..hi, chunk_main, chunk_check)));
            }
            for h in handles {
                results.push(h.join().expect("worker panicked"));
            }
        });
        for r in results {
            r?;
        }
    }

    // serial compensated reduction in lexicographic stratum order
    let mut acc = KahanSum::new();
    let mut acc_check = KahanSum::new();
    for i in 0..n_usize {
        acc.add(slots_main[i]);
        acc_check.add(slots_check[i]);
    }
    let e2 = acc.value();
    let error_estimate = (e2 - acc_check.value()).abs();
    Ok(MseReport {
        n_actual: n,
        e2,
        error_estimate,
        order,
        per_stratum: opts.per_stratum.then_some(slots_main),
        kernel_evals: evals,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Options for the simulation oracle.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Independent η point sets drawn per field replication.
    pub eta_samples: usize,
    /// Field replications.
    pub replications: usize,
    /// Per-coordinate midpoint-lattice resolution used as the ground truth
    /// Riemann sum for I(X).
    pub refinement: usize,
    pub seed: u64,
    /// Starting diagonal jitter when the covariance factorization stalls.
    pub jitter: f64,
    /// Dense-factorization point cap.
    pub max_points: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            eta_samples: 1,
            replications: 10_000,
            refinement: 64,
            seed: 0,
            jitter: 1e-10,
            max_points: 3000,
        }
    }
}

/// Simulation estimate of the quadrature MSE.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub estimate: f64,
    pub std_error: f64,
    pub replications: usize,
    pub points: usize,
    pub jitter_used: f64,
}

/// Estimates e² by actually sampling the Gaussian field jointly at a
/// refinement lattice (Riemann ground truth for I(X)) and at fresh uniform
/// η points, replication by replication. Deterministic given the seed.
pub fn simulate_mse(
    model: &FieldModel,
    design: &CrossRegularDesign,
    opts: &SimOptions,
) -> Result<SimReport> {
    if !model.has_covariance() {
        return Err(Error::invalid("simulation requires a model covariance"));
    }
    if model.dim() != design.dim() {
        return Err(Error::invalid("model and design dimensions differ"));
    }
    if opts.replications < 2 {
        return Err(Error::invalid("at least two replications required"));
    }
    if opts.refinement == 0 {
        return Err(Error::invalid("refinement lattice needs at least one cell"));
    }
    let d = design.dim();
    let n_strata = usize::try_from(design.n_strata()).unwrap();
    let n_eta = n_strata * opts.eta_samples;
    let n_lat = opts.refinement.pow(d as u32);
    let total = n_lat + n_eta;
    if total > opts.max_points {
        return Err(Error::Budget(format!(
            "{total} joint points exceed the dense-factorization cap {}",
            opts.max_points
        )));
    }

    // fixed lattice block
    let mut lattice = Vec::with_capacity(n_lat);
    let h = 1.0 / opts.refinement as f64;
    let mut idx = vec![0usize; d];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * h).collect();
        lattice.push(p);
        let mut m = d;
        let mut done = true;
        while m > 0 {
            m -= 1;
            idx[m] += 1;
            if idx[m] < opts.refinement {
                done = false;
                break;
            }
            idx[m] = 0;
        }
        if done {
            break;
        }
    }
    let w_lat = h.powi(d as i32);

    let cov = |a: &[f64], b: &[f64]| model.covariance(a, b).unwrap();

    // Cholesky of the lattice block, with escalating diagonal jitter.
    let mut c_ll = vec![0.0f64; n_lat * n_lat];
    for i in 0..n_lat {
        for j in 0..=i {
            let v = cov(&lattice[i], &lattice[j]);
            c_ll[i * n_lat + j] = v;
            c_ll[j * n_lat + i] = v;
        }
    }
    let (l11, jitter_used) = cholesky_with_jitter(c_ll, n_lat, opts.jitter)?;

    let strata: Vec<_> = design.strata().collect();
    let volumes: Vec<f64> = strata.iter().map(|s| s.volume).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut vals = Vec::with_capacity(opts.replications);
    let mut eta = vec![vec![0.0f64; d]; n_eta];
    let mut cross = vec![0.0f64; n_eta * n_lat]; // rows: eta, cols: lattice
    let mut corner = vec![0.0f64; n_eta * n_eta];
    let mut z = vec![0.0f64; total];

    for _ in 0..opts.replications {
        // draw eta points, one per stratum per set
        for s in 0..opts.eta_samples {
            for (i, st) in strata.iter().enumerate() {
                let p = &mut eta[s * n_strata + i];
                for ((pm, &vm), &rm) in p.iter_mut().zip(&st.vertex).zip(&st.diagonal) {
                    *pm = vm + rm * rng.random::<f64>();
                }
            }
        }
        // cross and corner covariance blocks
        for i in 0..n_eta {
            for j in 0..n_lat {
                cross[i * n_lat + j] = cov(&eta[i], &lattice[j]);
            }
            for j in 0..=i {
                let v = cov(&eta[i], &eta[j]);
                corner[i * n_eta + j] = v;
                corner[j * n_eta + i] = v;
            }
        }
        // L21 = C_eta,lat * L11^{-T}: solve L11 x = row for each eta row
        for i in 0..n_eta {
            let row = &mut cross[i * n_lat..(i + 1) * n_lat];
            forward_substitute(&l11, n_lat, row);
        }
        // Schur complement S = corner - L21 L21^T, factor in place
        let mut schur = vec![0.0f64; n_eta * n_eta];
        for i in 0..n_eta {
            for j in 0..=i {
                let mut dot = 0.0;
                for k in 0..n_lat {
                    dot += cross[i * n_lat + k] * cross[j * n_lat + k];
                }
                let v = corner[i * n_eta + j] - dot;
                schur[i * n_eta + j] = v;
                schur[j * n_eta + i] = v;
            }
        }
        let (l22, _) = cholesky_with_jitter(schur, n_eta, opts.jitter.max(jitter_used))?;

        // joint sample z = L xi
        let xi: Vec<f64> = (0..total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for i in 0..n_lat {
            let mut s = 0.0;
            for k in 0..=i {
                s += l11[i * n_lat + k] * xi[k];
            }
            z[i] = s;
        }
        for i in 0..n_eta {
            let mut s = 0.0;
            for k in 0..n_lat {
                s += cross[i * n_lat + k] * xi[k];
            }
            for k in 0..=i {
                s += l22[i * n_eta + k] * xi[n_lat + k];
            }
            z[n_lat + i] = s;
        }

        // ground truth Riemann sum minus the stratified quadrature
        let mut truth = KahanSum::new();
        for &zi in &z[..n_lat] {
            truth.add(zi);
        }
        let truth = truth.value() * w_lat;
        let mut dsq_mean = 0.0;
        for s in 0..opts.eta_samples {
            let mut quad = KahanSum::new();
            for i in 0..n_strata {
                quad.add(volumes[i] * z[n_lat + s * n_strata + i]);
            }
            let delta = truth - quad.value();
            dsq_mean += delta * delta;
        }
        vals.push(dsq_mean / opts.eta_samples as f64);
    }

    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (vals.len() as f64 - 1.0);
    Ok(SimReport {
        estimate: mean,
        std_error: (var / vals.len() as f64).sqrt(),
        replications: opts.replications,
        points: total,
        jitter_used,
    })
}

/// Lower Cholesky factor with escalating diagonal jitter (x10 per retry up to
/// 1e-6). Returns the factor and the jitter actually applied.
fn cholesky_with_jitter(matrix: Vec<f64>, n: usize, jitter0: f64) -> Result<(Vec<f64>, f64)> {
    let mut jitter = 0.0f64;
    loop {
        match cholesky(&matrix, n, jitter) {
            Some(l) => return Ok((l, jitter)),
            None => {
                jitter = if jitter == 0.0 { jitter0 } else { jitter * 10.0 };
                if jitter > 1e-6 {
                    return Err(Error::Oracle(
                        "covariance matrix numerically indefinite beyond 1e-6 jitter".into(),
                    ));
                }
            }
        }
    }
}

fn cholesky(matrix: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = matrix[i * n + j];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    // allow exactly-zero pivots for degenerate (zero-variance) fields
                    if s >= -1e-14 && matrix[i * n + i] <= 1e-14 {
                        l[i * n + i] = 0.0;
                        continue;
                    }
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                let piv = l[j * n + j];
                l[i * n + j] = if piv > 0.0 { s / piv } else { 0.0 };
            }
        }
    }
    Some(l)
}

/// Solves L x = b in place for lower-triangular L (zero pivots map to zero).
fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        let piv = l[i * n + i];
        b[i] = if piv > 0.0 { s / piv } else { 0.0 };
    }
}
