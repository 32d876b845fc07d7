//! Asymptotic constants and formulas for the stratified MC quadrature.
//!
//! Implements the one-observation constant b_{β,m}(u), the per-component
//! asymptotic constants v_j, the harmonic-mean rate pair (ρ, κ), predicted
//! MSE curves, optimal one-dimensional densities, the Hölder upper bound,
//! and numeric diagnostics for singularity-eliminating designs.

use std::collections::HashMap;
use std::sync::Arc;

use crate::designs::{Allocation, DensitySpec};
use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::models::{Decomposition, FieldModel, RadialPower, SmoothnessSpec};
use crate::quadrature::{dyadic_integral, dyadic_integral_1d};

/// a_β = 1/((1+β)(2+β)): the one-observation constant in one dimension.
pub fn a_const(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::invalid("exponent must lie in (0, 2)"));
    }
    Ok(1.0 / ((1.0 + beta) * (2.0 + beta)))
}

/// A numerically computed constant with its two-resolution error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error_estimate: f64,
    /// Cubature order (per dimension) behind the value; 0 for closed forms.
    pub order: usize,
    pub warning: Option<String>,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate { value, error_estimate: 0.0, order: 0, warning: None }
    }
}

/// b_{β,m}(u) = ½∬_{[0,1]^m×[0,1]^m} ‖u∗(t−v)‖^β dt dv: the MSE of a
/// one-observation stratified quadrature of a scaled fractional Brownian
/// field. For m = 1 this is the closed form u^β·a_β; for m ≥ 2 the double
/// integral is collapsed over the difference variable,
/// b = 2^{m−1}∫_{[0,1]^m} ‖u∗s‖^β Π(1−s_m) ds, and evaluated by
/// corner-graded tensor Gauss-Legendre. `budget` caps the node count.
pub fn b_const(beta: f64, u: &[f64], budget: u64) -> Result<Estimate> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::invalid("exponent must lie in (0, 2)"));
    }
    if u.is_empty() || u.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid("scale vector must be positive"));
    }
    let m = u.len();
    if m == 1 {
        return Ok(Estimate::exact(u[0].powf(beta) * a_const(beta)?));
    }
    let requested = (budget as f64).powf(1.0 / m as f64).floor() as usize;
    let order = requested.clamp(8, 48);
    let warning = (requested < 8).then(|| {
        format!("budget {budget} below the minimum order; using order 8 per dimension")
    });
    let coarse = b_reduced(beta, u, (order * 2 / 3).max(6));
    let value = b_reduced(beta, u, order);
    Ok(Estimate { value, error_estimate: (value - coarse).abs(), order, warning })
}

/// Uniform-scale constant b̃_{β,m} = b_{β,m}(1, ..., 1).
pub fn b_tilde(beta: f64, m: usize, budget: u64) -> Result<Estimate> {
    b_const(beta, &vec![1.0; m], budget)
}

const B_GRADING: i32 = 4;

fn b_reduced(beta: f64, u: &[f64], order: usize) -> f64 {
    let m = u.len();
    let rule = GaussRule::new(order);
    let qf = B_GRADING as f64;
    let mut sv = vec![0.0; order];
    let mut wv = vec![0.0; order];
    for a in 0..order {
        let tau = rule.nodes[a];
        sv[a] = tau.powi(B_GRADING);
        wv[a] = rule.weights[a] * qf * tau.powi(B_GRADING - 1) * (1.0 - sv[a]);
    }
    let mut idx = vec![0usize; m];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        let mut ss = 0.0;
        for j in 0..m {
            w *= wv[idx[j]];
            let us = u[j] * sv[idx[j]];
            ss += us * us;
        }
        total += w * ss.powf(beta / 2.0);
        let mut j = m;
        let mut done = true;
        while j > 0 {
            j -= 1;
            idx[j] += 1;
            if idx[j] < order {
                done = false;
                break;
            }
            idx[j] = 0;
        }
        if done {
            break;
        }
    }
    total * 2.0f64.powi(m as i32 - 1)
}

/// Options for [`v_constant`] and [`analyze`].
#[derive(Debug, Clone)]
pub struct VOptions {
    /// Tensor Gauss-Legendre order per dimension (regular path).
    pub order: usize,
    /// Dyadic shells toward the origin (singular path).
    pub shells: u32,
    /// Node budget handed to inner b evaluations.
    pub b_budget: u64,
    /// Integrate a singular general-form c anyway (caller asserts
    /// integrability, e.g. for singularity-eliminating designs).
    pub allow_singular: bool,
}

impl Default for VOptions {
    fn default() -> Self {
        Self { order: 16, shells: 40, b_budget: 1 << 21, allow_singular: false }
    }
}

/// v_j = ∫ c_j(t)·b_{α_j,l_j}(D_j(t^j))·Π_m h*_m(t_m)^{-1} dt: the
/// per-component asymptotic constant of the quadrature error. Regular
/// densities use a plain tensor rule; models singular at the origin use
/// per-coordinate dyadic refinement provided c_j remains integrable.
pub fn v_constant(
    model: &FieldModel,
    densities: &[DensitySpec],
    j: usize,
    opts: &VOptions,
) -> Result<Estimate> {
    let dec = model.decomposition();
    let d = dec.dim();
    if densities.len() != dec.components() {
        return Err(Error::invalid("one density per component required"));
    }
    if j >= dec.components() {
        return Err(Error::invalid("component index out of range"));
    }
    let c_all = model
        .local_stationarity()
        .ok_or_else(|| Error::Domain("model carries no local-stationarity functions".into()))?;
    let cj = &c_all[j];
    for spec in densities {
        if spec.h(0.5).is_none() {
            return Err(Error::Domain(
                "v-constant needs pointwise densities (quantile-only specs unsupported)".into(),
            ));
        }
    }
    let alpha_j = model.smoothness().component(j);
    let singular = model.singular_at_origin();
    if singular {
        // origin exponent of the full integrand c·b(D)·Π1/h, when the
        // density structure makes it computable: the 1/h weights of a
        // quasi-regular power design can restore integrability (the
        // singularity-eliminating case)
        let effective = match (cj.power(), d) {
            (Some(p), 1) => densities[0]
                .power_exponent()
                .map(|theta| p.exponent - theta * (1.0 + alpha_j)),
            (Some(p), _)
                if densities.iter().all(|s| s.power_exponent() == Some(0.0)) =>
            {
                Some(p.exponent)
            }
            _ => None,
        };
        match effective {
            Some(e) if e <= -(d as f64) => {
                return Err(Error::Domain(format!(
                    "v integrand ~ |t|^{e} near the origin is not integrable over [0,1]^{d}; \
                     the asymptotic constant does not exist for this design"
                )));
            }
            Some(_) => {}
            None if !opts.allow_singular => {
                return Err(Error::Domain(
                    "model is singular at the origin and the integrand's integrability \
                     is unknown; set allow_singular to integrate anyway"
                        .into(),
                ));
            }
            None => {}
        }
    }
    let lj = dec.width(j);
    let span = dec.span(j);
    let a_closed = a_const(alpha_j)?;
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut integrand = |t: &[f64]| -> f64 {
        let mut weight = 1.0;
        for m in 0..d {
            let h = densities[dec.component_of(m)].h(t[m]).unwrap();
            weight /= h;
        }
        let b = if lj == 1 {
            let u = 1.0 / densities[j].h(t[span.start]).unwrap();
            u.powf(alpha_j) * a_closed
        } else {
            let mut u: Vec<f64> = span
                .clone()
                .map(|m| 1.0 / densities[j].h(t[m]).unwrap())
                .collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let key: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
            match memo.get(&key) {
                Some(&b) => b,
                None => {
                    let b = b_const(alpha_j, &u, opts.b_budget)
                        .expect("validated exponent and scales")
                        .value;
                    memo.insert(key, b);
                    b
                }
            }
        };
        cj.eval(t) * b * weight
    };

    let (value, coarse) = if singular {
        let shells = opts.shells;
        let order = if d >= 3 { opts.order.min(8) } else { opts.order };
        (
            dyadic_integral(d, &mut integrand, shells, order),
            dyadic_integral(d, &mut integrand, shells.saturating_sub(6), order.saturating_sub(4).max(4)),
        )
    } else {
        (
            tensor_integral(d, opts.order, &mut integrand),
            tensor_integral(d, opts.order.saturating_sub(4).max(4), &mut integrand),
        )
    };
    Ok(Estimate {
        value,
        error_estimate: (value - coarse).abs(),
        order: opts.order,
        warning: None,
    })
}

fn tensor_integral(dim: usize, order: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let rule = GaussRule::new(order);
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for m in 0..dim {
            w *= rule.weights[idx[m]];
            x[m] = rule.nodes[idx[m]];
        }
        total += w * f(&x);
        let mut m = dim;
        let mut done = true;
        while m > 0 {
            m -= 1;
            idx[m] += 1;
            if idx[m] < order {
                done = false;
                break;
            }
            idx[m] = 0;
        }
        if done {
            return total;
        }
    }
}

/// ρ = (Σ l_j/α_j)^{-1} and κ = Π v_j^{l_j/α_j}. d·ρ is the harmonic mean of
/// the per-coordinate smoothness exponents.
pub fn rho_kappa(alpha: &SmoothnessSpec, dec: &Decomposition, v: &[f64]) -> Result<(f64, f64)> {
    if v.len() != dec.components() {
        return Err(Error::invalid("one v_j per component required"));
    }
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("constants v_j must be positive"));
    }
    let mut inv_rho = 0.0;
    let mut log_kappa = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        let w = dec.width(j) as f64 / alpha.component(j);
        inv_rho += w;
        log_kappa += w * vj.ln();
    }
    let kappa = log_kappa.exp();
    if kappa == 0.0 || !kappa.is_finite() {
        return Err(Error::Domain("kappa under/overflowed in exp-log evaluation".into()));
    }
    Ok((1.0 / inv_rho, kappa))
}

/// Predicted MSE (1/N)Σ_j v_j/n_j^{α_j} for a concrete allocation.
pub fn predicted_mse(v: &[f64], alpha: &SmoothnessSpec, alloc: &Allocation) -> f64 {
    let mut s = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        s += vj * (alloc.per_component()[j] as f64).powf(-alpha.component(j));
    }
    s / alloc.n_actual() as f64
}

/// The asymptotic lower bound k·κ^ρ·N^{-(1+ρ)} attained by the optimal
/// intercomponent allocation.
pub fn optimal_rate_bound(
    v: &[f64],
    alpha: &SmoothnessSpec,
    dec: &Decomposition,
    n: f64,
) -> Result<f64> {
    let (rho, kappa) = rho_kappa(alpha, dec, v)?;
    Ok(dec.components() as f64 * kappa.powf(rho) * n.powf(-(1.0 + rho)))
}

/// Q_j(t) for a one-dimensional component j: the (d−1)-dimensional integral
/// of c_j over the remaining coordinates, weighted by their 1/h factors.
pub fn q_function(
    model: &FieldModel,
    densities: &[DensitySpec],
    j: usize,
    t: f64,
    order: usize,
) -> Result<f64> {
    let dec = model.decomposition();
    let d = dec.dim();
    if dec.width(j) != 1 {
        return Err(Error::invalid("Q is defined for one-dimensional components only"));
    }
    let c_all = model
        .local_stationarity()
        .ok_or_else(|| Error::Domain("model carries no local-stationarity functions".into()))?;
    let cj = &c_all[j];
    let fixed = dec.span(j).start;
    if d == 1 {
        return Ok(cj.eval(&[t]));
    }
    let mut full = vec![0.0; d];
    full[fixed] = t;
    let rest: Vec<usize> = (0..d).filter(|&m| m != fixed).collect();
    let mut integrand = |x: &[f64]| -> f64 {
        let mut weight = 1.0;
        for (i, &m) in rest.iter().enumerate() {
            full[m] = x[i];
            weight /= densities[dec.component_of(m)].h(x[i]).unwrap();
        }
        cj.eval(&full) * weight
    };
    Ok(tensor_integral(d - 1, order, &mut integrand))
}

/// Structural description of a Q (or c) profile handed to the optimal-density
/// solver: a pure power coef·t^exponent, or an arbitrary positive function.
#[derive(Clone)]
pub enum QFunction {
    Power(RadialPower),
    General(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl QFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            QFunction::Power(p) => p.coef * t.powf(p.exponent),
            QFunction::General(f) => f(t),
        }
    }
}

/// The within-component density minimizing v_j for a one-dimensional
/// component: h_opt = Q^γ/∫Q^γ with γ = 1/(2+α), and the attained constant
/// v_opt = a_α·(∫Q^γ)^{1/γ}.
pub fn optimal_density_1d(q: &QFunction, alpha: f64) -> Result<(DensitySpec, f64)> {
    let a = a_const(alpha)?;
    let gamma = 1.0 / (2.0 + alpha);
    match q {
        QFunction::Power(p) => {
            if !(p.coef > 0.0) {
                return Err(Error::Domain("Q must be positive".into()));
            }
            let theta = p.exponent * gamma;
            if theta <= -1.0 {
                return Err(Error::Domain(format!(
                    "Q^gamma ~ t^{theta} is not integrable; no optimal density exists"
                )));
            }
            let z = p.coef.powf(gamma) / (theta + 1.0);
            Ok((DensitySpec::power(theta)?, a * z.powf(1.0 / gamma)))
        }
        QFunction::General(f) => {
            let fq = f.clone();
            let z = dyadic_integral_1d(&move |t| fq(t).max(0.0).powf(gamma), 40, 24);
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::Domain("Q^gamma failed to integrate".into()));
            }
            let fh = f.clone();
            let spec = DensitySpec::explicit(Arc::new(move |t| fh(t).max(0.0).powf(gamma) / z))?;
            Ok((spec, a * z.powf(1.0 / gamma)))
        }
    }
}

/// Explicit envelope constants d_j = a_{α_j}·l_j^{1+α_j/2}·C_j^{α_j}·Π_i C_i^{l_i}
/// with C_j = 1/min h_j, and the resulting Hölder upper bound
/// (C/N)·Σ_j d_j/n_j^{α_j}.
pub fn holder_upper_bound(
    holder_constant: f64,
    densities: &[DensitySpec],
    alpha: &SmoothnessSpec,
    dec: &Decomposition,
    alloc: &Allocation,
) -> Result<f64> {
    if !(holder_constant > 0.0) {
        return Err(Error::invalid("Hölder constant must be positive"));
    }
    let k = dec.components();
    let mut inv_min: Vec<f64> = Vec::with_capacity(k);
    for spec in densities {
        let min_h = spec.min_h();
        if !spec.is_regular() || !(min_h > 0.0) {
            return Err(Error::invalid(
                "the Hölder bound requires regular densities with positive minimum",
            ));
        }
        inv_min.push(1.0 / min_h);
    }
    let mut prod_all = 1.0;
    for (j, &cm) in inv_min.iter().enumerate() {
        prod_all *= cm.powi(dec.width(j) as i32);
    }
    let mut bound = 0.0;
    for (j, &inv) in inv_min.iter().enumerate() {
        let aj = alpha.component(j);
        let lj = dec.width(j) as f64;
        let dj = a_const(aj)? * lj.powf(1.0 + aj / 2.0) * inv.powf(aj) * prod_all;
        bound += dj * (alloc.per_component()[j] as f64).powf(-aj);
    }
    Ok(holder_constant * bound / alloc.n_actual() as f64)
}

/// Trend classification for the condition-(C′) ratio G(s)/s^{(1+α)/(2+β)}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    DecreasingTowardZero,
    Flat,
    Increasing,
}

/// Numeric diagnostics for the singularity-eliminating design conditions.
#[derive(Debug, Clone)]
pub struct SingularityReport {
    /// (s, G(s)/s^{(1+α)/(2+β)}) on s = 10^{-1}..10^{-8}.
    pub ratio_rows: Vec<(f64, f64)>,
    pub trend: Trend,
    /// The critical exponent (1+α)/(2+β).
    pub critical_exponent: f64,
    /// sup f(s)/f(v) over ‖s‖/‖v‖ ∈ [C_L, C_U] on a log lattice, when a
    /// bound function was supplied.
    pub shifting_sup: Option<f64>,
}

/// Evaluates the decay condition G(s) = o(s^{(1+α)/(2+β)}) on a log grid and
/// (optionally) the shifting-condition ratio for a supplied bound function.
/// Purely diagnostic: it reports trends, it does not prove conditions.
pub fn singularity_diagnostics(
    g: &dyn Fn(f64) -> f64,
    alpha: f64,
    beta: f64,
    dim: usize,
    shift_bound: Option<&dyn Fn(f64) -> f64>,
) -> SingularityReport {
    let critical = (1.0 + alpha) / (2.0 + beta);
    let mut rows = Vec::with_capacity(8);
    for k in 1..=8 {
        let s = 10f64.powi(-k);
        rows.push((s, g(s) / s.powf(critical)));
    }
    let first = rows.first().unwrap().1;
    let last = rows.last().unwrap().1;
    let trend = if last < 0.1 * first {
        Trend::DecreasingTowardZero
    } else if last > 10.0 * first {
        Trend::Increasing
    } else {
        Trend::Flat
    };
    let shifting_sup = shift_bound.map(|f| {
        let (c_l, c_u) = if dim == 1 {
            (0.5, 2.0)
        } else {
            (1.0 / (3.0 + dim as f64).sqrt(), (3.0 + dim as f64).sqrt())
        };
        let mut sup: f64 = 0.0;
        for k in 1..=8 {
            let s = 10f64.powi(-k);
            for i in 0..=16 {
                let ratio = c_l * (c_u / c_l).powf(i as f64 / 16.0);
                let v = s / ratio;
                if v <= 1.0 {
                    sup = sup.max(f(s) / f(v));
                }
            }
        }
        sup
    });
    SingularityReport { ratio_rows: rows, trend, critical_exponent: critical, shifting_sup }
}

/// The full set of first-order constants for one (model, densities) pair.
#[derive(Debug, Clone)]
pub struct AsymptoticsReport {
    pub v: Vec<f64>,
    pub v_error_estimates: Vec<f64>,
    pub rho: f64,
    pub kappa: f64,
    pub order: usize,
}

/// Computes every v_j plus (ρ, κ).
pub fn analyze(
    model: &FieldModel,
    densities: &[DensitySpec],
    opts: &VOptions,
) -> Result<AsymptoticsReport> {
    let dec = model.decomposition();
    let mut v = Vec::with_capacity(dec.components());
    let mut errs = Vec::with_capacity(dec.components());
    for j in 0..dec.components() {
        let est = v_constant(model, densities, j, opts)?;
        v.push(est.value);
        errs.push(est.error_estimate);
    }
    let (rho, kappa) = rho_kappa(model.smoothness(), dec, &v)?;
    Ok(AsymptoticsReport { v, v_error_estimates: errs, rho, kappa, order: opts.order })
}
