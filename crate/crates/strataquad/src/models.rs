//! Random field models described through their incremental variance.
//!
//! A [`FieldModel`] carries the incremental variance d_X(t, v) = ‖X(t) − X(v)‖²
//! as its primitive, an optional covariance (needed only by the simulation
//! oracle), and the smoothness metadata consumed by the asymptotic theory:
//! the coordinate decomposition, the per-component smoothness exponents, the
//! local-stationarity functions c_j, and optional global Hölder data.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Partition of the d coordinates into k contiguous components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    widths: Vec<usize>,
    cumulative: Vec<usize>,
}

impl Decomposition {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::invalid("component widths must be positive"));
        }
        let mut cumulative = Vec::with_capacity(widths.len() + 1);
        cumulative.push(0);
        for &l in &widths {
            cumulative.push(cumulative.last().unwrap() + l);
        }
        Ok(Self { widths, cumulative })
    }

    /// Single component spanning all of [0,1]^d.
    pub fn single(dim: usize) -> Self {
        Self::new(vec![dim]).expect("dim >= 1")
    }

    pub fn dim(&self) -> usize {
        *self.cumulative.last().unwrap()
    }

    pub fn components(&self) -> usize {
        self.widths.len()
    }

    pub fn width(&self, j: usize) -> usize {
        self.widths[j]
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Coordinate range [L_{j-1}, L_j) of component j.
    pub fn span(&self, j: usize) -> std::ops::Range<usize> {
        self.cumulative[j]..self.cumulative[j + 1]
    }

    /// Component owning coordinate index m.
    pub fn component_of(&self, m: usize) -> usize {
        debug_assert!(m < self.dim());
        self.cumulative[1..].partition_point(|&c| c <= m)
    }

    /// Expands a per-component vector to a per-coordinate vector.
    pub fn expand<T: Copy>(&self, per_component: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim());
        for (j, &v) in per_component.iter().enumerate() {
            out.extend(std::iter::repeat_n(v, self.widths[j]));
        }
        out
    }
}

/// Per-component smoothness exponents, each in (0, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSpec {
    alpha: Vec<f64>,
    alpha_star: Vec<f64>,
}

impl SmoothnessSpec {
    pub fn new(alpha: Vec<f64>, dec: &Decomposition) -> Result<Self> {
        if alpha.len() != dec.components() {
            return Err(Error::invalid(format!(
                "expected {} smoothness exponents, got {}",
                dec.components(),
                alpha.len()
            )));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a < 2.0)) {
            return Err(Error::invalid("smoothness exponents must lie in (0, 2)"));
        }
        let alpha_star = dec.expand(&alpha);
        Ok(Self { alpha, alpha_star })
    }

    pub fn component(&self, j: usize) -> f64 {
        self.alpha[j]
    }

    pub fn per_component(&self) -> &[f64] {
        &self.alpha
    }

    /// Per-coordinate expansion alpha*_i.
    pub fn per_coordinate(&self) -> &[f64] {
        &self.alpha_star
    }
}

/// Anisotropic norm ‖s‖_α = Σ_j ‖s^j‖^{α_j} with Euclidean component norms.
pub fn anisotropic_norm(s: &[f64], dec: &Decomposition, alpha: &SmoothnessSpec) -> Result<f64> {
    if s.len() != dec.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {}, decomposition expects {}",
            s.len(),
            dec.dim()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point has non-finite coordinates"));
    }
    let mut total = 0.0;
    for j in 0..dec.components() {
        let span = dec.span(j);
        let sq: f64 = s[span].iter().map(|v| v * v).sum();
        if sq > 0.0 {
            total += sq.powf(alpha.component(j) / 2.0);
        }
    }
    Ok(total)
}

type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// c(t) = coef · ‖t‖^exponent, the structural form of every built-in
/// local-stationarity function. Kept alongside the closure so optimal-density
/// formulas can use the closed-form power integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialPower {
    pub coef: f64,
    pub exponent: f64,
}

/// One local-stationarity function c_j.
#[derive(Clone)]
pub struct LocalStationarity {
    eval: PointFn,
    power: Option<RadialPower>,
}

impl LocalStationarity {
    pub fn constant(value: f64) -> Self {
        Self {
            eval: Arc::new(move |_| value),
            power: Some(RadialPower { coef: value, exponent: 0.0 }),
        }
    }

    pub fn radial_power(coef: f64, exponent: f64) -> Self {
        Self {
            eval: Arc::new(move |t: &[f64]| {
                let r2: f64 = t.iter().map(|v| v * v).sum();
                coef * r2.powf(exponent / 2.0)
            }),
            power: Some(RadialPower { coef, exponent }),
        }
    }

    pub fn general(eval: PointFn) -> Self {
        Self { eval, power: None }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        (self.eval)(t)
    }

    pub fn power(&self) -> Option<RadialPower> {
        self.power
    }
}

impl std::fmt::Debug for LocalStationarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.power {
            Some(p) => write!(f, "LocalStationarity({} * |t|^{})", p.coef, p.exponent),
            None => write!(f, "LocalStationarity(<general>)"),
        }
    }
}

/// Global Hölder data: ‖X(t+s) − X(t)‖² ≤ constant · ‖s‖^beta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderData {
    pub beta: f64,
    pub constant: f64,
}

/// A second-order random field on [0,1]^d, described by its incremental
/// variance and smoothness metadata. Immutable after construction; all
/// evaluation functions are pure and thread-safe.
#[derive(Clone)]
pub struct FieldModel {
    dim: usize,
    dec: Decomposition,
    smoothness: SmoothnessSpec,
    incremental_variance: PairFn,
    covariance: Option<PairFn>,
    local_stationarity: Option<Vec<LocalStationarity>>,
    holder: Option<HolderData>,
    singular_at_origin: bool,
}

impl FieldModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        dec: Decomposition,
        smoothness: SmoothnessSpec,
        incremental_variance: PairFn,
        covariance: Option<PairFn>,
        local_stationarity: Option<Vec<LocalStationarity>>,
        holder: Option<HolderData>,
        singular_at_origin: bool,
    ) -> Result<Self> {
        if dec.dim() != dim {
            return Err(Error::invalid("decomposition does not match dimension"));
        }
        if let Some(c) = &local_stationarity {
            if c.len() != dec.components() {
                return Err(Error::invalid("one c_j per component required"));
            }
        }
        Ok(Self {
            dim,
            dec,
            smoothness,
            incremental_variance,
            covariance,
            local_stationarity,
            holder,
            singular_at_origin,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn smoothness(&self) -> &SmoothnessSpec {
        &self.smoothness
    }

    /// d_X(t, v) = ‖X(t) − X(v)‖².
    #[inline]
    pub fn incremental_variance(&self, t: &[f64], v: &[f64]) -> f64 {
        (self.incremental_variance)(t, v)
    }

    pub fn incremental_variance_fn(&self) -> &PairFn {
        &self.incremental_variance
    }

    pub fn covariance(&self, t: &[f64], s: &[f64]) -> Option<f64> {
        self.covariance.as_ref().map(|r| r(t, s))
    }

    pub fn has_covariance(&self) -> bool {
        self.covariance.is_some()
    }

    pub fn local_stationarity(&self) -> Option<&[LocalStationarity]> {
        self.local_stationarity.as_deref()
    }

    pub fn holder(&self) -> Option<HolderData> {
        self.holder
    }

    pub fn singular_at_origin(&self) -> bool {
        self.singular_at_origin
    }
}

impl std::fmt::Debug for FieldModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldModel")
            .field("dim", &self.dim)
            .field("dec", &self.dec.widths)
            .field("alpha", &self.smoothness.alpha)
            .field("has_covariance", &self.covariance.is_some())
            .field("singular_at_origin", &self.singular_at_origin)
            .finish()
    }
}

/// Fractional Brownian field with stationary increments:
/// r(t,s) = ½(‖t‖_α + ‖s‖_α − ‖t−s‖_α), d_X(t,v) = ‖t−v‖_α exactly.
pub fn make_fbf(dec: Decomposition, alpha: SmoothnessSpec) -> Result<FieldModel> {
    let dim = dec.dim();
    if alpha.per_component().len() != dec.components() {
        return Err(Error::invalid("alpha/decomposition mismatch"));
    }
    // component-wise accumulation without materializing the difference
    // vector: this closure sits in the engine's innermost loop
    fn norm_by(dec: &Decomposition, alpha: &SmoothnessSpec, coord: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for j in 0..dec.components() {
            let mut sq = 0.0;
            for m in dec.span(j) {
                let s = coord(m);
                sq += s * s;
            }
            if sq > 0.0 {
                total += sq.powf(alpha.component(j) / 2.0);
            }
        }
        total
    }
    let dx = {
        let dec = dec.clone();
        let alpha = alpha.clone();
        Arc::new(move |t: &[f64], v: &[f64]| norm_by(&dec, &alpha, |m| t[m] - v[m])) as PairFn
    };
    let cov = {
        let dec = dec.clone();
        let alpha = alpha.clone();
        Arc::new(move |t: &[f64], s: &[f64]| {
            0.5 * (norm_by(&dec, &alpha, |m| t[m])
                + norm_by(&dec, &alpha, |m| s[m])
                - norm_by(&dec, &alpha, |m| t[m] - s[m]))
        }) as PairFn
    };
    let c = vec![LocalStationarity::constant(1.0); dec.components()];
    FieldModel::new(dim, dec, alpha, dx, Some(cov), Some(c), None, false)
}

/// Isotropic field with covariance r(t,s) = exp(−‖t−s‖^α); one component,
/// d_X(t,v) = 2(1 − exp(−‖t−v‖^α)) and c ≡ 2.
pub fn make_exp_field(alpha: f64, dim: usize) -> Result<FieldModel> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid("exp-field exponent must lie in (0, 2)"));
    }
    let dec = Decomposition::single(dim);
    let smooth = SmoothnessSpec::new(vec![alpha], &dec)?;
    let dist_pow = move |t: &[f64], s: &[f64]| -> f64 {
        let r2: f64 = t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
        r2.powf(alpha / 2.0)
    };
    let dx = Arc::new(move |t: &[f64], v: &[f64]| 2.0 * (-(-dist_pow(t, v)).exp_m1())) as PairFn;
    let cov = Arc::new(move |t: &[f64], s: &[f64]| (-dist_pow(t, s)).exp()) as PairFn;
    let c = vec![LocalStationarity::constant(2.0)];
    FieldModel::new(dim, dec, smooth, dx, Some(cov), Some(c), None, false)
}

/// Metadata supplied by the caller of [`make_amplitude_modulated`]; the
/// transform itself cannot infer smoothness of the modulated field.
#[derive(Default)]
pub struct ModulationMetadata {
    pub local_stationarity: Option<Vec<LocalStationarity>>,
    pub holder: Option<HolderData>,
    pub singular_at_origin: bool,
}

/// Field X(t) = a(t)·Y(t) built from a base model Y with covariance:
/// r_X(t,s) = a(t)a(s)r_Y(t,s), d_X derived from it.
///
/// The amplitude must be positive wherever it is evaluated; positivity is
/// checked on a coordinate lattice at construction (skipping the origin,
/// where singular amplitudes may vanish).
pub fn make_amplitude_modulated(
    base: &FieldModel,
    amplitude: PointFn,
    meta: ModulationMetadata,
) -> Result<FieldModel> {
    let base_cov = base
        .covariance
        .clone()
        .ok_or_else(|| Error::invalid("amplitude modulation requires a base covariance"))?;
    let dim = base.dim();
    // positivity probe: 17^d lattice, origin excluded
    let side = 17usize;
    let mut idx = vec![0usize; dim];
    let mut t = vec![0.0; dim];
    loop {
        for (m, &i) in idx.iter().enumerate() {
            t[m] = i as f64 / (side - 1) as f64;
        }
        if t.iter().any(|&x| x > 0.0) {
            let a = amplitude(&t);
            if !(a > 0.0) {
                return Err(Error::Domain(format!(
                    "amplitude must be positive; got {a} at {t:?}"
                )));
            }
        }
        let mut m = dim;
        let mut done = true;
        while m > 0 {
            m -= 1;
            idx[m] += 1;
            if idx[m] < side {
                done = false;
                break;
            }
            idx[m] = 0;
        }
        if done {
            break;
        }
    }
    let cov = {
        let amplitude = amplitude.clone();
        let base_cov = base_cov.clone();
        Arc::new(move |t: &[f64], s: &[f64]| amplitude(t) * amplitude(s) * base_cov(t, s)) as PairFn
    };
    let dx = {
        let amplitude = amplitude.clone();
        Arc::new(move |t: &[f64], v: &[f64]| {
            let (at, av) = (amplitude(t), amplitude(v));
            at * at * base_cov(t, t) + av * av * base_cov(v, v) - 2.0 * at * av * base_cov(t, v)
        }) as PairFn
    };
    FieldModel::new(
        dim,
        base.dec.clone(),
        base.smoothness.clone(),
        dx,
        Some(cov),
        meta.local_stationarity,
        meta.holder,
        meta.singular_at_origin,
    )
}

/// Time-warped fractional Brownian motion X(t) = amplitude · B_β(t^λ) on [0,1]:
/// d_X(t,v) = amplitude²·|t^λ − v^λ|^β exactly, locally stationary away from 0
/// with c(t) = amplitude²·λ^β·t^{β(λ−1)}, and globally Hölder of order β·λ.
pub fn make_warped_fbm(lambda: f64, beta: f64, amplitude: f64) -> Result<FieldModel> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid("warp exponent must lie in (0, 1]"));
    }
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::invalid("fBm exponent must lie in (0, 2)"));
    }
    if !(amplitude > 0.0) {
        return Err(Error::invalid("amplitude must be positive"));
    }
    let dec = Decomposition::single(1);
    let smooth = SmoothnessSpec::new(vec![beta], &dec)?;
    let amp2 = amplitude * amplitude;
    let dx = Arc::new(move |t: &[f64], v: &[f64]| {
        amp2 * (t[0].powf(lambda) - v[0].powf(lambda)).abs().powf(beta)
    }) as PairFn;
    let cov = Arc::new(move |t: &[f64], s: &[f64]| {
        let (x, y) = (t[0].powf(lambda), s[0].powf(lambda));
        amp2 * 0.5 * (x.powf(beta) + y.powf(beta) - (x - y).abs().powf(beta))
    }) as PairFn;
    let c = vec![LocalStationarity::radial_power(
        amp2 * lambda.powf(beta),
        beta * (lambda - 1.0),
    )];
    let holder = HolderData { beta: beta * lambda, constant: amp2 };
    FieldModel::new(1, dec, smooth, dx, Some(cov), Some(c), Some(holder), lambda < 1.0)
}
