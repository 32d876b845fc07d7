//! Cubature rules shared by the MSE engine and the asymptotic constants.
//!
//! The central object is [`StratumRule`]: a tensor Gauss-Legendre rule of a
//! given order per dimension on D × D for a hyperrectangle D, applied through
//! a per-coordinate diagonal split. Incremental-variance kernels are smooth
//! except where a component of t − v vanishes, so each coordinate pair
//! (t_m, v_m) is mapped over the triangle t_m ≥ v_m by the Duffy substitution
//! v_m = t_m(1 − u_m) and graded polynomially (z = ζ^q, u = μ^q). The kink
//! lands on the u = 0 edge where the grading clusters nodes; for the Brownian
//! kernel |t − v| the transformed integrand is a polynomial and the rule is
//! exact. Kernel symmetry d_X(t,v) = d_X(v,t) halves the 2^d orthant pieces.

use crate::gauss::GaussRule;

pub const DEFAULT_GRADING: i32 = 3;

/// Per-coordinate node triple: larger coordinate, smaller coordinate, weight.
/// The weight absorbs the Duffy Jacobian z and both grading Jacobians.
#[derive(Debug, Clone, Copy)]
struct Cell {
    big: f64,
    small: f64,
    weight: f64,
}

/// Diagonal-split graded tensor rule for ½∬_{D×D} d_X(t,v) dt dv.
#[derive(Debug, Clone)]
pub struct StratumRule {
    dim: usize,
    cells: Vec<Cell>,
    pieces: usize,
}

impl StratumRule {
    /// Rule of the given order per dimension with grading exponent q.
    pub fn new(dim: usize, order: usize, grading: i32) -> Self {
        assert!(dim >= 1 && order >= 1 && grading >= 1);
        let rule = GaussRule::new(order);
        let q = grading;
        let qf = q as f64;
        let mut cells = Vec::with_capacity(order * order);
        for a in 0..order {
            let zeta = rule.nodes[a];
            let z = zeta.powi(q);
            // dz = q ζ^{q-1} dζ and the Duffy Jacobian contributes another z
            let wz = rule.weights[a] * qf * zeta.powi(2 * q - 1);
            for b in 0..order {
                let mu = rule.nodes[b];
                let u = mu.powi(q);
                let wu = rule.weights[b] * qf * mu.powi(q - 1);
                cells.push(Cell { big: z, small: z * (1.0 - u), weight: wz * wu });
            }
        }
        Self { dim, cells, pieces: 1 << (dim - 1) }
    }

    /// Variant for the stratum at the origin of singular models: the u
    /// variable is graded toward both endpoints (the far edge maps onto the
    /// singular lower boundary of the stratum), and in d = 1 the order is
    /// raised by √2 so the node count lands at 4x the regular rule.
    pub fn new_origin(dim: usize, order: usize, grading: i32) -> Self {
        let order = if dim == 1 {
            ((order as f64) * std::f64::consts::SQRT_2).ceil() as usize
        } else {
            order
        };
        let rule = GaussRule::new(order);
        let q = grading;
        let qf = q as f64;
        let mut cells = Vec::with_capacity(order * order * 2);
        for a in 0..order {
            let zeta = rule.nodes[a];
            let z = zeta.powi(q);
            let wz = rule.weights[a] * qf * zeta.powi(2 * q - 1);
            for b in 0..order {
                let mu = rule.nodes[b];
                let wgrad = rule.weights[b] * qf * mu.powi(q - 1) * 0.5;
                // [0, 1/2] graded toward u = 0 and [1/2, 1] graded toward u = 1
                for u in [0.5 * mu.powi(q), 1.0 - 0.5 * mu.powi(q)] {
                    cells.push(Cell { big: z, small: z * (1.0 - u), weight: wz * wgrad });
                }
            }
        }
        Self { dim, cells, pieces: 1 << (dim - 1) }
    }

    /// Kernel evaluations one stratum costs under this rule.
    pub fn nodes_per_stratum(&self) -> u64 {
        (self.pieces as u64) * (self.cells.len() as u64).pow(self.dim as u32)
    }

    /// ½∬_{D×D} f(t,v) dt dv for the hyperrectangle D with the given lower
    /// vertex and main diagonal; f must be symmetric in (t, v).
    pub fn half_double_integral(
        &self,
        vertex: &[f64],
        diagonal: &[f64],
        f: &mut dyn FnMut(&[f64], &[f64]) -> f64,
    ) -> f64 {
        debug_assert_eq!(vertex.len(), self.dim);
        let d = self.dim;
        let ncells = self.cells.len();
        let mut t = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut idx = vec![0usize; d];
        let mut volume2 = 1.0;
        for r in diagonal {
            volume2 *= r * r;
        }
        let mut total = 0.0f64;
        for piece in 0..self.pieces {
            idx.iter_mut().for_each(|i| *i = 0);
            loop {
                let mut w = 1.0;
                for m in 0..d {
                    let c = self.cells[idx[m]];
                    w *= c.weight;
                    // coordinate 0 keeps orientation; bit m-1 of piece flips m
                    let plus = m == 0 || (piece >> (m - 1)) & 1 == 0;
                    let (big, small) = (
                        vertex[m] + diagonal[m] * c.big,
                        vertex[m] + diagonal[m] * c.small,
                    );
                    if plus {
                        t[m] = big;
                        v[m] = small;
                    } else {
                        t[m] = small;
                        v[m] = big;
                    }
                }
                total += w * f(&t, &v);
                // odometer
                let mut m = d;
                let mut done = true;
                while m > 0 {
                    m -= 1;
                    idx[m] += 1;
                    if idx[m] < ncells {
                        done = false;
                        break;
                    }
                    idx[m] = 0;
                }
                if done {
                    break;
                }
            }
        }
        // pieces with the first coordinate flipped are recovered by symmetry:
        // x2 cancels the leading 1/2.
        total * volume2
    }
}

/// ∫_0^1 f with geometric (dyadic) refinement toward 0; integrable endpoint
/// singularities at the origin are resolved shell by shell down to 2^-shells.
pub fn dyadic_integral_1d(f: &dyn Fn(f64) -> f64, shells: u32, order: usize) -> f64 {
    let rule = GaussRule::new(order);
    let mut total = 0.0;
    let mut hi = 1.0f64;
    for _ in 0..shells {
        let lo = hi * 0.5;
        total += rule.integrate(lo, hi, f);
        hi = lo;
    }
    total += rule.integrate(0.0, hi, f);
    total
}

/// Tensor-product integral of f over [0,1]^d with per-coordinate dyadic
/// refinement toward 0 (for integrands singular only at the origin corner).
pub fn dyadic_integral(
    dim: usize,
    f: &mut dyn FnMut(&[f64]) -> f64,
    shells: u32,
    order: usize,
) -> f64 {
    let rule = GaussRule::new(order);
    // per-coordinate panels: [0,2^-K], then dyadic shells up to [1/2, 1]
    let mut panels = Vec::with_capacity(shells as usize + 1);
    let mut hi = 1.0f64;
    for _ in 0..shells {
        panels.push((hi * 0.5, hi));
        hi *= 0.5;
    }
    panels.push((0.0, hi));
    let npanels = panels.len();
    let mut total = 0.0;
    let mut panel_idx = vec![0usize; dim];
    let mut node_idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    loop {
        // integrate this panel product with the tensor rule
        node_idx.iter_mut().for_each(|i| *i = 0);
        let mut scale = 1.0;
        for m in 0..dim {
            let (a, b) = panels[panel_idx[m]];
            scale *= b - a;
        }
        loop {
            let mut w = 1.0;
            for m in 0..dim {
                let (a, b) = panels[panel_idx[m]];
                w *= rule.weights[node_idx[m]];
                x[m] = a + (b - a) * rule.nodes[node_idx[m]];
            }
            total += w * scale * f(&x);
            let mut m = dim;
            let mut done = true;
            while m > 0 {
                m -= 1;
                node_idx[m] += 1;
                if node_idx[m] < order {
                    done = false;
                    break;
                }
                node_idx[m] = 0;
            }
            if done {
                break;
            }
        }
        let mut m = dim;
        let mut done = true;
        while m > 0 {
            m -= 1;
            panel_idx[m] += 1;
            if panel_idx[m] < npanels {
                done = false;
                break;
            }
            panel_idx[m] = 0;
        }
        if done {
            break;
        }
    }
    total
}
