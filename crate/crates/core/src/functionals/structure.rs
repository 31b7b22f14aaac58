use serde::Serialize;

use super::fiber_gradients;
use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::grid::HalfSpaceGrid;
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::{inverse_weight_moment, weight_moment};

/// Far-field tolerance at r = L for the decaying radial profile.
pub const FAR_FIELD_TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialStructure {
    /// |∇H(0)|.
    pub grad_at_zero: f64,
    /// H(v(0,0)) - H(0).
    pub potential_gap: f64,
    /// Σ_{i,j} H_{u_i u_j}(0).
    pub hessian_sum: f64,
    /// Trace of component i nonincreasing in r.
    pub monotone_decreasing: Vec<bool>,
    /// max_i |v_i(L, 0)|.
    pub far_field: f64,
}

pub fn radial_structure_checks(v: &FieldSet, h: &NonlinearitySpec) -> Result<RadialStructure> {
    let grid = v.grid();
    if !grid.is_radial() {
        return Err(FracError::Hypothesis("structure checks need a radial grid".into()));
    }
    let m = v.m();
    let nx = grid.nx();
    let far_field = (0..m).map(|c| v.trace(c)[nx - 1].abs()).fold(0.0, f64::max);
    if far_field > FAR_FIELD_TOL {
        return Err(FracError::Hypothesis(format!("far-field value {far_field:e} at r = L exceeds {FAR_FIELD_TOL:e}")));
    }
    let zero = vec![0.0; m];
    let h0 = h.eval(&zero)?;
    let monotone_decreasing = (0..m)
        .map(|c| {
            let t = v.trace(c);
            let tol = 1e-12 * t.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
            t.windows(2).all(|w| w[1] <= w[0] + tol)
        })
        .collect();
    Ok(RadialStructure {
        grad_at_zero: h0.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        potential_gap: h.value(&v.boundary_state(0)) - h0.value,
        hessian_sum: h0.hess.iter().sum(),
        monotone_decreasing,
        far_field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Smallest C with |∇_x v_i| <= C / (1 + y) at all nodes.
    pub grad_x_bound: f64,
    /// Smallest C with |∂_y v_i| <= C / y at nodes with y > 1.
    pub grad_y_bound: f64,
    /// sup |y^a ∂_y v_i| over cells below y = 1.
    pub weighted_flux_bound: f64,
    /// max over lateral fibers of Σ_i ∫ y^a |∇v_i|² dy.
    pub fiber_energy_tail: f64,
}

/// Nodal boundary-gradient magnitude by centered differences (one-sided at edges).
fn grad_x(grid: &HalfSpaceGrid, vals: &[f64], b: usize, j: usize) -> f64 {
    let nx = grid.nx();
    let h = grid.h();
    let diff = |i: usize, stride: usize, b: usize| -> f64 {
        let (lo, hi, span) = if i == 0 {
            (b, b + stride, h)
        } else if i == nx - 1 {
            (b - stride, b, h)
        } else {
            (b - stride, b + stride, 2.0 * h)
        };
        (vals[grid.idx(hi, j)] - vals[grid.idx(lo, j)]) / span
    };
    if grid.boundary_dim() == 2 {
        diff(b % nx, 1, b).hypot(diff(b / nx, nx, b))
    } else {
        diff(b, 1, b).abs()
    }
}

pub fn decay_checks(v: &FieldSet) -> Result<DecayReport> {
    let grid = v.grid();
    let nb = grid.boundary_nodes();
    let ny = grid.ny();
    let ys = grid.y();
    let mut rep = DecayReport { grad_x_bound: 0.0, grad_y_bound: 0.0, weighted_flux_bound: 0.0, fiber_energy_tail: 0.0 };
    let mut tails = vec![0.0; nb];
    for c in 0..v.m() {
        let vals = v.component(c);
        let a = v.orders().a()[c];
        for j in 0..=ny {
            for b in 0..nb {
                rep.grad_x_bound = rep.grad_x_bound.max(grad_x(grid, vals, b, j) * (1.0 + ys[j]));
                if ys[j] > 1.0 && j < ny {
                    let dy = (vals[grid.idx(b, j + 1)] - vals[grid.idx(b, j - 1)]) / (ys[j + 1] - ys[j - 1]);
                    rep.grad_y_bound = rep.grad_y_bound.max(dy.abs() * ys[j]);
                }
                if j < ny && ys[j + 1] <= 1.0 {
                    let flux = (vals[grid.idx(b, j + 1)] - vals[grid.idx(b, j)]) / inverse_weight_moment(grid, a, j);
                    rep.weighted_flux_bound = rep.weighted_flux_bound.max(flux.abs());
                }
            }
        }
        if grid.boundary_dim() == 1 {
            let (gx, gy) = fiber_gradients(v, c);
            for b in 0..nb {
                tails[b] += gx[b] + gy[b];
            }
        } else {
            for b in (0..nb).filter(|&b| grid.is_lateral(b)) {
                for j in 0..=ny {
                    tails[b] += weight_moment(grid, a, j) * grad_x(grid, vals, b, j).powi(2);
                    if j < ny {
                        tails[b] += (vals[grid.idx(b, j + 1)] - vals[grid.idx(b, j)]).powi(2) / inverse_weight_moment(grid, a, j);
                    }
                }
            }
        }
    }
    rep.fiber_energy_tail = (0..nb).filter(|&b| grid.is_lateral(b)).map(|b| tails[b]).fold(0.0, f64::max);
    Ok(rep)
}
