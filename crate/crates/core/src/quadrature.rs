//! Weighted quadrature ∫ y^a f over grid regions, exact on piecewise-linear
//! y-profiles against the singular weight.

use serde::Serialize;

use crate::error::{FracError, Result};
use crate::grid::HalfSpaceGrid;
use crate::special::power_moment;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];
pub(crate) const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Region {
    /// Whole truncated domain.
    Full,
    /// C_R = B_R × (0, R).
    Cylinder(f64),
    /// B_R^+ = {|(x, y)| < R, y > 0}.
    HalfBall(f64),
    /// The slab y = 0, optionally restricted to B_R.
    Boundary(Option<f64>),
    /// Vertical fiber above boundary node `b`.
    Fiber(usize),
}

/// Node weights for one weight exponent and region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    pub a: f64,
    pub region: Region,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn apply(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.weights.len() {
            return Err(FracError::GridMismatch(format!(
                "{} samples for a rule with {} weights",
                f.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(f).map(|(w, v)| if *w == 0.0 { 0.0 } else { w * v }).sum())
    }
}

pub(crate) fn check_weight(a: f64) -> Result<()> {
    if !(a > -1.0 && a < 1.0) {
        return Err(FracError::NonIntegrableWeight(a));
    }
    Ok(())
}

/// ∫_0^{top} y^a φ_j(y) dy for the piecewise-linear hat functions φ_j of the y-nodes.
pub fn y_hat_weights(y: &[f64], a: f64, top: f64) -> Vec<f64> {
    let mut w = vec![0.0; y.len()];
    for k in 0..y.len() - 1 {
        let (y0, y1) = (y[k], y[k + 1]);
        if top <= y0 {
            break;
        }
        let t = top.min(y1);
        let dy = y1 - y0;
        let p0 = power_moment(y0, t, a);
        let p1 = power_moment(y0, t, a + 1.0);
        // ∫ y^a (y1 - y) and ∫ y^a (y - y0), written to limit cancellation.
        let right = (p1 - y0 * p0) / dy;
        let left = p0 - right;
        w[k] += left;
        w[k + 1] += right;
    }
    w
}

/// ∫_{y0}^{y2} y^a (y - y0)^k dy for k = 0, 1, 2.
fn shifted_moments(y0: f64, y2: f64, a: f64) -> [f64; 3] {
    let w = y2 - y0;
    if y0 <= 4.0 * w {
        let p = |e: f64| power_moment(y0, y2, e);
        let (p0, p1, p2) = (p(a), p(a + 1.0), p(a + 2.0));
        [p0, p1 - y0 * p0, p2 - 2.0 * y0 * p1 + y0 * y0 * p0]
    } else {
        // Far from the singularity y^a is smooth on the cell pair.
        let mut m = [0.0; 3];
        for &(t, wt) in &GL8 {
            let tt = 0.5 * w * (t + 1.0);
            let f = 0.5 * w * wt * (y0 + tt).powf(a);
            m[0] += f;
            m[1] += f * tt;
            m[2] += f * tt * tt;
        }
        m
    }
}

/// ∫_0^Y y^a p(y) dy weights with p piecewise quadratic on consecutive cell
/// pairs (a trailing odd cell is linear); exact for quadratics.
pub fn y_quadratic_weights(y: &[f64], a: f64) -> Vec<f64> {
    let n = y.len();
    let mut w = vec![0.0; n];
    let mut k = 0;
    while k + 2 < n {
        let (t1, t2) = (y[k + 1] - y[k], y[k + 2] - y[k]);
        let [m0, m1, m2] = shifted_moments(y[k], y[k + 2], a);
        w[k] += (m2 - (t1 + t2) * m1 + t1 * t2 * m0) / (t1 * t2);
        w[k + 1] += (m2 - t2 * m1) / (t1 * (t1 - t2));
        w[k + 2] += (m2 - t1 * m1) / (t2 * (t2 - t1));
        k += 2;
    }
    if k + 1 < n {
        let tail = y_hat_weights(&y[k..], a, y[n - 1]);
        w[k] += tail[0];
        w[k + 1] += tail[1];
    }
    w
}

fn check_radius(grid: &HalfSpaceGrid, r: f64, need_y: bool) -> Result<()> {
    let ext = if need_y { grid.l().min(grid.y_height()) } else { grid.l() };
    if !(r >= 0.0) || r > ext * (1.0 + 1e-12) {
        return Err(FracError::RadiusOutOfRange { radius: r, extent: ext });
    }
    Ok(())
}

/// Gauss points (x, weight·density) covering x-control cell `i`.
pub(crate) fn x_gauss(grid: &HalfSpaceGrid, i: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    let (c0, c1) = grid.x_cell(i);
    let (mid, half) = (0.5 * (c0 + c1), 0.5 * (c1 - c0));
    GL8.iter().map(move |&(t, w)| {
        let x = mid + half * t;
        (x, w * half * grid.x_density(x))
    })
}

/// Gauss points (x1, x2, weight) covering the control cell of a 2-D boundary node.
pub(crate) fn xy_gauss(grid: &HalfSpaceGrid, b: usize) -> Vec<(f64, f64, f64)> {
    let nx = grid.nx();
    let (a0, a1) = grid.x_cell(b % nx);
    let (b0, b1) = grid.x_cell(b / nx);
    let mut out = Vec::with_capacity(16);
    for &(t, wt) in &GL4 {
        for &(u, wu) in &GL4 {
            let x1 = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * t;
            let x2 = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * u;
            out.push((x1, x2, 0.25 * (a1 - a0) * (b1 - b0) * wt * wu));
        }
    }
    out
}

/// Boundary weight of node `b` inside the base ball B_R.
fn base_weight(grid: &HalfSpaceGrid, b: usize, r: f64) -> f64 {
    if grid.boundary_dim() == 2 {
        xy_gauss(grid, b).into_iter().filter(|(x1, x2, _)| x1.hypot(*x2) < r).map(|(_, _, w)| w).sum()
    } else {
        grid.x_measure_clipped(b, -r, r)
    }
}

pub fn quadrature_rule(grid: &HalfSpaceGrid, a: f64, region: Region) -> Result<QuadratureRule> {
    check_weight(a)?;
    let nb = grid.boundary_nodes();
    let ny1 = grid.ny() + 1;
    let weights = match region {
        Region::Fiber(b) => {
            if b >= nb {
                return Err(FracError::GridMismatch(format!("fiber {b} outside {nb} boundary nodes")));
            }
            y_quadratic_weights(grid.y(), a)
        }
        Region::Boundary(r) => {
            if let Some(r) = r {
                check_radius(grid, r, false)?;
            }
            (0..nb)
                .map(|b| match r {
                    Some(r) => base_weight(grid, b, r),
                    None => grid.boundary_measure(b),
                })
                .collect()
        }
        Region::Full => {
            let wy = y_hat_weights(grid.y(), a, grid.y_height());
            let mut w = vec![0.0; grid.node_count()];
            for j in 0..ny1 {
                for b in 0..nb {
                    w[grid.idx(b, j)] = grid.boundary_measure(b) * wy[j];
                }
            }
            w
        }
        Region::Cylinder(r) => {
            check_radius(grid, r, true)?;
            let wy = y_hat_weights(grid.y(), a, r);
            let mut w = vec![0.0; grid.node_count()];
            for b in 0..nb {
                let wx = base_weight(grid, b, r);
                if wx == 0.0 {
                    continue;
                }
                for j in 0..ny1 {
                    w[grid.idx(b, j)] = wx * wy[j];
                }
            }
            w
        }
        Region::HalfBall(r) => {
            check_radius(grid, r, true)?;
            let mut w = vec![0.0; grid.node_count()];
            let add = |b: usize, rho: f64, gw: f64, w: &mut Vec<f64>| {
                if rho >= r {
                    return;
                }
                let wy = y_hat_weights(grid.y(), a, (r * r - rho * rho).sqrt());
                for (j, v) in wy.iter().enumerate() {
                    if *v == 0.0 {
                        break;
                    }
                    w[grid.idx(b, j)] += gw * v;
                }
            };
            for b in 0..nb {
                if grid.boundary_dim() == 2 {
                    for (x1, x2, gw) in xy_gauss(grid, b) {
                        add(b, x1.hypot(x2), gw, &mut w);
                    }
                } else {
                    for (x, gw) in x_gauss(grid, b) {
                        add(b, x.abs(), gw, &mut w);
                    }
                }
            }
            w
        }
    };
    Ok(QuadratureRule { a, region, weights })
}

/// ∫ y^a f over `region`; `f` holds node samples of the region's support
/// (all nodes, the boundary row, or one fiber).
pub fn weighted_integral(f: &[f64], a: f64, region: Region, grid: &HalfSpaceGrid) -> Result<f64> {
    quadrature_rule(grid, a, region)?.apply(f)
}

/// Zeroes samples outside C_R or B_R^+ and returns the cut-cell rule.
pub fn restrict_to_radius(f: &[f64], a: f64, r: f64, region: Region, grid: &HalfSpaceGrid) -> Result<(Vec<f64>, QuadratureRule)> {
    let region = match region {
        Region::Cylinder(_) => Region::Cylinder(r),
        Region::HalfBall(_) => Region::HalfBall(r),
        other => {
            return Err(FracError::InvalidParameter { name: "region", reason: format!("{other:?} has no radius") })
        }
    };
    grid.check_len(f.len(), "restrict_to_radius")?;
    let rule = quadrature_rule(grid, a, region)?;
    let masked = f.iter().zip(&rule.weights).map(|(v, w)| if *w > 0.0 { *v } else { 0.0 }).collect();
    Ok((masked, rule))
}
