//! Energies, identities and diagnostics evaluated on computed fields.
//!
//! Gradient integrals are taken from the finite-volume face energies of the
//! weighted operator, so that ∫ y^a |∇v|² over a region is the discrete
//! energy restricted by cut-cell fractions.

mod energy;
mod hamiltonian;
mod monotonicity;
mod structure;
mod symmetry;

pub use energy::{energy, energy_scan, EnergyProfile};
pub use hamiltonian::{hamiltonian_profile, radial_hamiltonian, HamiltonianProfile, RadialHamiltonian};
pub use monotonicity::{monotonicity_curve, pohozaev_residual, MonotonicityCurve, PohozaevTerms};
pub use structure::{decay_checks, radial_structure_checks, DecayReport, RadialStructure};
pub use symmetry::{h_monotone_check, symmetry_diagnostic, HMonotoneReport, SymmetryDiagnostic};

use std::f64::consts::PI;

use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::grid::HalfSpaceGrid;
use crate::nonlinearity::{NonlinearitySpec, SampleBox};
use crate::operator::{assemble_operator, inverse_weight_moment, weight_moment, Edge, LateralBc, WeightedOperator};
use crate::quadrature::{Region, GL4, GL8};
use crate::special::{power_moment, sphere_measure};

/// Fraction of the central part of the x-range used for sup-residuals.
pub const INTERIOR_WINDOW: f64 = 0.6;

/// Formats a float so that parsing it back gives the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// CSV text with `# key = value` metadata lines, a header row and data rows.
pub fn csv_table(meta: &[(&str, String)], header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn require_equal_orders(v: &FieldSet) -> Result<()> {
    if !v.orders().all_equal() {
        return Err(FracError::Hypothesis("identity requires equal orders s_i = s".into()));
    }
    Ok(())
}

pub(crate) fn require_line(v: &FieldSet) -> Result<()> {
    if v.grid().boundary_dim() != 1 || v.grid().is_radial() {
        return Err(FracError::Hypothesis("needs a one-dimensional slab grid (n = 1)".into()));
    }
    Ok(())
}

/// Box spanned by the realized boundary values of every component, padded
/// so that it is never degenerate.
pub fn realized_box(v: &FieldSet) -> SampleBox {
    let mut lo = Vec::with_capacity(v.m());
    let mut hi = Vec::with_capacity(v.m());
    for c in 0..v.m() {
        let t = v.trace(c);
        let (a, b) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let pad = 1e-9 * (1.0 + a.abs().max(b.abs()));
        lo.push(a - pad);
        hi.push(b + pad);
    }
    SampleBox { lo, hi }
}

/// Nodal values of H on the y = 0 slab.
pub(crate) fn boundary_h(v: &FieldSet, h: &NonlinearitySpec) -> Result<Vec<f64>> {
    if h.m() != v.m() {
        return Err(FracError::GridMismatch(format!("potential has {} components, field {}", h.m(), v.m())));
    }
    Ok((0..v.grid().boundary_nodes()).map(|b| h.value(&v.boundary_state(b))).collect())
}

fn y_fraction(lo: f64, hi: f64, cut: f64, e: f64) -> f64 {
    if cut >= hi {
        1.0
    } else if cut <= lo {
        0.0
    } else {
        power_moment(lo, cut, e) / power_moment(lo, hi, e)
    }
}

/// Points (radius, weight) covering the boundary footprint of an edge.
fn footprint(grid: &HalfSpaceGrid, e: &Edge, buf: &mut Vec<(f64, f64)>) {
    buf.clear();
    let nb = grid.boundary_nodes();
    let nx = grid.nx();
    let b = e.p % nb;
    let x = grid.x();
    let gauss_1d = |lo: f64, hi: f64, buf: &mut Vec<(f64, f64)>| {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &(t, w) in &GL8 {
            let xx = mid + half * t;
            buf.push((xx.abs(), w * half * grid.x_density(xx)));
        }
    };
    if grid.boundary_dim() == 1 {
        if e.vertical {
            let (lo, hi) = grid.x_cell(b);
            gauss_1d(lo, hi, buf);
        } else {
            gauss_1d(x[b], x[b + 1], buf);
        }
        return;
    }
    let (i1, i2) = (b % nx, b / nx);
    let (r1, r2) = if e.vertical {
        (grid.x_cell(i1), grid.x_cell(i2))
    } else if e.q % nb == b + 1 {
        ((x[i1], x[i1 + 1]), grid.x_cell(i2))
    } else {
        (grid.x_cell(i1), (x[i2], x[i2 + 1]))
    };
    for &(t, wt) in &GL4 {
        for &(u, wu) in &GL4 {
            let x1 = 0.5 * (r1.0 + r1.1) + 0.5 * (r1.1 - r1.0) * t;
            let x2 = 0.5 * (r2.0 + r2.1) + 0.5 * (r2.1 - r2.0) * u;
            buf.push((x1.hypot(x2), 0.25 * (r1.1 - r1.0) * (r2.1 - r2.0) * wt * wu));
        }
    }
}

/// Share of an edge's energy lying in `region`.
fn edge_fraction(grid: &HalfSpaceGrid, a: f64, e: &Edge, region: Region, buf: &mut Vec<(f64, f64)>) -> f64 {
    let (r, ball) = match region {
        Region::Full => return 1.0,
        Region::Cylinder(r) => (r, false),
        Region::HalfBall(r) => (r, true),
        _ => return 0.0,
    };
    let nb = grid.boundary_nodes();
    let j = e.p / nb;
    let (lo, hi, ex) = if e.vertical {
        (grid.y()[j], grid.y()[j + 1], -a)
    } else {
        let (lo, hi) = grid.y_cell(j);
        (lo, hi, a)
    };
    footprint(grid, e, buf);
    let mut num = 0.0;
    let mut den = 0.0;
    for &(rho, w) in buf.iter() {
        den += w;
        if rho >= r {
            continue;
        }
        let cut = if ball { (r * r - rho * rho).sqrt() } else { r };
        num += w * y_fraction(lo, hi, cut, ex);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Weighted operators of every component, assembled without lateral identification.
pub(crate) fn operators(v: &FieldSet) -> Result<Vec<WeightedOperator>> {
    v.orders().a().iter().map(|&a| assemble_operator(v.grid(), a, LateralBc::Neumann)).collect()
}

/// ∫_region y^{a_c} |∇v_c|² for every region (outer) and component (inner).
pub fn dirichlet_integrals(v: &FieldSet, regions: &[Region]) -> Result<Vec<Vec<f64>>> {
    for r in regions {
        if matches!(r, Region::Boundary(_) | Region::Fiber(_)) {
            return Err(FracError::InvalidParameter { name: "region", reason: format!("{r:?} is not a bulk region") });
        }
        if let Region::Cylinder(rad) | Region::HalfBall(rad) = *r {
            let ext = v.grid().l().min(v.grid().y_height());
            if !(rad >= 0.0) || rad > ext * (1.0 + 1e-12) {
                return Err(FracError::RadiusOutOfRange { radius: rad, extent: ext });
            }
        }
    }
    let ops = operators(v)?;
    let grid = v.grid();
    let mut out = vec![vec![0.0; v.m()]; regions.len()];
    let mut buf = Vec::with_capacity(16);
    for (c, op) in ops.iter().enumerate() {
        let vals = v.component(c);
        for e in &op.edges {
            let en = e.c * (vals[e.p] - vals[e.q]).powi(2);
            if en == 0.0 {
                continue;
            }
            for (k, reg) in regions.iter().enumerate() {
                out[k][c] += en * edge_fraction(grid, op.a, e, *reg, &mut buf);
            }
        }
    }
    Ok(out)
}

/// Fiber integrals (∫ y^a (∂_x v)², ∫ y^a (∂_y v)²) over y ∈ (0, Y) at every
/// node of a one-dimensional boundary; ∂_x is centered, zero at a radial
/// center and one-sided at the lateral ends.
pub(crate) fn fiber_gradients(v: &FieldSet, c: usize) -> (Vec<f64>, Vec<f64>) {
    let grid = v.grid();
    let a = v.orders().a()[c];
    let nx = grid.nx();
    let ny = grid.ny();
    let h = grid.h();
    let vals = v.component(c);
    let mut gx = vec![0.0; nx];
    for j in 0..=ny {
        let mu = weight_moment(grid, a, j);
        let at = |i: usize| vals[grid.idx(i, j)];
        for (i, g) in gx.iter_mut().enumerate() {
            let d = if i == 0 {
                if grid.is_radial() {
                    0.0
                } else {
                    (at(1) - at(0)) / h
                }
            } else if i == nx - 1 {
                (at(i) - at(i - 1)) / h
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            };
            *g += mu * d * d;
        }
    }
    let gy = (0..nx)
        .map(|i| (0..ny).map(|j| (vals[grid.idx(i, j + 1)] - vals[grid.idx(i, j)]).powi(2) / inverse_weight_moment(grid, a, j)).sum())
        .collect();
    (gx, gy)
}

/// Reconstruction of one component: linear in x, and in each y-cell linear
/// in y^{1-a}, the profile of the one-dimensional weighted-harmonic functions.
pub(crate) struct Interpolant<'a> {
    grid: &'a HalfSpaceGrid,
    vals: &'a [f64],
    a: f64,
}

impl<'a> Interpolant<'a> {
    pub(crate) fn new(v: &'a FieldSet, c: usize) -> Self {
        Interpolant { grid: v.grid(), vals: v.component(c), a: v.orders().a()[c] }
    }

    fn locate_x(&self, x: f64) -> (usize, f64) {
        let g = self.grid;
        let nx = g.nx();
        let t = (x - g.x()[0]) / g.h();
        let i = (t.floor().max(0.0) as usize).min(nx - 2);
        (i, (t - i as f64).clamp(0.0, 1.0))
    }

    fn locate_y(&self, y: f64) -> (usize, f64, f64) {
        let ys = self.grid.y();
        let ny = self.grid.ny();
        let j = ys.partition_point(|&t| t <= y).saturating_sub(1).min(ny - 1);
        let p = 1.0 - self.a;
        let (phi0, phi1) = (ys[j].powf(p), ys[j + 1].powf(p));
        let yc = y.clamp(ys[j], ys[j + 1]);
        let t = (yc.powf(p) - phi0) / (phi1 - phi0);
        let dt = if yc > 0.0 { p * yc.powf(-self.a) / (phi1 - phi0) } else { f64::INFINITY };
        (j, t, dt)
    }

    /// Value, boundary gradient and ∂_y at (x1, x2, y).
    pub(crate) fn eval(&self, x: [f64; 2], y: f64) -> (f64, [f64; 2], f64) {
        let g = self.grid;
        let (j, t, dt) = self.locate_y(y);
        let h = g.h();
        if g.boundary_dim() == 1 {
            let (i, s) = self.locate_x(x[0]);
            let f = |ii: usize, jj: usize| self.vals[g.idx(ii, jj)];
            let lo = (1.0 - s) * f(i, j) + s * f(i + 1, j);
            let hi = (1.0 - s) * f(i, j + 1) + s * f(i + 1, j + 1);
            let dx_lo = (f(i + 1, j) - f(i, j)) / h;
            let dx_hi = (f(i + 1, j + 1) - f(i, j + 1)) / h;
            let val = (1.0 - t) * lo + t * hi;
            let dx = (1.0 - t) * dx_lo + t * dx_hi;
            let dy = if hi == lo { 0.0 } else { (hi - lo) * dt };
            return (val, [dx, 0.0], dy);
        }
        let nx = g.nx();
        let (i1, s1) = self.locate_x(x[0]);
        let (i2, s2) = self.locate_x(x[1]);
        let f = |a: usize, b: usize, jj: usize| self.vals[g.idx(b * nx + a, jj)];
        let layer = |jj: usize| {
            let v00 = f(i1, i2, jj);
            let v10 = f(i1 + 1, i2, jj);
            let v01 = f(i1, i2 + 1, jj);
            let v11 = f(i1 + 1, i2 + 1, jj);
            let val = (1.0 - s1) * (1.0 - s2) * v00 + s1 * (1.0 - s2) * v10 + (1.0 - s1) * s2 * v01 + s1 * s2 * v11;
            let d1 = ((1.0 - s2) * (v10 - v00) + s2 * (v11 - v01)) / h;
            let d2 = ((1.0 - s1) * (v01 - v00) + s1 * (v11 - v10)) / h;
            (val, d1, d2)
        };
        let (l0, l1) = (layer(j), layer(j + 1));
        let val = (1.0 - t) * l0.0 + t * l1.0;
        let d1 = (1.0 - t) * l0.1 + t * l1.1;
        let d2 = (1.0 - t) * l0.2 + t * l1.2;
        let dy = if l1.0 == l0.0 { 0.0 } else { (l1.0 - l0.0) * dt };
        (val, [d1, d2], dy)
    }
}

/// Quadrature nodes (x1, x2, y, dS) on the curved boundary ∂⁺B_R.
pub(crate) fn hemisphere_nodes(grid: &HalfSpaceGrid, r: f64) -> Vec<([f64; 2], f64, f64)> {
    const PANELS: usize = 64;
    let radial = grid.is_radial();
    let dim = grid.boundary_dim();
    // Panels graded cubically toward the y = 0 rim, where y^a is singular.
    let mut thetas = Vec::new();
    let mut edges = Vec::with_capacity(PANELS + 1);
    for k in 0..=PANELS {
        let t = k as f64 / PANELS as f64;
        edges.push(if radial || dim == 2 {
            0.5 * PI * t.powi(3)
        } else if t <= 0.5 {
            0.5 * PI * (2.0 * t).powi(3)
        } else {
            PI - 0.5 * PI * (2.0 - 2.0 * t).powi(3)
        });
    }
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for &(t, wt) in &GL8 {
            thetas.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * t, 0.5 * (hi - lo) * wt));
        }
    }
    let mut out = Vec::new();
    for (th, wt) in thetas {
        let (xr, y) = (r * th.cos(), r * th.sin());
        if dim == 2 {
            let nphi = 128;
            for k in 0..nphi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
                out.push(([xr * phi.cos(), xr * phi.sin()], y, wt * r * r * xr.abs() / r * 2.0 * PI / nphi as f64));
            }
        } else if radial {
            out.push(([xr, 0.0], y, wt * r * sphere_measure(grid.ambient_n()) * xr.powi(grid.ambient_n() as i32 - 1)));
        } else {
            out.push(([xr, 0.0], y, wt * r));
        }
    }
    out
}

/// ∫_{∂B_R} H(v(·, 0)) over the sphere of radius R in the boundary.
pub(crate) fn sphere_h(v: &FieldSet, h: &NonlinearitySpec, r: f64) -> f64 {
    let grid = v.grid();
    let interps: Vec<Interpolant> = (0..v.m()).map(|c| Interpolant::new(v, c)).collect();
    let state = |x: [f64; 2]| -> Vec<f64> { interps.iter().map(|ip| ip.eval(x, 0.0).0).collect() };
    if grid.boundary_dim() == 2 {
        let n = 256;
        (0..n)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                h.value(&state([r * phi.cos(), r * phi.sin()])) * r * 2.0 * PI / n as f64
            })
            .sum()
    } else if grid.is_radial() {
        sphere_measure(grid.ambient_n()) * r.powi(grid.ambient_n() as i32 - 1) * h.value(&state([r, 0.0]))
    } else {
        h.value(&state([r, 0.0])) + h.value(&state([-r, 0.0]))
    }
}

/// Least-squares line through (x, y); returns (slope, intercept, rms residual).
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orders::FractionalOrders;
    use std::sync::Arc;

    fn layer(s: f64) -> FieldSet {
        let g = Arc::new(HalfSpaceGrid::build(10.0, 201, 10.0, 60, 3.0, false, 1).unwrap());
        FieldSet::from_fn(g, FractionalOrders::uniform(1, s).unwrap(), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan()).unwrap()
    }

    #[test]
    fn full_region_matches_operator_energy() {
        let v = layer(0.5);
        let op = assemble_operator(v.grid(), 0.0, LateralBc::Neumann).unwrap();
        let d = dirichlet_integrals(&v, &[Region::Full]).unwrap();
        assert!((d[0][0] - 2.0 * op.energy(v.component(0))).abs() < 1e-12 * d[0][0]);
    }

    #[test]
    fn half_ball_below_cylinder_and_monotone() {
        let v = layer(0.5);
        let rs = [1.0, 2.0, 4.0, 8.0];
        let regions: Vec<Region> = rs.iter().flat_map(|&r| [Region::HalfBall(r), Region::Cylinder(r)]).collect();
        let d = dirichlet_integrals(&v, &regions).unwrap();
        for k in 0..rs.len() {
            assert!(d[2 * k][0] <= d[2 * k + 1][0]);
            if k > 0 {
                assert!(d[2 * k][0] > d[2 * k - 2][0]);
            }
        }
        // ∫∫_{B_R^+} |∇v|² for v = (2/π) arctan(x/(1+y)) against polar Gauss quadrature.
        let r = 4.0;
        let mut oracle = 0.0;
        let np = 400;
        for i in 0..np {
            for &(t, w) in &GL8 {
                let rho = r * (i as f64 + 0.5 + 0.5 * t) / np as f64;
                for k in 0..np {
                    for &(u, wu) in &GL8 {
                        let th = PI * (k as f64 + 0.5 + 0.5 * u) / np as f64;
                        let (x, y) = (rho * th.cos(), rho * th.sin());
                        let g2 = 4.0 / (PI * PI) / ((1.0 + y).powi(2) + x * x);
                        oracle += g2 * rho * (0.5 * r / np as f64 * w) * (0.5 * PI / np as f64 * wu);
                    }
                }
            }
        }
        assert!((d[4][0] - oracle).abs() < 1e-2 * oracle, "{} vs {oracle}", d[4][0]);
    }

    #[test]
    fn interpolant_reproduces_nodes_and_profiles() {
        let v = layer(0.3);
        let ip = Interpolant::new(&v, 0);
        let g = v.grid();
        let (val, _, _) = ip.eval([g.x()[57], 0.0], g.y()[13]);
        assert!((val - v.at(0, 57, 13)).abs() < 1e-14);
        // Weighted-harmonic fiber profile y^{1-a} is reproduced with exact derivative.
        let a = v.orders().a()[0];
        let w = FieldSet::from_fn(v.grid_arc().clone(), v.orders().clone(), |_, _, y| y.powf(1.0 - a)).unwrap();
        let ip = Interpolant::new(&w, 0);
        let y = 0.37;
        let (val, dx, dy) = ip.eval([1.3, 0.0], y);
        assert!((val - y.powf(1.0 - a)).abs() < 1e-12);
        assert!(dx[0].abs() < 1e-12);
        assert!((dy - (1.0 - a) * y.powf(-a)).abs() < 1e-10);
    }

    #[test]
    fn hemisphere_area() {
        let g = HalfSpaceGrid::build(10.0, 21, 10.0, 20, 2.0, false, 1).unwrap();
        let len: f64 = hemisphere_nodes(&g, 3.0).iter().map(|n| n.2).sum();
        assert!((len - 3.0 * PI).abs() < 1e-12);
        let g = HalfSpaceGrid::build(10.0, 21, 10.0, 20, 2.0, true, 2).unwrap();
        let area: f64 = hemisphere_nodes(&g, 3.0).iter().map(|n| n.2).sum();
        assert!((area - 2.0 * PI * 9.0).abs() < 1e-10);
        let p = crate::grid::GridParams { l: 5.0, nx: 11, y_height: 5.0, ny: 10, grading: 2.0, radial: false, ambient_n: 2, boundary_dim: 2 };
        let g = HalfSpaceGrid::new(p).unwrap();
        let area: f64 = hemisphere_nodes(&g, 3.0).iter().map(|n| n.2).sum();
        assert!((area - 2.0 * PI * 9.0).abs() < 1e-10);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 1.0).collect();
        let (p, c, r) = linear_fit(&xs, &ys);
        assert!((p - 0.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
