//! Linear extension problems: harmonic extension of a trace, the
//! Dirichlet-to-Neumann flux, and initial guesses for the nonlinear solver.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::grid::HalfSpaceGrid;
use crate::linalg::{pcg, SymTriplets};
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::{assemble_operator, boundary_mass, BoundaryConditions, LateralBc, TopBc};
use crate::orders::FractionalOrders;
use crate::solver::{Dofs, ExtensionSystem, LinePreconditioner};

/// Closure of the truncated domain for a harmonic extension.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtensionClosure {
    /// Homogeneous Neumann on lateral and top truncations.
    Neumann,
    /// Periodic in x, homogeneous Neumann on top.
    Periodic,
    /// Dirichlet data on lateral and top truncations, given on all nodes.
    FarField(Vec<f64>),
}

/// Maximum condition number accepted for the near-boundary flux fit.
pub const DTN_MAX_CONDITION: f64 = 1e8;

/// Solves div(y^a ∇v) = 0 with v = `trace` on y = 0.
pub fn harmonic_extension(trace: &[f64], s: f64, grid: Arc<HalfSpaceGrid>, closure: &ExtensionClosure) -> Result<FieldSet> {
    let orders = FractionalOrders::new(&[s])?;
    let nb = grid.boundary_nodes();
    if trace.len() != nb {
        return Err(FracError::GridMismatch(format!("trace has {} samples for {nb} boundary nodes", trace.len())));
    }
    if let Some(k) = trace.iter().position(|t| !t.is_finite()) {
        return Err(FracError::Malformed(format!("trace is not finite at node {k}")));
    }
    let lateral = match closure {
        ExtensionClosure::Neumann => LateralBc::Neumann,
        ExtensionClosure::Periodic => LateralBc::Periodic,
        ExtensionClosure::FarField(data) => {
            grid.check_len(data.len(), "far-field data")?;
            LateralBc::Dirichlet
        }
    };
    let op = assemble_operator(&grid, orders.a()[0], lateral)?;
    let n = grid.node_count();
    let mut v = vec![0.0; n];
    let mut fixed = vec![false; n];
    // Start from the trace continued vertically; it is exact for constants.
    for k in 0..n {
        v[k] = trace[k % nb];
    }
    fixed[..nb].iter_mut().for_each(|f| *f = true);
    if let ExtensionClosure::FarField(data) = closure {
        let bc = BoundaryConditions::new(LateralBc::Dirichlet, TopBc::Dirichlet);
        for (k, f) in crate::operator::dirichlet_mask(&grid, bc).into_iter().enumerate() {
            if f && k >= nb {
                fixed[k] = true;
                v[k] = data[k];
            }
        }
    }
    let periodic = lateral == LateralBc::Periodic;
    if periodic {
        for j in 0..=grid.ny() {
            fixed[grid.idx(nb - 1, j)] = true;
        }
    }
    let dofs = Dofs::new(&grid, 1, &fixed, periodic);
    let mut t = SymTriplets::new(dofs.len());
    let mut rhs = vec![0.0; dofs.len()];
    for e in &op.edges {
        let (p, q) = (dofs.index[e.p], dofs.index[e.q]);
        match (p != Dofs::NONE, q != Dofs::NONE) {
            (true, true) => {
                t.add(p, p, e.c);
                t.add(q, q, e.c);
                t.add(p, q, -e.c);
            }
            (true, false) => {
                t.add(p, p, e.c);
                rhs[p] += e.c * v[e.q];
            }
            (false, true) => {
                t.add(q, q, e.c);
                rhs[q] += e.c * v[e.p];
            }
            (false, false) => {}
        }
    }
    let x = if grid.boundary_dim() == 1 {
        t.to_band().factor(1e-14)?.solve(&rhs)
    } else {
        let csr = t.to_csr();
        let pre = LinePreconditioner::new(&csr, &dofs.fibers)?;
        let mut x: Vec<f64> = dofs.nodes.iter().map(|&(_, node)| v[node]).collect();
        let out = pcg(|u, w| csr.matvec(u, w), |r, z| pre.apply(r, z), &rhs, &mut x, 1e-13, 20_000);
        if !out.converged {
            return Err(FracError::Support(format!("harmonic extension: CG stopped at relative residual {:.2e}", out.residual)));
        }
        x
    };
    for (k, &(_, node)) in dofs.nodes.iter().enumerate() {
        v[node] = x[k];
    }
    if periodic {
        for j in 0..=grid.ny() {
            v[grid.idx(nb - 1, j)] = v[grid.idx(0, j)];
        }
    }
    FieldSet::new(grid, orders, vec![v])
}

/// Conormal flux -lim y^a ∂_y v at every boundary node, per component.
///
/// Fits v(x, y) - v(x, 0) = c y^{1-a} + e y² on the first two y-levels above
/// the boundary and returns -(1-a) c.
pub fn dtn(v: &FieldSet) -> Result<Vec<Vec<f64>>> {
    let grid = v.grid();
    let (y1, y2) = (grid.y()[1], grid.y()[2]);
    let nb = grid.boundary_nodes();
    (0..v.m())
        .map(|c| {
            let a = v.orders().a()[c];
            let p = 1.0 - a;
            let m = [[y1.powf(p), y1 * y1], [y2.powf(p), y2 * y2]];
            let cond = condition_number(m);
            if !(cond <= DTN_MAX_CONDITION) {
                return Err(FracError::IllConditionedFit { condition: cond });
            }
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            Ok((0..nb)
                .map(|b| {
                    let v0 = v.at(c, b, 0);
                    let (r1, r2) = (v.at(c, b, 1) - v0, v.at(c, b, 2) - v0);
                    let coef = (r1 * m[1][1] - r2 * m[0][1]) / det;
                    -p * coef
                })
                .collect())
        })
        .collect()
}

/// 2-norm condition number of a 2×2 matrix.
fn condition_number(a: [[f64; 2]; 2]) -> f64 {
    // Singular values from the Gram matrix.
    let g00 = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let g11 = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    let g01 = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    let tr = g00 + g11;
    let det = (g00 * g11 - g01 * g01).max(0.0);
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (hi, lo) = (0.5 * tr + disc, 0.5 * tr - disc);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxBalance {
    /// Σ of nodal fluxes over prescribed nodes (boundary outflow).
    pub boundary_flux: f64,
    /// Largest single boundary-node flux, for scale.
    pub scale: f64,
}

/// Conservation check for a linear extension: the fluxes leaving through the
/// y = 0 slab and the truncation boundaries sum to zero.
pub fn flux_balance(v: &FieldSet, c: usize, lateral: LateralBc) -> Result<FluxBalance> {
    let grid = v.grid();
    let op = assemble_operator(grid, v.orders().a()[c], lateral)?;
    let kv = op.apply(v.component(c));
    let nb = grid.boundary_nodes();
    let mut total = 0.0;
    let mut scale: f64 = 0.0;
    for (k, f) in kv.iter().enumerate() {
        let (b, j) = (k % nb, k / nb);
        if j == 0 || j == grid.ny() || grid.is_lateral(b) {
            total += f;
            scale = scale.max(f.abs());
        }
    }
    Ok(FluxBalance { boundary_flux: total, scale })
}

/// Layer guess between limits β (x → -∞) and α (x → +∞) along unit direction
/// `dir` of the boundary, continued into the half-space by x ↦ x/(1+y/width).
pub fn tanh_profile(
    grid: Arc<HalfSpaceGrid>,
    orders: FractionalOrders,
    alpha: &[f64],
    beta: &[f64],
    width: f64,
    dir: [f64; 2],
) -> Result<FieldSet> {
    if alpha.len() != orders.m() || beta.len() != orders.m() {
        return Err(FracError::Malformed("layer limits need one value per component".into()));
    }
    FieldSet::from_fn(grid, orders, |c, x, y| {
        let t = (x[0] * dir[0] + x[1] * dir[1]) / (width * (1.0 + y / width));
        0.5 * (alpha[c] + beta[c]) + 0.5 * (alpha[c] - beta[c]) * t.tanh()
    })
}

/// Copies the values of `data` onto the prescribed nodes of `field`.
pub fn impose_dirichlet(field: &FieldSet, data: &FieldSet, bc: BoundaryConditions) -> Result<FieldSet> {
    if field.grid() != data.grid() || field.m() != data.m() {
        return Err(FracError::GridMismatch("Dirichlet data on a different grid".into()));
    }
    let mask = crate::operator::dirichlet_mask(field.grid(), bc);
    let vals = (0..field.m())
        .map(|c| {
            field
                .component(c)
                .iter()
                .zip(data.component(c))
                .zip(&mask)
                .map(|((v, d), f)| if *f { *d } else { *v })
                .collect()
        })
        .collect();
    FieldSet::new(field.grid_arc().clone(), field.orders().clone(), vals)
}

/// Positive radial bump for H'(u) = -λu + N(u), N homogeneous of degree p > 1,
/// by Petviashvili iteration on the discrete extension problem.
///
/// Requires λ > 0, a scalar potential, and Dirichlet zero at the lateral truncation.
pub fn ground_state_guess(
    grid: Arc<HalfSpaceGrid>,
    orders: &FractionalOrders,
    h: &NonlinearitySpec,
    bc: BoundaryConditions,
    amplitude: f64,
    width: f64,
) -> Result<FieldSet> {
    let (lambda, p) = h
        .linear_plus_power()
        .ok_or_else(|| FracError::Support("ground-state guess needs H'(u) = -λu + homogeneous power".into()))?;
    if !(lambda > 0.0) || p < 2 {
        return Err(FracError::Support("ground-state guess needs λ > 0 and power >= 2".into()));
    }
    let mut v = FieldSet::from_fn(grid.clone(), orders.clone(), |_, x, y| {
        let r2 = x[0] * x[0] + x[1] * x[1] + y * y;
        amplitude * (-r2 / (width * width)).exp()
    })?;
    if bc.lateral == LateralBc::Dirichlet {
        let zero = FieldSet::constant(grid.clone(), orders.clone(), &[0.0])?;
        v = impose_dirichlet(&v, &zero, BoundaryConditions::new(LateralBc::Dirichlet, TopBc::Neumann))?;
    }
    // N(u) = H'(u) + λu.
    let nonlin = |u: f64| {
        let mut g = [0.0];
        h.grad_into(&[u], &mut g);
        g[0] + lambda * u
    };
    let linear_h = NonlinearitySpec::new(1, vec![crate::nonlinearity::Term::monomial(-0.5 * lambda, &[2])], "linear part")?;
    let sys = ExtensionSystem::new(grid.clone(), orders.clone(), linear_h, bc)?;
    let mass = boundary_mass(&grid, bc.lateral);
    let n = grid.node_count();
    let nb = grid.boundary_nodes();
    // L = K/d + λ M is the Hessian of the linear-part energy.
    let jac = sys.jacobian(&[vec![0.0; n]], 0.0);
    let ldl = if grid.boundary_dim() == 1 {
        jac.clone().to_band().factor(1e-14)?
    } else {
        return Err(FracError::Support("ground-state guess is implemented for one boundary dimension".into()));
    };
    let dofs = &sys.dofs;
    let mut x: Vec<f64> = dofs.nodes.iter().map(|&(_, node)| v.component(0)[node]).collect();
    let csr = jac.to_csr();
    let gamma = p as f64 / (p as f64 - 1.0);
    let mut lx = vec![0.0; x.len()];
    for _ in 0..300 {
        let mut rhs = vec![0.0; x.len()];
        for (k, &(_, node)) in dofs.nodes.iter().enumerate() {
            if node < nb {
                rhs[k] = mass[node] * nonlin(x[k]);
            }
        }
        csr.matvec(&x, &mut lx);
        let num: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        if !(den > 0.0) {
            return Err(FracError::Support("ground-state iteration lost positivity".into()));
        }
        let stab = (num / den).powf(gamma);
        let w = ldl.solve(&rhs);
        let next: Vec<f64> = w.iter().map(|t| stab * t).collect();
        let change = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-10 * x.iter().fold(0.0f64, |m, t| m.max(t.abs())) {
            break;
        }
    }
    let mut vals = v.component(0).to_vec();
    for (k, &(_, node)) in dofs.nodes.iter().enumerate() {
        vals[node] = x[k];
    }
    FieldSet::new(grid, orders.clone(), vec![vals])
}
