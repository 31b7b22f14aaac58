//! Newton solver for the coupled extension system
//! div(y^{a_i} ∇v_i) = 0, -lim y^{a_i} ∂_y v_i = d_i H_{u_i}(v(·, 0)).
//!
//! The discrete problem is the critical-point equation of
//! E(v) = Σ_i (1/2d_i) vᵢᵀ K_i vᵢ - Σ_b M_b H(v(b, 0)), so the Newton matrix is
//! the symmetric Hessian of E. Residuals are reported in flux form
//! K_i v_i - d_i M H_{u_i}, the nodal imbalance of the finite-volume scheme.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::grid::HalfSpaceGrid;
use crate::linalg::{pcg, solve_tridiagonal, Csr, SymTriplets};
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::{assemble_operator, boundary_mass, canonical, dirichlet_mask, BoundaryConditions, LateralBc, WeightedOperator};
use crate::orders::FractionalOrders;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub newton_max: usize,
    pub krylov_tol: f64,
    pub krylov_max: usize,
    pub damping: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { newton_tol: 1e-10, newton_max: 60, krylov_tol: 1e-12, krylov_max: 10_000, damping: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinearSolver {
    /// Direct banded LDLᵀ (one boundary dimension).
    BandedLdlt,
    /// Conjugate gradients with a y-fiber tridiagonal preconditioner.
    LinePcg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub outer_iterations: usize,
    /// Sup-norm flux residual before each step and after the last.
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    pub linear_solve_iterations_total: usize,
    /// Steps that needed the shifted (pseudo-transient) matrix.
    pub fallback_steps: usize,
    /// Steps globalized on the residual norm instead of the energy.
    pub residual_merit_steps: usize,
    pub linear_solver: LinearSolver,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Degree-of-freedom numbering: fiber-contiguous, components interleaved
/// per boundary node, prescribed and identified nodes skipped.
#[derive(Debug, Clone)]
pub(crate) struct Dofs {
    /// dof index of (component, node), or usize::MAX.
    pub index: Vec<usize>,
    pub nodes: Vec<(usize, usize)>,
    /// Contiguous dof ranges of single (component, boundary node) fibers.
    pub fibers: Vec<(usize, usize)>,
}

impl Dofs {
    pub const NONE: usize = usize::MAX;

    pub fn new(grid: &HalfSpaceGrid, m: usize, fixed: &[bool], periodic: bool) -> Self {
        let nb = grid.boundary_nodes();
        let n = grid.node_count();
        let order: Vec<usize> = if periodic {
            // Fold the ring so that neighbours stay within two positions.
            (0..nb - 1).map(|k| if k % 2 == 0 { k / 2 } else { nb - 2 - (k - 1) / 2 }).collect()
        } else {
            (0..nb).collect()
        };
        let mut index = vec![Self::NONE; m * n];
        let mut nodes = Vec::new();
        let mut fibers = Vec::new();
        for &b in &order {
            for c in 0..m {
                let start = nodes.len();
                for j in 0..=grid.ny() {
                    let node = grid.idx(b, j);
                    if fixed[node] {
                        continue;
                    }
                    index[c * n + node] = nodes.len();
                    nodes.push((c, node));
                }
                if nodes.len() > start {
                    fibers.push((start, nodes.len()));
                }
            }
        }
        Dofs { index, nodes, fibers }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// Assembled discrete problem for one grid, order vector, potential and boundary conditions.
#[derive(Debug, Clone)]
pub struct ExtensionSystem {
    grid: Arc<HalfSpaceGrid>,
    orders: FractionalOrders,
    h: NonlinearitySpec,
    bc: BoundaryConditions,
    ops: Vec<WeightedOperator>,
    mass: Vec<f64>,
    fixed: Vec<bool>,
    pub(crate) dofs: Dofs,
}

impl ExtensionSystem {
    pub fn new(grid: Arc<HalfSpaceGrid>, orders: FractionalOrders, h: NonlinearitySpec, bc: BoundaryConditions) -> Result<Self> {
        if h.m() != orders.m() {
            return Err(FracError::Malformed(format!("potential has m = {}, orders have m = {}", h.m(), orders.m())));
        }
        let ops = orders.a().iter().map(|&a| assemble_operator(&grid, a, bc.lateral)).collect::<Result<Vec<_>>>()?;
        let mass = boundary_mass(&grid, bc.lateral);
        let periodic = bc.lateral == LateralBc::Periodic;
        let mut fixed = dirichlet_mask(&grid, bc);
        if periodic {
            let nb = grid.boundary_nodes();
            for (k, f) in fixed.iter_mut().enumerate() {
                if k % nb == nb - 1 {
                    *f = true;
                }
            }
        }
        let dofs = Dofs::new(&grid, orders.m(), &fixed, periodic);
        Ok(ExtensionSystem { grid, orders, h, bc, ops, mass, fixed, dofs })
    }

    pub fn grid(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }

    pub fn orders(&self) -> &FractionalOrders {
        &self.orders
    }

    pub fn potential(&self) -> &NonlinearitySpec {
        &self.h
    }

    pub fn bc(&self) -> BoundaryConditions {
        self.bc
    }

    pub fn operators(&self) -> &[WeightedOperator] {
        &self.ops
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Nodes whose values are prescribed or copied from an identified node.
    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn dof_count(&self) -> usize {
        self.dofs.len()
    }

    fn check(&self, v: &FieldSet) -> Result<()> {
        if v.m() != self.orders.m() || v.grid() != self.grid.as_ref() {
            return Err(FracError::GridMismatch("field does not belong to this system".into()));
        }
        Ok(())
    }

    fn boundary_states(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let nb = self.grid.boundary_nodes();
        (0..nb).map(|b| v.iter().map(|c| c[b]).collect()).collect()
    }

    /// Flux-form residual K_i v_i - d_i M H_{u_i}(v) at free nodes; zero elsewhere.
    pub fn residual_components(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.orders.m();
        let mut out: Vec<Vec<f64>> = self.ops.iter().zip(v).map(|(op, vc)| op.apply(vc)).collect();
        let mut g = vec![0.0; m];
        for (b, u) in self.boundary_states(v).iter().enumerate() {
            if self.mass[b] == 0.0 {
                continue;
            }
            self.h.grad_into(u, &mut g);
            for c in 0..m {
                out[c][b] -= self.orders.d()[c] * self.mass[b] * g[c];
            }
        }
        for (k, f) in self.fixed.iter().enumerate() {
            if *f {
                for o in out.iter_mut() {
                    o[k] = 0.0;
                }
            }
        }
        out
    }

    pub fn residual(&self, v: &FieldSet) -> Result<Vec<Vec<f64>>> {
        self.check(v)?;
        Ok(self.residual_components(v.components()))
    }

    pub fn residual_sup(&self, v: &FieldSet) -> Result<f64> {
        Ok(sup(&self.residual(v)?))
    }

    fn energy_components(&self, v: &[Vec<f64>]) -> f64 {
        let dirichlet: f64 = self.ops.iter().zip(v).zip(self.orders.d()).map(|((op, vc), d)| op.energy(vc) / d).sum();
        let potential: f64 = self
            .boundary_states(v)
            .iter()
            .zip(&self.mass)
            .map(|(u, m)| if *m == 0.0 { 0.0 } else { m * self.h.value(u) })
            .sum();
        dirichlet - potential
    }

    /// Σ_i (1/2d_i) ∫ y^{a_i}|∇v_i|² - ∫_{y=0} H(v), discretely.
    pub fn energy(&self, v: &FieldSet) -> Result<f64> {
        self.check(v)?;
        Ok(self.energy_components(v.components()))
    }

    /// Energy gradient at the dofs: (K_i v_i)/d_i - M H_{u_i}.
    fn gradient_dofs(&self, res: &[Vec<f64>]) -> Vec<f64> {
        self.dofs.nodes.iter().map(|&(c, node)| res[c][node] / self.orders.d()[c]).collect()
    }

    /// Hessian of the energy in dof numbering, plus `shift` times its
    /// Laplacian diagonal and the boundary mass.
    pub(crate) fn jacobian(&self, v: &[Vec<f64>], shift: f64) -> SymTriplets {
        let n = self.grid.node_count();
        let m = self.orders.m();
        let mut t = SymTriplets::new(self.dofs.len());
        let idx = &self.dofs.index;
        for (c, op) in self.ops.iter().enumerate() {
            let inv_d = 1.0 / self.orders.d()[c];
            for e in &op.edges {
                let (p, q) = (idx[c * n + e.p], idx[c * n + e.q]);
                let w = e.c * inv_d;
                let scale = 1.0 + shift;
                if p != Dofs::NONE {
                    t.add(p, p, w * scale);
                }
                if q != Dofs::NONE {
                    t.add(q, q, w * scale);
                }
                if p != Dofs::NONE && q != Dofs::NONE {
                    t.add(p, q, -w);
                }
            }
        }
        let mut hess = vec![0.0; m * m];
        for (b, u) in self.boundary_states(v).iter().enumerate() {
            let mb = self.mass[b];
            if mb == 0.0 {
                continue;
            }
            self.h.hess_into(u, &mut hess);
            for c in 0..m {
                let p = idx[c * n + b];
                if p == Dofs::NONE {
                    continue;
                }
                if shift > 0.0 {
                    t.add(p, p, shift * mb);
                }
                for c2 in 0..=c {
                    let q = idx[c2 * n + b];
                    if q != Dofs::NONE {
                        t.add(p, q, -mb * hess[c * m + c2]);
                    }
                }
            }
        }
        t
    }

    fn scatter(&self, v: &mut [Vec<f64>], delta: &[f64], alpha: f64) {
        for (k, &(c, node)) in self.dofs.nodes.iter().enumerate() {
            v[c][node] += alpha * delta[k];
        }
        self.sync_copies(v);
    }

    fn sync_copies(&self, v: &mut [Vec<f64>]) {
        if self.bc.lateral == LateralBc::Periodic {
            let nb = self.grid.boundary_nodes();
            for vc in v.iter_mut() {
                for j in 0..=self.grid.ny() {
                    let node = self.grid.idx(nb - 1, j);
                    vc[node] = vc[canonical(&self.grid, true, node)];
                }
            }
        }
    }

    pub fn linear_solver(&self) -> LinearSolver {
        if self.grid.boundary_dim() == 1 {
            LinearSolver::BandedLdlt
        } else {
            LinearSolver::LinePcg
        }
    }

    /// Solves J x = rhs. Returns the solution, Krylov iterations, and whether
    /// the matrix was certified positive definite.
    pub(crate) fn linear_solve(&self, jac: &SymTriplets, rhs: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, usize, bool)> {
        match self.linear_solver() {
            LinearSolver::BandedLdlt => {
                let f = jac.to_band().factor(1e-14)?;
                let definite = f.negative_pivots() == 0;
                Ok((f.solve(rhs), 0, definite))
            }
            LinearSolver::LinePcg => {
                let csr = jac.to_csr();
                let pre = LinePreconditioner::new(&csr, &self.dofs.fibers)?;
                let mut x = vec![0.0; rhs.len()];
                let out = pcg(|u, w| csr.matvec(u, w), |r, z| pre.apply(r, z), rhs, &mut x, opts.krylov_tol, opts.krylov_max);
                if out.indefinite {
                    return Err(FracError::JacobianBreakdown { row: 0, pivot: 0.0 });
                }
                Ok((x, out.iterations, out.converged))
            }
        }
    }
}

/// Block-diagonal preconditioner from the tridiagonal part of each y-fiber.
pub(crate) struct LinePreconditioner {
    fibers: Vec<(usize, usize)>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl LinePreconditioner {
    pub fn new(a: &Csr, fibers: &[(usize, usize)]) -> Result<Self> {
        let mut diag = a.diag();
        let mut off = vec![0.0; a.n];
        for &(s, e) in fibers {
            for k in s..e - 1 {
                off[k] = a.get(k, k + 1);
            }
        }
        // The fiber blocks of a positive definite matrix are positive definite;
        // guard against round-off by checking the Thomas pivots.
        for &(s, e) in fibers {
            let mut beta = diag[s];
            for k in s + 1..e {
                if !(beta > 0.0) {
                    break;
                }
                beta = diag[k] - off[k - 1] * off[k - 1] / beta;
            }
            if !(beta > 0.0) {
                let bump = (s..e).map(|k| diag[k].abs()).fold(0.0, f64::max) * 1e-8;
                for d in &mut diag[s..e] {
                    *d += bump;
                }
            }
        }
        Ok(LinePreconditioner { fibers: fibers.to_vec(), diag, off })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut work = vec![0.0; 0];
        for &(s, e) in &self.fibers {
            if work.len() < e - s {
                work.resize(e - s, 0.0);
            }
            z[s..e].copy_from_slice(&r[s..e]);
            solve_tridiagonal(&self.diag[s..e], &self.off[s..e - 1], &mut z[s..e], &mut work[..e - s]);
        }
    }
}

pub(crate) fn sup(r: &[Vec<f64>]) -> f64 {
    r.iter().flat_map(|c| c.iter()).fold(0.0, |m, v| m.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton iteration on the energy gradient with Armijo damping.
///
/// Steps whose direction is not an energy descent direction (saddle-type
/// solutions) are globalized on the residual norm. A singular or indefinite
/// linearization triggers the shifted matrix J + τ S with τ increased tenfold
/// until it factors as positive definite.
pub fn newton(system: &ExtensionSystem, initial: FieldSet, opts: &SolverOptions) -> Result<(FieldSet, SolveReport)> {
    system.check(&initial)?;
    let grid = initial.grid_arc().clone();
    let orders = initial.orders().clone();
    let mut v: Vec<Vec<f64>> = initial.components().to_vec();
    system.sync_copies(&mut v);
    let mut report = SolveReport {
        outer_iterations: 0,
        residual_history: Vec::new(),
        energy_history: Vec::new(),
        converged: false,
        linear_solve_iterations_total: 0,
        fallback_steps: 0,
        residual_merit_steps: 0,
        linear_solver: system.linear_solver(),
    };
    let mut res = system.residual_components(&v);
    let mut rnorm = sup(&res);
    let mut energy = system.energy_components(&v);
    report.residual_history.push(rnorm);
    report.energy_history.push(energy);
    let mut polished = false;
    while report.outer_iterations < opts.newton_max {
        if rnorm <= opts.newton_tol {
            // One extra step drives the residual to round-off when it helps;
            // decoupled and coupled runs then agree to near machine precision.
            if polished || rnorm == 0.0 {
                report.converged = true;
                break;
            }
            polished = true;
        }
        report.outer_iterations += 1;
        let g = system.gradient_dofs(&res);
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut shift = 0.0;
        let (delta, definite) = loop {
            let jac = system.jacobian(&v, shift);
            match system.linear_solve(&jac, &rhs, opts) {
                Ok((d, its, definite)) if shift == 0.0 || definite => {
                    report.linear_solve_iterations_total += its;
                    break (d, definite);
                }
                Ok((_, its, _)) => report.linear_solve_iterations_total += its,
                Err(FracError::JacobianBreakdown { .. }) => {}
                Err(e) => return Err(e),
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 10.0 };
            if shift > 1e8 {
                return Err(FracError::JacobianBreakdown { row: 0, pivot: 0.0 });
            }
        };
        if shift > 0.0 {
            report.fallback_steps += 1;
        }
        let slope = dot(&g, &delta);
        let energy_merit = definite && slope < 0.0;
        if !energy_merit {
            report.residual_merit_steps += 1;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut trial = v.clone();
        for _ in 0..40 {
            trial.clone_from(&v);
            system.scatter(&mut trial, &delta, alpha);
            let tres = system.residual_components(&trial);
            let tnorm = sup(&tres);
            let ten = system.energy_components(&trial);
            let roundoff = 1e-12 * (1.0 + energy.abs());
            let ok = if !opts.damping {
                true
            } else if energy_merit {
                ten <= energy + 1e-4 * alpha * slope || (ten <= energy + roundoff && tnorm < rnorm)
            } else {
                tnorm < (1.0 - 1e-4 * alpha) * rnorm
            };
            if ok && ten.is_finite() && tnorm.is_finite() {
                v.clone_from(&trial);
                res = tres;
                rnorm = tnorm;
                energy = ten;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            if polished {
                report.converged = true;
                break;
            }
            // Stagnation: keep the iterate and stop.
            break;
        }
        report.residual_history.push(rnorm);
        report.energy_history.push(energy);
    }
    if !report.converged && rnorm <= opts.newton_tol {
        report.converged = true;
    }
    Ok((FieldSet::new(grid, orders, v)?, report))
}

/// Solves the coupled extension system on a slab or radial grid.
pub fn solve_coupled(
    grid: Arc<HalfSpaceGrid>,
    orders: &FractionalOrders,
    h: &NonlinearitySpec,
    bc: BoundaryConditions,
    initial: FieldSet,
    opts: &SolverOptions,
) -> Result<(FieldSet, SolveReport)> {
    let system = ExtensionSystem::new(grid, orders.clone(), h.clone(), bc)?;
    newton(&system, initial, opts)
}

/// Radially symmetric solve; the grid's ambient dimension sets the metric and
/// the lateral truncation r = L carries the prescribed far-field value.
pub fn solve_radial(
    grid: Arc<HalfSpaceGrid>,
    orders: &FractionalOrders,
    h: &NonlinearitySpec,
    bc: BoundaryConditions,
    initial: FieldSet,
    opts: &SolverOptions,
) -> Result<(FieldSet, SolveReport)> {
    if !grid.is_radial() {
        return Err(FracError::InvalidParameter { name: "grid", reason: "solve_radial needs a radial grid".into() });
    }
    if bc.lateral == LateralBc::Periodic {
        return Err(FracError::InvalidParameter { name: "lateral", reason: "radial grids cannot be periodic".into() });
    }
    solve_coupled(grid, orders, h, bc, initial, opts)
}
