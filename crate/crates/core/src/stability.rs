//! Second-variation checks: the stability quadratic form, the linearized
//! spectrum, the quotient system for σ = ψ/φ, Liouville growth curves, the
//! bounded-energy fit and the monotone dichotomy.

use serde::Serialize;

use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::functionals::{csv_table, INTERIOR_WINDOW, dirichlet_integrals, linear_fit, operators, realized_box};
use crate::linalg::lanczos;
use crate::nonlinearity::{certify_gradient_nonnegative, NonlinearitySpec, DEFAULT_SAMPLES_PER_AXIS};
use crate::operator::BoundaryConditions;
use crate::quadrature::{quadrature_rule, Region};
use crate::solver::{ExtensionSystem, LinearSolver, SolverOptions};

/// Number of dyadic cutoff scales in the default test family.
pub const CUTOFF_SCALES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub family: String,
    /// min over the family of Σ∫y^a|∇ζ_i|² - Σ∫√(d_i d_j) H_ij ζ_i ζ_j.
    pub quadratic_gap: f64,
    pub gaps: Vec<f64>,
    pub smallest_eigenvalue: Option<f64>,
    pub eigenvector_sign_consistent: Option<bool>,
}

impl StabilityReport {
    pub fn with_spectrum(mut self, spec: &Spectrum) -> Self {
        self.smallest_eigenvalue = spec.eigenvalues.first().copied();
        self.eigenvector_sign_consistent = Some(spec.sign_consistent);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Nodal derivative of component c along the boundary direction e (centered,
/// one-sided at the lateral ends).
pub fn directional_derivative(v: &FieldSet, c: usize, e: [f64; 2]) -> Vec<f64> {
    let grid = v.grid();
    let nx = grid.nx();
    let nb = grid.boundary_nodes();
    let h = grid.h();
    let vals = v.component(c);
    let diff = |k: usize, i: usize, stride: usize| -> f64 {
        if i == 0 {
            (vals[k + stride] - vals[k]) / h
        } else if i == nx - 1 {
            (vals[k] - vals[k - stride]) / h
        } else {
            (vals[k + stride] - vals[k - stride]) / (2.0 * h)
        }
    };
    (0..grid.node_count())
        .map(|k| {
            let b = k % nb;
            if grid.boundary_dim() == 2 {
                e[0] * diff(k, b % nx, 1) + e[1] * diff(k, b / nx, nx)
            } else {
                e[0] * diff(k, b, 1)
            }
        })
        .collect()
}

fn bump(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Smooth cutoffs η(|(x, y)| / R_k) at radii R_0 / 2^k, R_0 = 0.9 min(L, Y).
pub fn cutoffs(v: &FieldSet) -> Vec<(f64, Vec<f64>)> {
    let grid = v.grid();
    let nb = grid.boundary_nodes();
    let r0 = 0.9 * grid.l().min(grid.y_height());
    (0..CUTOFF_SCALES)
        .map(|k| {
            let r = r0 / 2f64.powi(k as i32);
            let eta = (0..grid.node_count())
                .map(|n| {
                    let (b, j) = (n % nb, n / nb);
                    bump(grid.bradius(b).hypot(grid.y()[j]) / r)
                })
                .collect();
            (r, eta)
        })
        .collect()
}

/// Default test family: the bumps η_R themselves (same in every component),
/// then ζ_i = ∂_e v_i · η_R, for the dyadic radii.
pub fn cutoff_family(v: &FieldSet, e: [f64; 2]) -> Vec<Vec<Vec<f64>>> {
    let derivs: Vec<Vec<f64>> = (0..v.m()).map(|c| directional_derivative(v, c, e)).collect();
    let etas = cutoffs(v);
    let bumps = etas.iter().map(|(_, eta)| vec![eta.clone(); v.m()]);
    let modes = etas.iter().map(|(_, eta)| derivs.iter().map(|d| d.iter().zip(eta).map(|(a, b)| a * b).collect()).collect());
    bumps.chain(modes).collect()
}

fn check_support(v: &FieldSet, zeta: &[Vec<f64>]) -> Result<()> {
    let grid = v.grid();
    let nb = grid.boundary_nodes();
    if zeta.len() != v.m() {
        return Err(FracError::Support(format!("test function has {} components, field {}", zeta.len(), v.m())));
    }
    for z in zeta {
        grid.check_len(z.len(), "test function")?;
        let scale = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (k, x) in z.iter().enumerate() {
            let (b, j) = (k % nb, k / nb);
            if (grid.is_lateral(b) || j == grid.ny()) && x.abs() > 1e-12 * scale {
                return Err(FracError::Support(format!("nonzero value {x:e} on the truncation boundary")));
            }
        }
    }
    Ok(())
}

/// Σ_i ∫ y^{a_i}|∇ζ_i|² - Σ_{ij} ∫_{y=0} √(d_i d_j) H_ij(v) ζ_i ζ_j.
pub fn quadratic_form(v: &FieldSet, h: &NonlinearitySpec, zeta: &[Vec<f64>]) -> Result<f64> {
    let grid = v.grid();
    let m = v.m();
    let d = v.orders().d();
    let ops = operators(v)?;
    let mut q = 0.0;
    for (op, z) in ops.iter().zip(zeta) {
        q += 2.0 * op.energy(z);
    }
    let mut hess = vec![0.0; m * m];
    for b in 0..grid.boundary_nodes() {
        h.hess_into(&v.boundary_state(b), &mut hess);
        let mb = grid.boundary_measure(b);
        for i in 0..m {
            for j in 0..m {
                q -= mb * (d[i] * d[j]).sqrt() * hess[i * m + j] * zeta[i][b] * zeta[j][b];
            }
        }
    }
    Ok(q)
}

pub fn stability_gap(v: &FieldSet, h: &NonlinearitySpec, family: &str, tests: &[Vec<Vec<f64>>]) -> Result<StabilityReport> {
    if h.m() != v.m() {
        return Err(FracError::GridMismatch("potential and field disagree on m".into()));
    }
    if tests.is_empty() {
        return Err(FracError::InvalidParameter { name: "tests", reason: "empty test family".into() });
    }
    let mut gaps = Vec::with_capacity(tests.len());
    for zeta in tests {
        check_support(v, zeta)?;
        gaps.push(quadratic_form(v, h, zeta)?);
    }
    Ok(StabilityReport {
        family: family.to_string(),
        quadratic_gap: gaps.iter().cloned().fold(f64::INFINITY, f64::min),
        gaps,
        smallest_eigenvalue: None,
        eigenvector_sign_consistent: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Lowest eigenvalues found, ascending.
    pub eigenvalues: Vec<f64>,
    /// Relative Lanczos residual of the lowest pair.
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
    /// Each component of the minimizer's trace is one-signed.
    pub sign_consistent: bool,
    pub component_signs: Vec<i8>,
    /// Boundary traces of the minimizer, one per component.
    pub minimizer: Vec<Vec<f64>>,
}

/// Lowest eigenvalues of Q(φ) / Σ∫_{y=0}|φ|² over fields vanishing on the
/// Dirichlet part of `bc`, by shift-invert Lanczos on the boundary.
pub fn linearized_spectrum(v: &FieldSet, h: &NonlinearitySpec, bc: BoundaryConditions, max_steps: usize) -> Result<Spectrum> {
    let grid = v.grid_arc().clone();
    let m = v.m();
    let nb = grid.boundary_nodes();
    let n = grid.node_count();
    let d = v.orders().d().to_vec();
    let sys = ExtensionSystem::new(grid.clone(), v.orders().clone(), h.clone(), bc)?;
    // In ψ_i = √d_i ζ_i the form is ψᵀJψ with J the energy Hessian and the
    // boundary mass becomes M/d_i.
    let mut hess = vec![0.0; m * m];
    let mut rho: f64 = 0.0;
    for b in 0..nb {
        h.hess_into(&v.boundary_state(b), &mut hess);
        for i in 0..m {
            rho = rho.max((0..m).map(|j| hess[i * m + j].abs()).sum());
        }
    }
    let shift = 1.1 * rho * d.iter().cloned().fold(0.0, f64::max) + 0.1;
    let mut jac = sys.jacobian(v.components(), 0.0);
    let mass = sys.mass().to_vec();
    let mut bdofs = Vec::new();
    for c in 0..m {
        for b in 0..nb {
            let k = sys.dofs.index[c * n + b];
            if k != crate::solver::Dofs::NONE && mass[b] > 0.0 {
                bdofs.push((c, b, k, mass[b] / d[c]));
                jac.add(k, k, shift * mass[b] / d[c]);
            }
        }
    }
    let ndof = sys.dof_count();
    let solve: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + '_> = match sys.linear_solver() {
        LinearSolver::BandedLdlt => {
            let f = jac.to_band().factor(1e-14)?;
            if f.negative_pivots() > 0 {
                return Err(FracError::JacobianBreakdown { row: 0, pivot: -1.0 });
            }
            Box::new(move |rhs: &[f64]| Ok(f.solve(rhs)))
        }
        LinearSolver::LinePcg => {
            let opts = SolverOptions::default();
            let sys = &sys;
            let jac = &jac;
            Box::new(move |rhs: &[f64]| Ok(sys.linear_solve(jac, rhs, &opts)?.0))
        }
    };
    let weight: Vec<f64> = bdofs.iter().map(|t| t.3).collect();
    let failure = std::cell::RefCell::new(None);
    let apply = |u: &[f64]| -> Vec<f64> {
        let mut rhs = vec![0.0; ndof];
        for (t, x) in bdofs.iter().zip(u) {
            rhs[t.2] = t.3 * x;
        }
        match solve(&rhs) {
            Ok(sol) => bdofs.iter().map(|t| sol[t.2]).collect(),
            Err(e) => {
                failure.replace(Some(e));
                vec![0.0; u.len()]
            }
        }
    };
    let start: Vec<f64> = (0..bdofs.len()).map(|k| 1.0 + 0.01 * ((k as f64) * 0.7).sin()).collect();
    let steps = max_steps.min(bdofs.len()).max(1);
    let lz = lanczos(apply, &weight, &start, steps);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let top = *lz.ritz.last().expect("at least one Ritz value");
    let eigenvalues: Vec<f64> = lz.ritz.iter().rev().take(3).map(|t| 1.0 / t - shift).collect();
    let residual = lz.top_residual / top.abs();
    let mut minimizer = vec![vec![0.0; nb]; m];
    for (t, x) in bdofs.iter().zip(&lz.top_vector) {
        minimizer[t.0][t.1] = x / d[t.0].sqrt();
    }
    let component_signs: Vec<i8> = minimizer
        .iter()
        .map(|tr| {
            let scale = tr.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let tol = 1e-6 * scale;
            if tr.iter().all(|x| *x >= -tol) {
                1
            } else if tr.iter().all(|x| *x <= tol) {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(Spectrum {
        eigenvalues,
        residual,
        steps: lz.steps,
        converged: residual < 1e-8,
        sign_consistent: component_signs.iter().all(|s| *s != 0),
        component_signs,
        minimizer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaReport {
    /// sup of |Σ_q c φ_p φ_q (σ_p - σ_q)| over interior nodes.
    pub interior: f64,
    /// sup of the boundary relation residual over free boundary nodes.
    pub boundary: f64,
    /// sup of Σ_q c |φ_p φ_q σ_p|, for scale.
    pub scale: f64,
    /// Largest per-component variance of σ over non-truncation nodes.
    pub variance: f64,
    pub sigma: Vec<Vec<f64>>,
}

/// Residuals of the quotient system for σ_i = ψ_i/φ_i with ψ_i = ∂_e v_i.
pub fn sigma_residual(v: &FieldSet, h: &NonlinearitySpec, phi: &FieldSet, e: [f64; 2]) -> Result<SigmaReport> {
    if phi.grid() != v.grid() || phi.m() != v.m() {
        return Err(FracError::GridMismatch("φ lives on a different grid".into()));
    }
    let psi: Vec<Vec<f64>> = (0..v.m()).map(|c| directional_derivative(v, c, e)).collect();
    sigma_residual_with(v, h, phi, &psi)
}

/// As [`sigma_residual`] with ψ supplied directly.
pub fn sigma_residual_with(v: &FieldSet, h: &NonlinearitySpec, phi: &FieldSet, psi: &[Vec<f64>]) -> Result<SigmaReport> {
    let grid = v.grid();
    let m = v.m();
    let nb = grid.boundary_nodes();
    let n = grid.node_count();
    let tiny = 1e-300;
    let mut sigma = Vec::with_capacity(m);
    for c in 0..m {
        let p = phi.component(c);
        if let Some(k) = p.iter().position(|x| x.abs() <= tiny) {
            return Err(FracError::Hypothesis(format!("φ_{c} vanishes at node {k}; the quotient is undefined")));
        }
        sigma.push(psi[c].iter().zip(p).map(|(a, b)| a / b).collect::<Vec<f64>>());
    }
    let shifted = sigma_residual_core(v, h, phi, &sigma)?;
    let keep = |k: usize| !grid.is_lateral(k % nb) && k / nb != grid.ny();
    let variance = sigma
        .iter()
        .map(|s| {
            let vals: Vec<f64> = (0..n).filter(|&k| keep(k)).map(|k| s[k]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64
        })
        .fold(0.0, f64::max);
    Ok(SigmaReport { variance, sigma, ..shifted })
}

/// Residuals for a given σ field (used directly by the shift-invariance check).
pub fn sigma_residual_core(v: &FieldSet, h: &NonlinearitySpec, phi: &FieldSet, sigma: &[Vec<f64>]) -> Result<SigmaReport> {
    let grid = v.grid();
    let m = v.m();
    let nb = grid.boundary_nodes();
    let n = grid.node_count();
    let d = v.orders().d();
    let ops = operators(v)?;
    let mut res = vec![vec![0.0; n]; m];
    let mut scale = vec![0.0f64; n];
    for (c, op) in ops.iter().enumerate() {
        let (p, s) = (phi.component(c), &sigma[c]);
        for e in &op.edges {
            let w = e.c * p[e.p] * p[e.q];
            let f = w * (s[e.p] - s[e.q]);
            res[c][e.p] += f;
            res[c][e.q] -= f;
            scale[e.p] = scale[e.p].max((w * s[e.p]).abs());
            scale[e.q] = scale[e.q].max((w * s[e.q]).abs());
        }
    }
    let mut hess = vec![0.0; m * m];
    for b in 0..nb {
        h.hess_into(&v.boundary_state(b), &mut hess);
        let mb = grid.boundary_measure(b);
        for i in 0..m {
            let pi = phi.component(i)[b];
            for j in 0..m {
                let pj = phi.component(j)[b];
                res[i][b] -= d[i] * mb * hess[i * m + j] * pi * pj * (sigma[j][b] - sigma[i][b]);
            }
        }
    }
    let (mut interior, mut boundary, mut sc) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..n {
        let (b, j) = (k % nb, k / nb);
        if grid.is_lateral(b) || j == grid.ny() {
            continue;
        }
        sc = sc.max(scale[k]);
        for r in &res {
            if j == 0 {
                boundary = boundary.max(r[k].abs());
            } else {
                interior = interior.max(r[k].abs());
            }
        }
    }
    Ok(SigmaReport { interior, boundary, scale: sc, variance: 0.0, sigma: sigma.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GrowthFunction {
    Log,
    Power(f64),
}

impl GrowthFunction {
    /// Rejects tags outside the admissible class: F nondecreasing with
    /// ∫_2^∞ dr / (r F(r)) = ∞.
    pub fn check_class(&self) -> Result<()> {
        match *self {
            GrowthFunction::Log => Ok(()),
            GrowthFunction::Power(p) if p == 0.0 => Ok(()),
            GrowthFunction::Power(p) if p > 0.0 => {
                Err(FracError::ClassViolation(format!("F(r) = r^{p}: ∫ dr/(r F(r)) converges")))
            }
            GrowthFunction::Power(p) => Err(FracError::ClassViolation(format!("F(r) = r^{p} is decreasing"))),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            GrowthFunction::Log => r.ln(),
            GrowthFunction::Power(p) => r.powf(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
    pub sup: f64,
    /// Finite supremum and non-increasing trend over the top quartile.
    pub hypothesis_satisfied: bool,
}

impl GrowthCurve {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        csv_table(meta, &["R", "value"], self.r.iter().zip(&self.values).map(|(r, v)| vec![*r, *v]))
    }
}

/// R ↦ (1/(R² F(R))) ∫_{C_R} Σ y^{a_i} φ_i² σ_i².
pub fn liouville_growth(sigma: &FieldSet, phi: &FieldSet, f: GrowthFunction, rs: &[f64]) -> Result<GrowthCurve> {
    f.check_class()?;
    if sigma.grid() != phi.grid() || sigma.m() != phi.m() {
        return Err(FracError::GridMismatch("σ and φ live on different grids".into()));
    }
    if rs.len() < 2 || rs.windows(2).any(|w| !(w[1] > w[0])) || !(rs[0] > 1.0) {
        return Err(FracError::InvalidParameter { name: "radii", reason: "need at least two increasing radii > 1".into() });
    }
    let grid = sigma.grid();
    let mut values = Vec::with_capacity(rs.len());
    for &r in rs {
        let mut total = 0.0;
        for c in 0..sigma.m() {
            let rule = quadrature_rule(grid, sigma.orders().a()[c], Region::Cylinder(r))?;
            let g: Vec<f64> = sigma.component(c).iter().zip(phi.component(c)).map(|(s, p)| (p * s).powi(2)).collect();
            total += rule.apply(&g)?;
        }
        values.push(total / (r * r * f.eval(r)));
    }
    let sup = values.iter().cloned().fold(0.0, f64::max);
    let q = (3 * rs.len()) / 4;
    let start = q.min(rs.len() - 2);
    let (slope, _, _) = linear_fit(&rs[start..], &values[start..]);
    let tol = 1e-12 * sup;
    Ok(GrowthCurve { r: rs.to_vec(), hypothesis_satisfied: sup.is_finite() && slope <= tol, values, sup })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentEnergyFit {
    /// None when the integrals vanish identically.
    pub fitted: Option<f64>,
    pub predicted: f64,
    /// predicted + 0.1 - fitted (positive means within bound).
    pub slack: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedEnergyReport {
    /// ∇H >= 0 was certified on the realized range.
    pub applicable: bool,
    pub min_gradient: f64,
    pub components: Vec<ComponentEnergyFit>,
}

/// Fits ∫_{B_R^+} y^{a_i}|∇v_i|² against R^{n - 2s_i} on the upper half of the radii.
pub fn bounded_energy_check(v: &FieldSet, h: &NonlinearitySpec, rs: &[f64]) -> Result<BoundedEnergyReport> {
    if rs.len() < 2 || rs.windows(2).any(|w| !(w[1] > w[0])) || !(rs[0] > 0.0) {
        return Err(FracError::InvalidParameter { name: "radii", reason: "need at least two increasing positive radii".into() });
    }
    let (applicable, min_gradient) = certify_gradient_nonnegative(h, &realized_box(v), DEFAULT_SAMPLES_PER_AXIS);
    let regions: Vec<Region> = rs.iter().map(|&r| Region::HalfBall(r)).collect();
    let dir = dirichlet_integrals(v, &regions)?;
    let n = v.grid().n() as f64;
    let start = rs.len() / 2;
    let components = (0..v.m())
        .map(|c| {
            let predicted = n - 2.0 * v.orders().s()[c];
            let pts: Vec<(f64, f64)> = (start..rs.len()).filter(|&k| dir[k][c] > 0.0).map(|k| (rs[k].ln(), dir[k][c].ln())).collect();
            let fitted = if pts.len() >= 2 {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                Some(linear_fit(&xs, &ys).0)
            } else {
                None
            };
            let slack = fitted.map_or(f64::INFINITY, |f| predicted + 0.1 - f);
            ComponentEnergyFit { fitted, predicted, slack, within: slack >= 0.0 }
        })
        .collect();
    Ok(BoundedEnergyReport { applicable, min_gradient, components })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Dichotomy {
    IdenticallyFlat,
    StrictlyOneSigned,
    Mixed,
}

/// Classifies ∂_x v_i over the interior window |x| <= w L, y <= w Y of a
/// one-dimensional slab, away from the truncation corners.
pub fn dichotomy_check(v: &FieldSet) -> Result<Vec<Dichotomy>> {
    let grid = v.grid();
    if grid.boundary_dim() != 1 {
        return Err(FracError::Hypothesis("dichotomy check needs n = 1".into()));
    }
    let nb = grid.boundary_nodes();
    let xmax = INTERIOR_WINDOW * grid.l();
    let ymax = INTERIOR_WINDOW * grid.y_height();
    Ok((0..v.m())
        .map(|c| {
            let d = directional_derivative(v, c, [1.0, 0.0]);
            let inner: Vec<f64> = d
                .iter()
                .enumerate()
                .filter(|(k, _)| grid.x()[k % nb].abs() <= xmax && grid.y()[k / nb] <= ymax)
                .map(|(_, x)| *x)
                .collect();
            let scale = inner.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale <= 1e-10 {
                return Dichotomy::IdenticallyFlat;
            }
            let tol = 1e-8 * scale;
            let pos = inner.iter().any(|x| *x > tol);
            let neg = inner.iter().any(|x| *x < -tol);
            if pos && neg {
                Dichotomy::Mixed
            } else {
                Dichotomy::StrictlyOneSigned
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OddFunction {
    Identity,
    Cube,
}

impl OddFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            OddFunction::Identity => t,
            OddFunction::Cube => t * t * t,
        }
    }
}

/// Both sides of Σ_{ij} h_ij σ_i f(σ_j - σ_i) = -Σ_{i<j} h_ij (σ_j - σ_i) f(σ_j - σ_i)
/// for symmetric h (row-major m×m).
pub fn kterm_identity(hmat: &[f64], sigma: &[f64], f: OddFunction) -> (f64, f64) {
    let m = sigma.len();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..m {
        for j in 0..m {
            lhs += hmat[i * m + j] * sigma[i] * f.eval(sigma[j] - sigma[i]);
            if i < j {
                rhs -= hmat[i * m + j] * (sigma[j] - sigma[i]) * f.eval(sigma[j] - sigma[i]);
            }
        }
    }
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareReduction {
    /// LHS - RHS per cutoff scale.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
}

/// One-dimensional reduction of the geometric Poincaré inequality with
/// ζ_i = |∂_x v_i| η for the dyadic cutoffs:
/// Σ (1/d_i) ∫ y^a |∂_x v_i|² |∇η|² >= Σ_{i≠j} ∫_{y=0} (|∂_x v_i||∂_x v_j| - ∂_x v_i ∂_x v_j) η² H_ij.
pub fn poincare_reduction(v: &FieldSet, h: &NonlinearitySpec) -> Result<PoincareReduction> {
    let grid = v.grid();
    if grid.boundary_dim() != 1 {
        return Err(FracError::Hypothesis("reduction is stated for n = 1".into()));
    }
    let m = v.m();
    let d = v.orders().d();
    let ops = operators(v)?;
    let g: Vec<Vec<f64>> = (0..m).map(|c| directional_derivative(v, c, [1.0, 0.0])).collect();
    let mut hess = vec![0.0; m * m];
    let mut slacks = Vec::new();
    for (_, eta) in cutoffs(v) {
        let mut lhs = 0.0;
        for (c, op) in ops.iter().enumerate() {
            for e in &op.edges {
                let gm = 0.5 * (g[c][e.p].abs() + g[c][e.q].abs());
                lhs += e.c * gm * gm * (eta[e.p] - eta[e.q]).powi(2) / d[c];
            }
        }
        let mut rhs = 0.0;
        for b in 0..grid.boundary_nodes() {
            h.hess_into(&v.boundary_state(b), &mut hess);
            let mb = grid.boundary_measure(b);
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        let (gi, gj) = (g[i][b], g[j][b]);
                        rhs += mb * (gi.abs() * gj.abs() - gi * gj) * eta[b] * eta[b] * hess[i * m + j];
                    }
                }
            }
        }
        slacks.push(lhs - rhs);
    }
    Ok(PoincareReduction { min_slack: slacks.iter().cloned().fold(f64::INFINITY, f64::min), slacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HalfSpaceGrid;
    use crate::operator::{LateralBc, TopBc};
    use crate::orders::FractionalOrders;
    use crate::solver::{newton, ExtensionSystem, SolverOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn dirichlet() -> BoundaryConditions {
        BoundaryConditions::new(LateralBc::Dirichlet, TopBc::Dirichlet)
    }

    fn pn_layer(l: f64, nx: usize) -> (FieldSet, NonlinearitySpec) {
        let g = Arc::new(HalfSpaceGrid::build(l, nx, l, 60, 3.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let h = NonlinearitySpec::peierls_nabarro();
        let exact = FieldSet::from_fn(g.clone(), o.clone(), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan()).unwrap();
        let sys = ExtensionSystem::new(g, o, h.clone(), dirichlet()).unwrap();
        let (v, rep) = newton(&sys, exact, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        (v, h)
    }

    #[test]
    fn layer_is_stable_on_cutoff_family() {
        let (v, h) = pn_layer(10.0, 201);
        let fam = cutoff_family(&v, [1.0, 0.0]);
        let rep = stability_gap(&v, &h, "dx-cutoff", &fam).unwrap();
        assert_eq!(rep.gaps.len(), 2 * CUTOFF_SCALES);
        assert!(rep.quadratic_gap >= -1e-6, "{rep:?}");
        let scaled: Vec<Vec<Vec<f64>>> = fam.iter().map(|z| z.iter().map(|c| c.iter().map(|x| 3.0 * x).collect()).collect()).collect();
        let rep3 = stability_gap(&v, &h, "dx-cutoff", &scaled).unwrap();
        for (a, b) in rep.gaps.iter().zip(&rep3.gaps) {
            assert!((b - 9.0 * a).abs() <= 1e-10 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn support_violation_is_rejected() {
        let (v, h) = pn_layer(10.0, 101);
        let ones = vec![vec![1.0; v.grid().node_count()]];
        assert!(matches!(stability_gap(&v, &h, "ones", &[ones]), Err(FracError::Support(_))));
    }

    #[test]
    fn layer_spectrum_is_nonnegative_with_one_signed_minimizer() {
        let (v, h) = pn_layer(10.0, 201);
        let sp = linearized_spectrum(&v, &h, dirichlet(), 200).unwrap();
        assert!(sp.converged, "{sp:?}");
        assert!(sp.eigenvalues[0] >= -1e-6);
        assert!(sp.sign_consistent);
        let rep = stability_gap(&v, &h, "dx-cutoff", &cutoff_family(&v, [1.0, 0.0])).unwrap().with_spectrum(&sp);
        assert!(rep.to_json().contains("smallest_eigenvalue"));
    }

    #[test]
    fn spectrum_decreases_when_domain_grows() {
        let (small, h) = pn_layer(5.0, 101);
        let (large, _) = pn_layer(10.0, 201);
        let a = linearized_spectrum(&small, &h, dirichlet(), 200).unwrap().eigenvalues[0];
        let b = linearized_spectrum(&large, &h, dirichlet(), 200).unwrap().eigenvalues[0];
        assert!(b <= a + 1e-10, "{a} {b}");
    }

    #[test]
    fn well_bottom_spectrum_and_decoupled_union() {
        let g = Arc::new(HalfSpaceGrid::build(5.0, 51, 5.0, 30, 2.0, false, 1).unwrap());
        let bc = BoundaryConditions::new(LateralBc::Neumann, TopBc::Neumann);
        let dw = NonlinearitySpec::double_well();
        let mut scalar = Vec::new();
        for s in [0.3, 0.7] {
            let o = FractionalOrders::uniform(1, s).unwrap();
            let v = FieldSet::constant(g.clone(), o.clone(), &[1.0]).unwrap();
            let sp = linearized_spectrum(&v, &dw, bc, 100).unwrap();
            // H''(1) = -2, and constants attain the bound.
            assert!((sp.eigenvalues[0] - 2.0 * o.d()[0]).abs() < 1e-8, "{sp:?}");
            scalar.push(sp.eigenvalues[0]);
        }
        let o = FractionalOrders::new(&[0.3, 0.7]).unwrap();
        let h = NonlinearitySpec::decoupled(&dw, 2).unwrap();
        let v = FieldSet::constant(g, o, &[1.0, 1.0]).unwrap();
        let sp = linearized_spectrum(&v, &h, bc, 100).unwrap();
        assert!((sp.eigenvalues[0] - scalar[0].min(scalar[1])).abs() < 1e-10);
    }

    #[test]
    fn quotient_of_kernel_direction_is_constant() {
        let (v, h) = pn_layer(10.0, 201);
        let phi = FieldSet::new(v.grid_arc().clone(), v.orders().clone(), vec![directional_derivative(&v, 0, [1.0, 0.0])]).unwrap();
        let rep = sigma_residual(&v, &h, &phi, [1.0, 0.0]).unwrap();
        assert!(rep.variance <= 1e-8);
        assert!(rep.interior <= 1e-8 && rep.boundary <= 1e-8, "{} {}", rep.interior, rep.boundary);
    }

    #[test]
    fn sigma_residual_shift_invariant() {
        let (v, h) = pn_layer(10.0, 101);
        let n = v.grid().node_count();
        let phi = FieldSet::new(v.grid_arc().clone(), v.orders().clone(), vec![directional_derivative(&v, 0, [1.0, 0.0])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = sigma.iter().map(|s| s + 2.5).collect();
        let a = sigma_residual_core(&v, &h, &phi, &[sigma]).unwrap();
        let b = sigma_residual_core(&v, &h, &phi, &[shifted]).unwrap();
        assert!((a.interior - b.interior).abs() <= 1e-12 * a.interior.max(1.0));
        assert!((a.boundary - b.boundary).abs() <= 1e-12 * a.boundary.max(1.0));
    }

    #[test]
    fn sigma_needs_nonvanishing_phi() {
        let (v, h) = pn_layer(10.0, 101);
        let mut p = vec![1.0; v.grid().node_count()];
        p[5] = 0.0;
        let phi = FieldSet::new(v.grid_arc().clone(), v.orders().clone(), vec![p]).unwrap();
        assert!(matches!(sigma_residual(&v, &h, &phi, [1.0, 0.0]), Err(FracError::Hypothesis(_))));
    }

    #[test]
    fn growth_class_and_trends() {
        let g = Arc::new(HalfSpaceGrid::build(40.0, 401, 40.0, 60, 3.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let ones = FieldSet::constant(g.clone(), o.clone(), &[1.0]).unwrap();
        let phi = FieldSet::from_fn(g.clone(), o.clone(), |_, x, y| (1.0 + y) / ((1.0 + y).powi(2) + x[0] * x[0])).unwrap();
        let rs = [2.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0];
        assert!(matches!(liouville_growth(&ones, &phi, GrowthFunction::Power(1.0), &rs), Err(FracError::ClassViolation(_))));
        assert!(liouville_growth(&ones, &phi, GrowthFunction::Log, &rs).unwrap().hypothesis_satisfied);
        let linear = FieldSet::from_fn(g, o, |_, x, _| x[0]).unwrap();
        assert!(!liouville_growth(&linear, &ones, GrowthFunction::Log, &rs).unwrap().hypothesis_satisfied);
    }

    #[test]
    fn kterm_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.random_range(2..5);
            let mut hm = vec![0.0; m * m];
            for i in 0..m {
                for j in i..m {
                    let x = if i == j { rng.random_range(-1.0..1.0) } else { rng.random_range(0.0..1.0) };
                    hm[i * m + j] = x;
                    hm[j * m + i] = x;
                }
            }
            let sigma: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            for f in [OddFunction::Identity, OddFunction::Cube] {
                let (l, r) = kterm_identity(&hm, &sigma, f);
                // Diagonal terms vanish since f(0) = 0, so only off-diagonals contribute.
                assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()), "{l} {r}");
                assert!(r <= 1e-14);
            }
        }
    }

    #[test]
    fn dichotomy_classes() {
        let g = Arc::new(HalfSpaceGrid::build(10.0, 101, 10.0, 20, 2.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let flat = FieldSet::constant(g.clone(), o.clone(), &[0.3]).unwrap();
        let mono = FieldSet::from_fn(g.clone(), o.clone(), |_, x, y| (x[0] / (1.0 + y)).atan()).unwrap();
        let wave = FieldSet::from_fn(g, o, |_, x, _| x[0].sin()).unwrap();
        assert_eq!(dichotomy_check(&flat).unwrap(), vec![Dichotomy::IdenticallyFlat]);
        assert_eq!(dichotomy_check(&mono).unwrap(), vec![Dichotomy::StrictlyOneSigned]);
        assert_eq!(dichotomy_check(&wave).unwrap(), vec![Dichotomy::Mixed]);
    }

    #[test]
    fn poincare_reduction_nonnegative_on_layer() {
        let (v, h) = pn_layer(10.0, 201);
        let red = poincare_reduction(&v, &h).unwrap();
        assert!(red.min_slack >= -1e-6, "{red:?}");
    }

    #[test]
    fn bounded_energy_fit() {
        let g = Arc::new(HalfSpaceGrid::build(40.0, 401, 40.0, 60, 3.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let v = FieldSet::from_fn(g.clone(), o.clone(), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan()).unwrap();
        let rep = bounded_energy_check(&v, &NonlinearitySpec::peierls_nabarro(), &[2.0, 4.0, 8.0, 16.0]).unwrap();
        assert!(!rep.applicable);
        let fit = rep.components[0].fitted.unwrap();
        // ∫_{B_R^+}|∇v|² = (4/π) ln R + O(1) for this profile.
        assert!(fit > 0.0 && fit < 0.6, "{fit}");
        let c = FieldSet::constant(g, o, &[0.2]).unwrap();
        let lin = NonlinearitySpec::new(1, vec![crate::nonlinearity::Term::monomial(1.0, &[1])], "linear").unwrap();
        let rep = bounded_energy_check(&c, &lin, &[2.0, 4.0]).unwrap();
        assert!(rep.applicable && rep.components[0].fitted.is_none() && rep.components[0].within);
    }
}
