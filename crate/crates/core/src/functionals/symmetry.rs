use serde::Serialize;

use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{quadrature_rule, Region};

/// Threshold on |∂ v| below which a derivative counts as vanishing.
pub const MONOTONE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryDiagnostic {
    /// Unit vector Γ maximizing the directional-derivative mass.
    pub direction: [f64; 2],
    /// Share of gradient mass orthogonal to Γ; 0 for one-dimensional fields.
    pub anisotropy: f64,
}

/// Per-component principal direction of the weighted structure tensor
/// ∫ y^a ∇_x v ⊗ ∇_x v over the interior of the slab.
pub fn symmetry_diagnostic(v: &FieldSet) -> Result<Vec<SymmetryDiagnostic>> {
    let grid = v.grid();
    if grid.boundary_dim() != 2 {
        return Err(FracError::Hypothesis("symmetry diagnostic needs a two-dimensional boundary".into()));
    }
    let nx = grid.nx();
    let nb = grid.boundary_nodes();
    let h2 = 2.0 * grid.h();
    (0..v.m())
        .map(|c| {
            let vals = v.component(c);
            let rule = quadrature_rule(grid, v.orders().a()[c], Region::Full)?;
            let (mut t11, mut t12, mut t22) = (0.0, 0.0, 0.0);
            for (k, w) in rule.weights.iter().enumerate() {
                let b = k % nb;
                if grid.is_lateral(b) || *w == 0.0 {
                    continue;
                }
                let g1 = (vals[k + 1] - vals[k - 1]) / h2;
                let g2 = (vals[k + nx] - vals[k - nx]) / h2;
                t11 += w * g1 * g1;
                t12 += w * g1 * g2;
                t22 += w * g2 * g2;
            }
            let tr = t11 + t22;
            if tr <= 0.0 {
                return Ok(SymmetryDiagnostic { direction: [1.0, 0.0], anisotropy: 0.0 });
            }
            let disc = ((t11 - t22) * (t11 - t22) + 4.0 * t12 * t12).sqrt();
            let lmin = 0.5 * (tr - disc);
            // Eigenvector of lmax, from whichever row is better conditioned.
            let (mut e1, mut e2) = if (t11 - lmin).abs() >= (t22 - lmin).abs() { (t11 - lmin, t12) } else { (t12, t22 - lmin) };
            let norm = e1.hypot(e2);
            e1 /= norm;
            e2 /= norm;
            if e1 < 0.0 || (e1 == 0.0 && e2 < 0.0) {
                e1 = -e1;
                e2 = -e2;
            }
            Ok(SymmetryDiagnostic { direction: [e1, e2], anisotropy: (lmin / tr).max(0.0) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMonotoneReport {
    /// Sign of ∂_{x_n} v_i (0 when it changes sign or vanishes).
    pub signs: Vec<i8>,
    pub strictly_monotone: bool,
    pub min_abs_derivative: f64,
    /// min over boundary nodes and i ≠ j of H_{u_i u_j} ∂v_i ∂v_j.
    pub min_mixed: f64,
}

/// Checks strict monotonicity of every trace along the last boundary
/// coordinate and the sign of the mixed Hessian terms against it.
pub fn h_monotone_check(v: &FieldSet, h: &NonlinearitySpec) -> Result<HMonotoneReport> {
    let grid = v.grid();
    if h.m() != v.m() {
        return Err(FracError::GridMismatch("potential and field disagree on m".into()));
    }
    let nx = grid.nx();
    let nb = grid.boundary_nodes();
    let stride = if grid.boundary_dim() == 2 { nx } else { 1 };
    let m = v.m();
    let interior: Vec<usize> = (0..nb).filter(|&b| !grid.is_lateral(b)).collect();
    let deriv = |c: usize, b: usize| (v.trace(c)[b + stride] - v.trace(c)[b - stride]) / (2.0 * grid.h());
    let mut signs = vec![0i8; m];
    let mut min_abs = f64::INFINITY;
    for (c, sg) in signs.iter_mut().enumerate() {
        let (mut pos, mut neg) = (true, true);
        for &b in &interior {
            let d = deriv(c, b);
            min_abs = min_abs.min(d.abs());
            pos &= d > MONOTONE_TOL;
            neg &= d < -MONOTONE_TOL;
        }
        *sg = if pos { 1 } else if neg { -1 } else { 0 };
    }
    let mut hess = vec![0.0; m * m];
    let mut min_mixed = f64::INFINITY;
    for &b in &interior {
        h.hess_into(&v.boundary_state(b), &mut hess);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    min_mixed = min_mixed.min(hess[i * m + j] * deriv(i, b) * deriv(j, b));
                }
            }
        }
    }
    Ok(HMonotoneReport {
        strictly_monotone: signs.iter().all(|s| *s != 0),
        signs,
        min_abs_derivative: min_abs,
        min_mixed: if m == 1 { 0.0 } else { min_mixed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridParams, HalfSpaceGrid};
    use crate::orders::FractionalOrders;
    use std::sync::Arc;

    fn grid() -> Arc<HalfSpaceGrid> {
        let p = GridParams { l: 5.0, nx: 41, y_height: 5.0, ny: 12, grading: 2.0, radial: false, ambient_n: 2, boundary_dim: 2 };
        Arc::new(HalfSpaceGrid::new(p).unwrap())
    }

    fn profile(t: f64, y: f64) -> f64 {
        (t / (1.0 + y)).tanh()
    }

    #[test]
    fn axis_aligned_and_diagonal() {
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let v = FieldSet::from_fn(grid(), o.clone(), |_, x, y| profile(x[0], y)).unwrap();
        let d = &symmetry_diagnostic(&v).unwrap()[0];
        assert_eq!(d.direction, [1.0, 0.0]);
        assert_eq!(d.anisotropy, 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = FieldSet::from_fn(grid(), o.clone(), |_, x, y| profile((x[0] + x[1]) * r, y)).unwrap();
        let d = &symmetry_diagnostic(&v).unwrap()[0];
        assert!(d.anisotropy <= 1e-10);
        let angle = (d.direction[0] * r + d.direction[1] * r).clamp(-1.0, 1.0).acos();
        assert!(angle <= 1e-6);
        let c = FieldSet::constant(grid(), o, &[2.0]).unwrap();
        assert_eq!(symmetry_diagnostic(&c).unwrap()[0].anisotropy, 0.0);
    }

    #[test]
    fn quarter_turn_invariance() {
        let o = FractionalOrders::uniform(1, 0.3).unwrap();
        let f = |x: [f64; 2], y: f64| profile(0.8 * x[0] + 0.3 * x[1], y) + 0.1 * (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
        let v = FieldSet::from_fn(grid(), o.clone(), |_, x, y| f(x, y)).unwrap();
        let w = FieldSet::from_fn(grid(), o, |_, x, y| f([x[1], -x[0]], y)).unwrap();
        let (a, b) = (&symmetry_diagnostic(&v).unwrap()[0], &symmetry_diagnostic(&w).unwrap()[0]);
        assert!((a.anisotropy - b.anisotropy).abs() <= 1e-10);
        assert!(a.anisotropy > 1e-3);
    }

    #[test]
    fn monotone_layer_report() {
        let g = Arc::new(HalfSpaceGrid::build(5.0, 41, 5.0, 12, 2.0, false, 1).unwrap());
        let v = FieldSet::from_fn(g, FractionalOrders::uniform(2, 0.5).unwrap(), |c, x, y| if c == 0 { profile(x[0], y) } else { -profile(x[0], y) }).unwrap();
        let h = NonlinearitySpec::new(
            2,
            vec![crate::nonlinearity::Term::monomial(-1.0, &[1, 1])],
            "mixed",
        )
        .unwrap();
        let r = h_monotone_check(&v, &h).unwrap();
        assert_eq!(r.signs, vec![1, -1]);
        assert!(r.strictly_monotone && r.min_mixed > 0.0);
    }
}
