use serde::Serialize;

use super::{boundary_h, csv_table, fiber_gradients, require_equal_orders, require_line, INTERIOR_WINDOW};
use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::nonlinearity::NonlinearitySpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianProfile {
    pub x: Vec<f64>,
    /// ½ Σ_i ∫ y^a [(∂_x v_i)² - (∂_y v_i)²] dy.
    pub w: Vec<f64>,
    /// d [H(v(x,0)) - H(α)].
    pub gap: Vec<f64>,
    /// w + gap, which vanishes for solutions.
    pub residual_corrected: Vec<f64>,
    /// w - gap, the residual of the opposite sign convention.
    pub residual_printed: Vec<f64>,
    pub sup_corrected: f64,
    pub sup_printed: f64,
    /// sup |gap| on the window.
    pub identity_scale: f64,
    /// |H(v(L,0)) - H(v(-L,0))|.
    pub end_balance: f64,
    /// sup |∂_x w + d ∂_x H(v(x,0))| on the window, by centered differences.
    pub derivative_residual: f64,
    pub window: (f64, f64),
}

impl HamiltonianProfile {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        csv_table(
            meta,
            &["x", "w", "gap", "residual_corrected", "residual_printed"],
            (0..self.x.len()).map(|k| vec![self.x[k], self.w[k], self.gap[k], self.residual_corrected[k], self.residual_printed[k]]),
        )
    }
}

fn fiber_w(v: &FieldSet) -> Vec<f64> {
    let nx = v.grid().nx();
    let mut w = vec![0.0; nx];
    for c in 0..v.m() {
        let (gx, gy) = fiber_gradients(v, c);
        for k in 0..nx {
            w[k] += 0.5 * (gx[k] - gy[k]);
        }
    }
    w
}

/// Evaluates the layer identity w(x) = -d [H(v(x,0)) - H(α)]; α defaults to
/// the trace at the right end.
pub fn hamiltonian_profile(v: &FieldSet, h: &NonlinearitySpec, alpha: Option<&[f64]>) -> Result<HamiltonianProfile> {
    require_line(v)?;
    require_equal_orders(v)?;
    let grid = v.grid();
    let nx = grid.nx();
    let hb = boundary_h(v, h)?;
    let h_alpha = match alpha {
        Some(a) if a.len() != v.m() => return Err(FracError::Malformed("limit state has the wrong length".into())),
        Some(a) => h.value(a),
        None => hb[nx - 1],
    };
    let d = v.orders().d()[0];
    let w = fiber_w(v);
    let gap: Vec<f64> = hb.iter().map(|x| d * (x - h_alpha)).collect();
    let rc: Vec<f64> = w.iter().zip(&gap).map(|(a, b)| a + b).collect();
    let rp: Vec<f64> = w.iter().zip(&gap).map(|(a, b)| a - b).collect();
    let half = INTERIOR_WINDOW * grid.l();
    let inside: Vec<usize> = (0..nx).filter(|&k| grid.x()[k].abs() <= half + 1e-12).collect();
    let sup = |r: &[f64]| inside.iter().map(|&k| r[k].abs()).fold(0.0, f64::max);
    let hx = grid.h();
    let derivative_residual = inside
        .iter()
        .filter(|&&k| k > 0 && k + 1 < nx)
        .map(|&k| ((w[k + 1] - w[k - 1]) + d * (hb[k + 1] - hb[k - 1])).abs() / (2.0 * hx))
        .fold(0.0, f64::max);
    Ok(HamiltonianProfile {
        x: grid.x().to_vec(),
        sup_corrected: sup(&rc),
        sup_printed: sup(&rp),
        identity_scale: sup(&gap),
        end_balance: (hb[nx - 1] - hb[0]).abs(),
        derivative_residual,
        window: (-half, half),
        w,
        gap,
        residual_corrected: rc,
        residual_printed: rp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialHamiltonian {
    pub r: Vec<f64>,
    /// Σ_i ∫ y^a [(∂_r v_i)² - (∂_y v_i)²] dy + 2d H(v(r,0)).
    pub curve: Vec<f64>,
    /// Same with -2d H, the opposite sign convention.
    pub curve_printed: Vec<f64>,
    pub max_up_slope: f64,
    pub max_up_slope_printed: f64,
    /// max |curve|.
    pub scale: f64,
    /// sup over r <= w L of |curve' + 2(n-1)/r Σ ∫ y^a (∂_r v_i)²|, away from the truncation.
    pub derivative_residual: f64,
    /// sup of the dissipation term 2(n-1)/r Σ ∫ y^a (∂_r v_i)², for scale.
    pub dissipation_scale: f64,
    /// Which sign convention shows the smaller upward slope relative to its scale.
    pub supported: &'static str,
}

impl RadialHamiltonian {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        csv_table(meta, &["r", "curve", "curve_printed"], (0..self.r.len()).map(|k| vec![self.r[k], self.curve[k], self.curve_printed[k]]))
    }
}

fn max_up(r: &[f64], c: &[f64]) -> f64 {
    r.windows(2).zip(c.windows(2)).map(|(rr, cc)| (cc[1] - cc[0]) / (rr[1] - rr[0])).fold(0.0, f64::max)
}

pub fn radial_hamiltonian(v: &FieldSet, h: &NonlinearitySpec) -> Result<RadialHamiltonian> {
    let grid = v.grid();
    if !grid.is_radial() {
        return Err(FracError::Hypothesis("radial quantity needs a radial grid".into()));
    }
    require_equal_orders(v)?;
    let nx = grid.nx();
    let n = grid.ambient_n() as f64;
    let d = v.orders().d()[0];
    let hb = boundary_h(v, h)?;
    let mut grad = vec![0.0; nx];
    let mut gx_sum = vec![0.0; nx];
    for c in 0..v.m() {
        let (gx, gy) = fiber_gradients(v, c);
        for k in 0..nx {
            grad[k] += gx[k] - gy[k];
            gx_sum[k] += gx[k];
        }
    }
    let r = grid.x().to_vec();
    let curve: Vec<f64> = (0..nx).map(|k| grad[k] + 2.0 * d * hb[k]).collect();
    let curve_printed: Vec<f64> = (0..nx).map(|k| grad[k] - 2.0 * d * hb[k]).collect();
    let scale = curve.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_p = curve_printed.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut derivative_residual: f64 = 0.0;
    let mut dissipation_scale: f64 = 0.0;
    let rmax = INTERIOR_WINDOW * grid.l();
    for k in (1..nx - 1).filter(|&k| r[k] <= rmax) {
        let diss = 2.0 * (n - 1.0) / r[k] * gx_sum[k];
        let dc = (curve[k + 1] - curve[k - 1]) / (r[k + 1] - r[k - 1]);
        derivative_residual = derivative_residual.max((dc + diss).abs());
        dissipation_scale = dissipation_scale.max(diss.abs());
    }
    let up = max_up(&r, &curve);
    let up_p = max_up(&r, &curve_printed);
    let supported = if up / scale.max(f64::MIN_POSITIVE) <= up_p / scale_p.max(f64::MIN_POSITIVE) { "corrected" } else { "printed" };
    Ok(RadialHamiltonian {
        r,
        curve,
        curve_printed,
        max_up_slope: up,
        max_up_slope_printed: up_p,
        scale,
        derivative_residual,
        dissipation_scale,
        supported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HalfSpaceGrid;
    use crate::nonlinearity::Term;
    use crate::orders::FractionalOrders;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn exact_layer() -> FieldSet {
        let g = Arc::new(HalfSpaceGrid::build(20.0, 801, 2000.0, 160, 4.0, false, 1).unwrap());
        FieldSet::from_fn(g, FractionalOrders::uniform(1, 0.5).unwrap(), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan()).unwrap()
    }

    #[test]
    fn exact_layer_identity() {
        let v = exact_layer();
        let h = NonlinearitySpec::peierls_nabarro();
        let p = hamiltonian_profile(&v, &h, Some(&[1.0])).unwrap();
        for (k, &x) in p.x.iter().enumerate() {
            if x.abs() <= 12.0 {
                let oracle = 2.0 / (PI * PI) / (1.0 + x * x);
                assert!((p.w[k] - oracle).abs() <= 1e-3, "x={x} w={} oracle={oracle}", p.w[k]);
            }
        }
        assert!(p.sup_corrected <= 1e-3, "{}", p.sup_corrected);
        assert!(p.sup_printed >= 1.5 * p.identity_scale);
        assert!(p.end_balance <= 1e-3);
        // Adding a constant to H leaves the residual untouched.
        let shifted = h.plus(&[Term::monomial(0.7, &[0])]).unwrap();
        let q = hamiltonian_profile(&v, &shifted, Some(&[1.0])).unwrap();
        for k in 0..p.x.len() {
            assert!((p.residual_corrected[k] - q.residual_corrected[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_unequal_orders() {
        let g = Arc::new(HalfSpaceGrid::build(5.0, 51, 5.0, 20, 2.0, false, 1).unwrap());
        let v = FieldSet::constant(g, FractionalOrders::new(&[0.3, 0.6]).unwrap(), &[0.0, 0.0]).unwrap();
        let h = NonlinearitySpec::decoupled(&NonlinearitySpec::double_well(), 2).unwrap();
        assert!(matches!(hamiltonian_profile(&v, &h, None), Err(FracError::Hypothesis(_))));
    }

    #[test]
    fn constant_radial_curve_is_flat() {
        let g = Arc::new(HalfSpaceGrid::build(10.0, 51, 10.0, 20, 2.0, true, 2).unwrap());
        let v = FieldSet::constant(g, FractionalOrders::uniform(1, 0.5).unwrap(), &[1.0]).unwrap();
        let r = radial_hamiltonian(&v, &NonlinearitySpec::double_well()).unwrap();
        assert_eq!(r.max_up_slope, 0.0);
        assert!(r.derivative_residual < 1e-14);
    }
}
