use serde::Serialize;

use super::{boundary_h, csv_table, dirichlet_integrals, hemisphere_nodes, realized_box, require_equal_orders, sphere_h, Interpolant};
use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::nonlinearity::{certify_nonpositive, NonlinearitySpec, DEFAULT_SAMPLES_PER_AXIS};
use crate::quadrature::{quadrature_rule, Region};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCurve {
    pub r: Vec<f64>,
    /// I(R) = R^{-(n-2s)} [½ Σ ∫_{B_R^+} y^a |∇v_i|² - d ∫_{B_R} H(v(·,0))].
    pub i: Vec<f64>,
    /// Finite-difference dI/dR (centered inside, one-sided at the ends).
    pub slope: Vec<f64>,
    pub min_slope: f64,
    pub max_abs_i: f64,
    /// H <= 0 was certified on the realized range; otherwise the curve is
    /// data only.
    pub applicable: bool,
    pub max_h_sampled: f64,
    /// max over interior radii of |I' R^{n+1-2s} - (R Σ Φ_i - 2s d ∫_{B_R} H)|
    /// relative to the larger of the two bracket terms.
    pub identity_imbalance: f64,
}

impl MonotonicityCurve {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        csv_table(meta, &["R", "I", "slope"], (0..self.r.len()).map(|k| vec![self.r[k], self.i[k], self.slope[k]]))
    }
}

/// Curved-boundary integrals (∫ y^a (∂_ν v_i)², ∫ y^a |∇v_i|²) on ∂⁺B_R per component.
fn sphere_gradients(v: &FieldSet, r: f64) -> Vec<(f64, f64)> {
    let nodes = hemisphere_nodes(v.grid(), r);
    (0..v.m())
        .map(|c| {
            let ip = Interpolant::new(v, c);
            let a = v.orders().a()[c];
            let mut flux = 0.0;
            let mut full = 0.0;
            for (x, y, ds) in &nodes {
                let (_, gx, gy) = ip.eval(*x, *y);
                let dn = (x[0] * gx[0] + x[1] * gx[1] + y * gy) / r;
                let wt = ds * y.powf(a);
                flux += wt * dn * dn;
                full += wt * (gx[0] * gx[0] + gx[1] * gx[1] + gy * gy);
            }
            (flux, full)
        })
        .collect()
}

pub fn monotonicity_curve(v: &FieldSet, h: &NonlinearitySpec, rs: &[f64]) -> Result<MonotonicityCurve> {
    require_equal_orders(v)?;
    if rs.len() < 2 || rs.windows(2).any(|w| !(w[1] > w[0])) || !(rs[0] > 0.0) {
        return Err(FracError::InvalidParameter { name: "radii", reason: "need at least two increasing positive radii".into() });
    }
    let grid = v.grid();
    let n = grid.n() as f64;
    let s = v.orders().s()[0];
    let d = v.orders().d()[0];
    let (applicable, max_h) = certify_nonpositive(h, &realized_box(v), DEFAULT_SAMPLES_PER_AXIS);
    let regions: Vec<Region> = rs.iter().map(|&r| Region::HalfBall(r)).collect();
    let dir = dirichlet_integrals(v, &regions)?;
    let hb = boundary_h(v, h)?;
    let mut pot = Vec::with_capacity(rs.len());
    for &r in rs {
        pot.push(quadrature_rule(grid, 0.0, Region::Boundary(Some(r)))?.apply(&hb)?);
    }
    let i: Vec<f64> = (0..rs.len()).map(|k| rs[k].powf(-(n - 2.0 * s)) * (0.5 * dir[k].iter().sum::<f64>() - d * pot[k])).collect();
    let nr = rs.len();
    let slope: Vec<f64> = (0..nr)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(nr - 1));
            (i[hi] - i[lo]) / (rs[hi] - rs[lo])
        })
        .collect();
    let mut imbalance: f64 = 0.0;
    for k in 1..nr.saturating_sub(1) {
        let r = rs[k];
        let phi: f64 = sphere_gradients(v, r).iter().map(|p| p.0).sum();
        let lhs = slope[k] * r.powf(n + 1.0 - 2.0 * s);
        let (t1, t2) = (r * phi, 2.0 * s * d * pot[k]);
        let scale = t1.abs().max(t2.abs());
        if scale > 0.0 {
            imbalance = imbalance.max((lhs - (t1 - t2)).abs() / scale);
        }
    }
    Ok(MonotonicityCurve {
        min_slope: slope.iter().cloned().fold(f64::INFINITY, f64::min),
        max_abs_i: i.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        r: rs.to_vec(),
        i,
        slope,
        applicable,
        max_h_sampled: max_h,
        identity_imbalance: imbalance,
    })
}

/// Terms of the Pohozaev identity on B_R^+, each component divided by its d_i:
/// Σ (1/d_i)[R Φ_i - (R/2) Ψ_i + (n-2s_i)/2 D_i] + R ∫_{∂B_R} H - n ∫_{B_R} H = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PohozaevTerms {
    pub sphere_flux: f64,
    pub sphere_energy: f64,
    pub bulk: f64,
    pub sphere_potential: f64,
    pub ball_potential: f64,
    pub residual: f64,
    pub dominant: f64,
}

impl PohozaevTerms {
    pub fn relative(&self) -> f64 {
        if self.dominant > 0.0 {
            self.residual / self.dominant
        } else {
            0.0
        }
    }
}

pub fn pohozaev_residual(v: &FieldSet, h: &NonlinearitySpec, r: f64) -> Result<PohozaevTerms> {
    let grid = v.grid();
    let n = grid.n() as f64;
    let dir = dirichlet_integrals(v, &[Region::HalfBall(r)])?.remove(0);
    let hb = boundary_h(v, h)?;
    let ball = quadrature_rule(grid, 0.0, Region::Boundary(Some(r)))?.apply(&hb)?;
    let sph = sphere_gradients(v, r);
    let (mut flux, mut senergy, mut bulk) = (0.0, 0.0, 0.0);
    for c in 0..v.m() {
        let (s, d) = (v.orders().s()[c], v.orders().d()[c]);
        flux += r * sph[c].0 / d;
        senergy -= 0.5 * r * sph[c].1 / d;
        bulk += 0.5 * (n - 2.0 * s) * dir[c] / d;
    }
    let sphere_potential = r * sphere_h(v, h, r);
    let ball_potential = -n * ball;
    let terms = [flux, senergy, bulk, sphere_potential, ball_potential];
    Ok(PohozaevTerms {
        sphere_flux: flux,
        sphere_energy: senergy,
        bulk,
        sphere_potential,
        ball_potential,
        residual: terms.iter().sum::<f64>().abs(),
        dominant: terms.iter().fold(0.0f64, |m, t| m.max(t.abs())),
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

    fn exact(nx: usize, ny: usize) -> FieldSet {
        let g = Arc::new(HalfSpaceGrid::build(10.0, nx, 10.0, ny, 3.0, false, 1).unwrap());
        FieldSet::from_fn(g, FractionalOrders::uniform(1, 0.5).unwrap(), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan()).unwrap()
    }

    #[test]
    fn constant_states() {
        let g = Arc::new(HalfSpaceGrid::build(10.0, 101, 10.0, 30, 2.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        let h = NonlinearitySpec::double_well();
        let v = FieldSet::constant(g.clone(), o.clone(), &[1.0]).unwrap();
        let c = monotonicity_curve(&v, &h, &[1.0, 2.0, 4.0]).unwrap();
        assert!(c.i.iter().all(|x| x.abs() < 1e-14));
        let p = pohozaev_residual(&v, &h, 5.0).unwrap();
        assert!(p.residual < 1e-14);
        let v = FieldSet::constant(g, o, &[0.0]).unwrap();
        let c = monotonicity_curve(&v, &h, &[1.0, 2.0, 4.0]).unwrap();
        // I(R) = -2R H(0) / R^{n-2s} with n = 1, s = ½.
        for (r, i) in c.r.iter().zip(&c.i) {
            assert!((i + 2.0 * r * h.value(&[0.0])).abs() < 1e-12);
        }
        assert!(c.min_slope > 0.0 && c.applicable);
    }

    #[test]
    fn exact_layer_pohozaev() {
        let h = NonlinearitySpec::peierls_nabarro();
        let coarse = pohozaev_residual(&exact(201, 60), &h, 5.0).unwrap();
        let fine = pohozaev_residual(&exact(801, 120), &h, 5.0).unwrap();
        assert!(fine.relative() <= 0.03, "{fine:?}");
        assert!(fine.residual < coarse.residual);
        // Certification fails for the unshifted potential, which is positive somewhere.
        let c = monotonicity_curve(&exact(201, 60), &h, &[1.0, 2.0]).unwrap();
        assert!(c.applicable == (c.max_h_sampled <= 1e-12));
        let shifted = h.plus(&[Term::monomial(-1.0 / (PI * PI), &[0])]).unwrap();
        assert!(monotonicity_curve(&exact(201, 60), &shifted, &[1.0, 2.0]).unwrap().applicable);
    }
}
