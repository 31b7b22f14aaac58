use serde::Serialize;

use super::{boundary_h, csv_table, dirichlet_integrals, linear_fit};
use crate::error::{FracError, Result};
use crate::field::FieldSet;
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{quadrature_rule, Region};

/// E_R over a list of radii with growth fits on the upper half of the range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyProfile {
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    /// Slope of log E_R against log R.
    pub exponent: f64,
    /// exp(intercept) of the same fit.
    pub coefficient: f64,
    pub fit_residual: f64,
    /// Slope of log E_R against log log R.
    pub loglog_exponent: f64,
    /// max/min - 1 of E_R / log R over the fitted range.
    pub log_ratio_variation: f64,
    /// Some E_R in the fitted range were not positive and were skipped.
    pub excluded_nonpositive: bool,
}

impl EnergyProfile {
    pub fn to_csv(&self, meta: &[(&str, String)]) -> String {
        let mut meta = meta.to_vec();
        meta.push(("exponent", super::fmt_f64(self.exponent)));
        meta.push(("log_ratio_variation", super::fmt_f64(self.log_ratio_variation)));
        csv_table(&meta, &["R", "E_R"], self.r.iter().zip(&self.e).map(|(r, e)| vec![*r, *e]))
    }
}

fn energies(v: &FieldSet, h: &NonlinearitySpec, rs: &[f64]) -> Result<Vec<f64>> {
    let regions: Vec<Region> = rs.iter().map(|&r| Region::Cylinder(r)).collect();
    let dir = dirichlet_integrals(v, &regions)?;
    let hb = boundary_h(v, h)?;
    let d = v.orders().d();
    rs.iter()
        .zip(dir)
        .map(|(&r, dc)| {
            let pot = quadrature_rule(v.grid(), 0.0, Region::Boundary(Some(r)))?.apply(&hb)?;
            Ok(dc.iter().zip(d).map(|(x, dd)| x / (2.0 * dd)).sum::<f64>() - pot)
        })
        .collect()
}

/// E_R = Σ_i (1/2d_i) ∫_{C_R} y^{a_i}|∇v_i|² - ∫_{B_R} H(v(·,0)).
pub fn energy(v: &FieldSet, h: &NonlinearitySpec, r: f64) -> Result<f64> {
    Ok(energies(v, h, &[r])?[0])
}

pub fn energy_scan(v: &FieldSet, h: &NonlinearitySpec, rs: &[f64]) -> Result<EnergyProfile> {
    if rs.len() < 2 || rs.windows(2).any(|w| !(w[1] > w[0])) || rs[0] <= 1.0 {
        return Err(FracError::InvalidParameter { name: "radii", reason: "need at least two increasing radii > 1".into() });
    }
    let e = energies(v, h, rs)?;
    let start = rs.len() / 2;
    let mut lx = Vec::new();
    let mut llx = Vec::new();
    let mut ly = Vec::new();
    let mut ratios = Vec::new();
    let mut excluded = false;
    for k in start..rs.len() {
        if e[k] > 0.0 {
            lx.push(rs[k].ln());
            llx.push(rs[k].ln().ln());
            ly.push(e[k].ln());
            ratios.push(e[k] / rs[k].ln());
        } else {
            excluded = true;
        }
    }
    let (exponent, icpt, fit_residual, loglog_exponent, log_ratio_variation) = if lx.len() >= 2 {
        let (p, c, res) = linear_fit(&lx, &ly);
        let (q, _, _) = linear_fit(&llx, &ly);
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        (p, c, res, q, hi / lo - 1.0)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(EnergyProfile {
        r: rs.to_vec(),
        e,
        exponent,
        coefficient: icpt.exp(),
        fit_residual,
        loglog_exponent,
        log_ratio_variation,
        excluded_nonpositive: excluded,
    })
}
