//! Direct evaluation of (-Δ)^s on line data: principal-value quadrature and
//! the Fourier symbol |ξ|^{2s} on periodic samples.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{FracError, Result};
use crate::extension::{dtn, harmonic_extension, ExtensionClosure};
use crate::grid::HalfSpaceGrid;
use crate::special::{extension_constant, pv_kernel_constant, power_moment};

/// Fraction of the domain length excluded at each end of a non-periodic line.
pub const EDGE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailModel {
    /// u continues with its end values.
    Constant,
    /// u tends to `beta` as x → -∞ and `alpha` as x → +∞, with the
    /// deviation decaying like 1/|x| and matched to the end samples.
    DecayToLimits { alpha: f64, beta: f64 },
    /// Samples cover one period; the node after the last is the first.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFunction {
    pub x0: f64,
    pub h: f64,
    pub samples: Vec<f64>,
    pub tail: TailModel,
}

impl LineFunction {
    pub fn new(x0: f64, h: f64, samples: Vec<f64>, tail: TailModel) -> Result<Self> {
        if !(h > 0.0) || samples.len() < 3 {
            return Err(FracError::InvalidParameter { name: "line", reason: "need h > 0 and at least 3 samples".into() });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(FracError::Malformed("line samples must be finite".into()));
        }
        if let TailModel::DecayToLimits { alpha, beta } = tail {
            if !alpha.is_finite() || !beta.is_finite() {
                return Err(FracError::Malformed("tail limits must be finite".into()));
            }
        }
        Ok(LineFunction { x0, h, samples, tail })
    }

    /// Samples f on the x-nodes of a grid (the period is 2L when periodic,
    /// dropping the duplicated last node).
    pub fn from_grid(grid: &HalfSpaceGrid, f: impl Fn(f64) -> f64, tail: TailModel) -> Result<Self> {
        let xs = grid.x();
        let n = if tail == TailModel::Periodic { xs.len() - 1 } else { xs.len() };
        Self::new(xs[0], grid.h(), xs[..n].iter().map(|&x| f(x)).collect(), tail)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    pub fn period(&self) -> f64 {
        self.h * self.samples.len() as f64
    }

    /// Value at node index k, which may lie outside the sampled range.
    fn at(&self, k: i64) -> f64 {
        let n = self.samples.len() as i64;
        if (0..n).contains(&k) {
            return self.samples[k as usize];
        }
        match self.tail {
            TailModel::Periodic => self.samples[k.rem_euclid(n) as usize],
            TailModel::Constant => self.samples[if k < 0 { 0 } else { (n - 1) as usize }],
            TailModel::DecayToLimits { alpha, beta } => {
                let x = self.x0 + k as f64 * self.h;
                let (edge, limit, i) = if k < 0 { (self.x0, beta, 0) } else { (self.x(n as usize - 1), alpha, n as usize - 1) };
                limit + (self.samples[i] - limit) * edge / x
            }
        }
    }

    /// Indices where the principal-value evaluation is considered reliable.
    pub fn reliable_nodes(&self) -> Vec<usize> {
        let n = self.samples.len();
        if self.tail == TailModel::Periodic {
            return (0..n).collect();
        }
        let span = self.h * (n - 1) as f64;
        (0..n).filter(|&i| self.edge_distance(i) >= EDGE_FRACTION * span - 1e-12 * span).collect()
    }

    fn edge_distance(&self, i: usize) -> f64 {
        let n = self.samples.len();
        self.h * i.min(n - 1 - i) as f64
    }

    /// Two-column CSV with the tail model in a header comment.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.tail {
            TailModel::Constant => out.push_str("# tail = constant\n"),
            TailModel::Periodic => out.push_str("# tail = periodic\n"),
            TailModel::DecayToLimits { alpha, beta } => out.push_str(&format!("# tail = decay-to-limits {alpha:?} {beta:?}\n")),
        }
        out.push_str("x,u\n");
        for (i, v) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:?},{:?}\n", self.x(i), v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut tail = None;
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(spec) = rest.strip_prefix("tail =") {
                    let parts: Vec<&str> = spec.split_whitespace().collect();
                    tail = Some(match parts.as_slice() {
                        ["constant"] => TailModel::Constant,
                        ["periodic"] => TailModel::Periodic,
                        ["decay-to-limits", a, b] => TailModel::DecayToLimits {
                            alpha: a.parse().map_err(|_| FracError::Malformed(format!("tail limit `{a}`")))?,
                            beta: b.parse().map_err(|_| FracError::Malformed(format!("tail limit `{b}`")))?,
                        },
                        _ => return Err(FracError::Malformed(format!("unknown tail model `{spec}`"))),
                    });
                }
                continue;
            }
            if line.is_empty() || line == "x,u" {
                continue;
            }
            let (x, u) = line.split_once(',').ok_or_else(|| FracError::Malformed(format!("bad CSV row `{line}`")))?;
            xs.push(x.trim().parse::<f64>().map_err(|e| FracError::Malformed(format!("x `{x}`: {e}")))?);
            us.push(u.trim().parse::<f64>().map_err(|e| FracError::Malformed(format!("u `{u}`: {e}")))?);
        }
        let tail = tail.ok_or_else(|| FracError::Malformed("missing tail model header".into()))?;
        if xs.len() < 3 {
            return Err(FracError::Malformed("too few rows".into()));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * h)).abs() > 1e-9 * h {
                return Err(FracError::Malformed("x-nodes are not uniform".into()));
            }
        }
        Self::new(xs[0], h, us, tail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvResult {
    pub nodes: Vec<usize>,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Bound on the contribution of the modelled decay beyond the data.
    pub tail_bound: f64,
}

/// ∫_{lo}^{hi} p(z) z^{-1-2s} dz for p linear with p(lo) = g0, p(hi) = g1.
fn linear_kernel_moment(lo: f64, hi: f64, g0: f64, g1: f64, e: f64) -> f64 {
    let w = hi - lo;
    let m0 = power_moment(lo, hi, e);
    let m1 = power_moment(lo, hi, e + 1.0);
    // p(z) = g0 + (g1 - g0)(z - lo)/w
    let slope = (g1 - g0) / w;
    (g0 - slope * lo) * m0 + slope * m1
}

/// Σ_{k>=1} (z + kP)^{-p}, summed directly to `terms` and closed by Euler–Maclaurin.
fn periodized_kernel(z: f64, period: f64, p: f64, terms: usize) -> f64 {
    let f = |k: f64| (z + k * period).powf(-p);
    let mut sum: f64 = (1..=terms).map(|k| f(k as f64)).sum();
    let k1 = (terms + 1) as f64;
    let t = z + k1 * period;
    // ∫_{k1}^∞ f + f(k1)/2 - f'(k1)/12
    sum += t.powf(1.0 - p) / ((p - 1.0) * period) + 0.5 * f(k1) + p * period * t.powf(-p - 1.0) / 12.0;
    sum
}

/// (-Δ)^s u at node i by the symmetrized principal-value integral.
pub fn frac_lap_pv_at(u: &LineFunction, s: f64, i: usize) -> Result<(f64, f64)> {
    check_order(s)?;
    let n = u.len();
    if i >= n {
        return Err(FracError::InvalidParameter { name: "node", reason: format!("{i} outside {n} samples") });
    }
    if u.tail != TailModel::Periodic {
        let span = u.h * (n - 1) as f64;
        if u.edge_distance(i) < EDGE_FRACTION * span - 1e-12 * span {
            return Err(FracError::TooCloseToEdge { x: u.x(i) });
        }
    }
    let h = u.h;
    let e = -1.0 - 2.0 * s;
    let ii = i as i64;
    let ui = u.samples[i];
    let g = |k: i64| 2.0 * ui - u.at(ii + k) - u.at(ii - k);
    // Singular core |z| < h: g ≈ -u'' z².
    let upp = (u.at(ii + 1) - 2.0 * ui + u.at(ii - 1)) / (h * h);
    let mut total = -upp * h.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let mut tail_bound = 0.0;
    match u.tail {
        TailModel::Periodic => {
            let nn = n as i64;
            let period = u.period();
            for k in 1..nn {
                total += linear_kernel_moment(k as f64 * h, (k + 1) as f64 * h, g(k), g(k + 1), e);
            }
            for k in 0..=nn {
                let w = if k == 0 || k == nn { 0.5 * h } else { h };
                total += w * g(k) * periodized_kernel(k as f64 * h, period, -e, 400);
            }
        }
        TailModel::Constant | TailModel::DecayToLimits { .. } => {
            // Product integration over the sampled range of the farther side.
            let far = ii.max(n as i64 - 1 - ii);
            for k in 1..far {
                total += linear_kernel_moment(k as f64 * h, (k + 1) as f64 * h, g(k), g(k + 1), e);
            }
            let z = far as f64 * h;
            match u.tail {
                TailModel::Constant => {
                    total += g(far) * z.powf(-2.0 * s) / (2.0 * s);
                }
                TailModel::DecayToLimits { alpha, beta } => {
                    let x = u.x(i);
                    let xr = u.x(n - 1);
                    let xl = u.x0;
                    let cr = (u.samples[n - 1] - alpha) * xr;
                    let cl = (u.samples[0] - beta) * xl;
                    total += (2.0 * ui - alpha - beta) * z.powf(-2.0 * s) / (2.0 * s);
                    // ∫_z^∞ [c_r/(x+t) + c_l/(x-t)] t^{-1-2s} dt by the series in x/t.
                    let q = x / z;
                    let mut series = 0.0;
                    let mut qk = 1.0;
                    for k in 0..200 {
                        let m = z.powf(-1.0 - 2.0 * s) / (1.0 + 2.0 * s + k as f64);
                        // 1/(x+t) = Σ (-x)^k / t^{k+1}; 1/(x-t) = -Σ x^k / t^{k+1}.
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        let term = (cr * sign - cl) * qk * m;
                        series += term;
                        if term.abs() < 1e-17 * series.abs().max(1e-300) {
                            break;
                        }
                        qk *= q;
                    }
                    total -= series;
                    tail_bound = (cr.abs() + cl.abs()) * z.powf(-1.0 - 2.0 * s) / ((1.0 + 2.0 * s) * (1.0 - q.abs()));
                }
                TailModel::Periodic => unreachable!(),
            }
        }
    }
    let c = pv_kernel_constant(s);
    Ok((c * total, c * tail_bound))
}

/// (-Δ)^s u at every reliable node.
pub fn frac_lap_pv(u: &LineFunction, s: f64) -> Result<PvResult> {
    check_order(s)?;
    let nodes = u.reliable_nodes();
    let mut values = Vec::with_capacity(nodes.len());
    let mut tail_bound: f64 = 0.0;
    for &i in &nodes {
        let (v, b) = frac_lap_pv_at(u, s, i)?;
        values.push(v);
        tail_bound = tail_bound.max(b);
    }
    Ok(PvResult { x: nodes.iter().map(|&i| u.x(i)).collect(), nodes, values, tail_bound })
}

fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(FracError::InvalidOrder { index: 0, value: s });
    }
    Ok(())
}

/// Multiplies the discrete Fourier coefficients by |2πk/P|^{2s}.
pub fn frac_lap_spectral(samples: &[f64], period: f64, s: f64) -> Result<Vec<f64>> {
    check_order(s)?;
    let n = samples.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(FracError::InvalidParameter { name: "samples", reason: format!("length {n} is not a power of two") });
    }
    if !(period > 0.0) {
        return Err(FracError::InvalidParameter { name: "period", reason: "must be positive".into() });
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *c *= (2.0 * PI * freq.abs() / period).powf(2.0 * s);
    }
    inv.process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub window: Vec<f64>,
    /// sup |PV - spectral| on the window, when the data are periodic with 2^k samples.
    pub pv_vs_spectral: Option<f64>,
    /// sup |d_s·PV - DtN(harmonic extension)| on the window.
    pub pv_vs_dtn: f64,
    /// Largest |d_s·PV| on the window, for scale.
    pub scale: f64,
}

/// Compares the three realizations of (-Δ)^s on the same samples.
///
/// The grid's x-nodes must coincide with the line's nodes (the last node is
/// the periodic image of the first for periodic data).
pub fn cross_validate(u: &LineFunction, s: f64, grid: Arc<HalfSpaceGrid>, closure: Option<ExtensionClosure>) -> Result<CrossValidation> {
    check_order(s)?;
    let periodic = u.tail == TailModel::Periodic;
    let expected = if periodic { u.len() + 1 } else { u.len() };
    if grid.boundary_dim() != 1 || grid.is_radial() || grid.nx() != expected || (grid.x()[0] - u.x0).abs() > 1e-9 * u.h || (grid.h() - u.h).abs() > 1e-9 * u.h {
        return Err(FracError::GridMismatch("grid x-nodes do not match the line samples".into()));
    }
    let pv = frac_lap_pv(u, s)?;
    let spectral = if periodic && u.len().is_power_of_two() { Some(frac_lap_spectral(&u.samples, u.period(), s)?) } else { None };
    let mut trace = u.samples.clone();
    if periodic {
        trace.push(u.samples[0]);
    }
    let closure = closure.unwrap_or(if periodic { ExtensionClosure::Periodic } else { ExtensionClosure::Neumann });
    let v = harmonic_extension(&trace, s, grid, &closure)?;
    let flux = &dtn(&v)?[0];
    let d = extension_constant(s);
    let mut pv_vs_dtn: f64 = 0.0;
    let mut pv_vs_spec: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (k, &i) in pv.nodes.iter().enumerate() {
        pv_vs_dtn = pv_vs_dtn.max((d * pv.values[k] - flux[i]).abs());
        scale = scale.max((d * pv.values[k]).abs());
        if let Some(sp) = &spectral {
            pv_vs_spec = pv_vs_spec.max((pv.values[k] - sp[i]).abs());
        }
    }
    Ok(CrossValidation { window: pv.x, pv_vs_spectral: spectral.map(|_| pv_vs_spec), pv_vs_dtn, scale })
}
