//! Solve → check pipeline. Each check wraps one core operation and turns its
//! report into pass/fail criteria plus data files.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use fraclab_core::extension::{ground_state_guess, impose_dirichlet, tanh_profile};
use fraclab_core::functionals::{
    csv_table, decay_checks, energy_scan, fmt_f64, h_monotone_check, hamiltonian_profile, monotonicity_curve, pohozaev_residual,
    radial_hamiltonian, radial_structure_checks, symmetry_diagnostic,
};
use fraclab_core::stability::{
    bounded_energy_check, cutoff_family, dichotomy_check, directional_derivative, liouville_growth, poincare_reduction,
    sigma_residual_with, Dichotomy,
};
use fraclab_core::{
    cross_validate, linearized_spectrum, ExtensionClosure, solve_coupled, stability_gap, FieldSet, FracError, HalfSpaceGrid, LateralBc, LineFunction,
    SolveReport, TailModel,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::NotApplicable => "n/a",
        })
    }
}

/// One thresholded quantity of a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub check: String,
    pub name: String,
    /// None when the observed value is not finite.
    pub observed: Option<f64>,
    pub relation: String,
    pub threshold: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn compare(check: &str, name: &str, observed: f64, relation: &str, threshold: f64) -> Criterion {
    let ok = match relation {
        "<=" => observed <= threshold,
        ">=" => observed >= threshold,
        "<" => observed < threshold,
        _ => unreachable!("relation {relation}"),
    };
    Criterion {
        check: check.into(),
        name: name.into(),
        observed: finite(observed),
        relation: relation.into(),
        threshold,
        status: if ok { Status::Pass } else { Status::Fail },
        note: String::new(),
    }
}

fn flag(check: &str, name: &str, ok: bool) -> Criterion {
    compare(check, name, if ok { 1.0 } else { 0.0 }, ">=", 1.0)
}

fn not_applicable(check: &str, name: &str, note: &str) -> Criterion {
    Criterion {
        check: check.into(),
        name: name.into(),
        observed: None,
        relation: "".into(),
        threshold: 0.0,
        status: Status::NotApplicable,
        note: note.into(),
    }
}

fn error_criterion(check: &str, e: &FracError) -> Criterion {
    Criterion {
        check: check.into(),
        name: "error".into(),
        observed: None,
        relation: "".into(),
        threshold: 0.0,
        status: Status::Fail,
        note: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: String,
    pub criteria: Vec<Criterion>,
    /// (file name, contents), written in order into the run directory.
    pub files: Vec<(String, Vec<u8>)>,
}

impl CheckOutcome {
    fn new(check: &str) -> Self {
        CheckOutcome { check: check.into(), criteria: vec![], files: vec![] }
    }

    fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.file(name, text);
    }

    pub fn failed(&self) -> bool {
        self.criteria.iter().any(|c| c.status == Status::Fail)
    }
}

/// Evaluates a closed-form profile on the config's grid.
pub fn profile(cfg: &ExperimentConfig, grid: &Arc<HalfSpaceGrid>, p: Profile) -> Result<FieldSet, FracError> {
    let st = &cfg.setup;
    let orders = cfg.orders.clone();
    let e = st.unit_direction();
    match p {
        Profile::Tanh => tanh_profile(grid.clone(), orders, &st.alpha, &st.beta, st.width, e),
        Profile::Arctan => FieldSet::from_fn(grid.clone(), orders, |c, x, y| {
            let t = (x[0] * e[0] + x[1] * e[1]) / (st.width + y);
            0.5 * (st.alpha[c] + st.beta[c]) + 0.5 * (st.alpha[c] - st.beta[c]) * 2.0 / PI * t.atan()
        }),
        Profile::GroundState => ground_state_guess(grid.clone(), &cfg.orders, &cfg.nonlinearity, st.bc, st.amplitude, st.width),
        Profile::CosineBump => {
            let l = grid.l();
            let g = grid.clone();
            FieldSet::from_fn(grid.clone(), orders, move |_, x, _| {
                let r = if g.boundary_dim() == 2 { x[0].abs().max(x[1].abs()) } else { x[0].abs() };
                st.amplitude * (PI * r / (2.0 * l)).cos()
            })
        }
        Profile::Constant => FieldSet::constant(grid.clone(), orders, &st.alpha),
    }
}

pub fn solve(cfg: &ExperimentConfig) -> Result<(FieldSet, SolveReport), FracError> {
    let grid = Arc::new(HalfSpaceGrid::new(cfg.grid.clone())?);
    let mut init = profile(cfg, &grid, cfg.setup.initial)?;
    if let Some(p) = cfg.setup.dirichlet_data {
        init = impose_dirichlet(&init, &profile(cfg, &grid, p)?, cfg.setup.bc)?;
    }
    solve_coupled(grid, &cfg.orders, &cfg.nonlinearity, cfg.setup.bc, init, &cfg.setup.options)
}

fn trace_csv(v: &FieldSet) -> String {
    let g = v.grid();
    let m = v.m();
    let mut header: Vec<String> = if g.boundary_dim() == 2 { vec!["x1".into(), "x2".into()] } else { vec!["x".into()] };
    header.extend((1..=m).map(|c| format!("v{c}")));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = (0..g.boundary_nodes()).map(|b| {
        let x = g.bcoord(b);
        let mut row = if g.boundary_dim() == 2 { vec![x[0], x[1]] } else { vec![x[0]] };
        row.extend((0..m).map(|c| v.trace(c)[b]));
        row
    });
    csv_table(&[], &header, rows)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    report: &'a SolveReport,
    trace_error: Option<f64>,
}

/// Criteria and files for the solve itself.
pub fn solve_outcome(cfg: &ExperimentConfig, result: &Result<(FieldSet, SolveReport), FracError>) -> CheckOutcome {
    let mut out = CheckOutcome::new("solve");
    match result {
        Err(e) => out.criteria.push(error_criterion("solve", e)),
        Ok((v, report)) => {
            out.criteria.push(flag("solve", "converged", report.converged));
            out.criteria.push(compare("solve", "final_residual", report.final_residual(), "<=", cfg.setup.options.newton_tol));
            let mut trace_error = None;
            if let Some(p) = cfg.checks.trace_reference {
                match profile(cfg, v.grid_arc(), p) {
                    Ok(r) => {
                        let err = (0..v.m())
                            .flat_map(|c| v.trace(c).iter().zip(r.trace(c)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
                            .fold(0.0, f64::max);
                        trace_error = Some(err);
                        out.criteria.push(compare("solve", "trace_error", err, "<=", cfg.checks.thresholds.trace));
                    }
                    Err(e) => out.criteria.push(error_criterion("solve", &e)),
                }
            }
            out.json("solve.json", &SolveSummary { report, trace_error });
            out.file("trace.csv", trace_csv(v));
            if cfg.output.snapshot {
                out.file("field.flab", v.to_bytes());
            }
        }
    }
    out
}

/// Runs one named check on a converged field.
pub fn run_check(cfg: &ExperimentConfig, v: &FieldSet, name: &str) -> CheckOutcome {
    let mut out = CheckOutcome::new(name);
    if let Err(e) = check_body(cfg, v, name, &mut out) {
        out.criteria.push(error_criterion(name, &e));
    }
    out
}

fn check_body(cfg: &ExperimentConfig, v: &FieldSet, name: &str, out: &mut CheckOutcome) -> Result<(), FracError> {
    let h = &cfg.nonlinearity;
    let t = &cfg.checks.thresholds;
    let rs = &cfg.checks.radii;
    let e = cfg.setup.unit_direction();
    let meta = [("config", cfg.name.clone()), ("check", name.to_string())];
    match name {
        "hamiltonian" | "balance" => {
            let p = hamiltonian_profile(v, h, Some(&cfg.setup.alpha))?;
            if name == "hamiltonian" {
                out.criteria.push(compare(name, "sup_corrected", p.sup_corrected, "<=", t.hamiltonian));
                out.file("hamiltonian.csv", p.to_csv(&meta));
                out.json(
                    "hamiltonian.json",
                    &serde_json::json!({
                        "sup_corrected": p.sup_corrected,
                        "sup_printed": p.sup_printed,
                        "identity_scale": p.identity_scale,
                        "printed_over_scale": p.sup_printed / p.identity_scale,
                        "end_balance": p.end_balance,
                        "derivative_residual": p.derivative_residual,
                        "window": [p.window.0, p.window.1],
                    }),
                );
            } else {
                out.criteria.push(compare(name, "end_balance", p.end_balance, "<=", t.balance));
                out.json("balance.json", &serde_json::json!({ "end_balance": p.end_balance }));
            }
        }
        "radial-hamiltonian" => {
            let r = radial_hamiltonian(v, h)?;
            out.criteria.push(compare(name, "max_up_slope_relative", r.max_up_slope / r.scale, "<=", t.slope));
            out.criteria.push(compare(name, "derivative_residual_relative", r.derivative_residual / r.dissipation_scale, "<=", t.derivative));
            out.file("radial_hamiltonian.csv", r.to_csv(&meta));
            out.json(
                "radial_hamiltonian.json",
                &serde_json::json!({
                    "max_up_slope": r.max_up_slope,
                    "max_up_slope_printed": r.max_up_slope_printed,
                    "scale": r.scale,
                    "derivative_residual": r.derivative_residual,
                    "dissipation_scale": r.dissipation_scale,
                }),
            );
        }
        "monotonicity" => {
            let c = monotonicity_curve(v, h, rs)?;
            if c.applicable {
                out.criteria.push(compare(name, "min_slope_relative", c.min_slope / c.max_abs_i, ">=", -t.slope));
            } else {
                out.criteria.push(not_applicable(name, "min_slope_relative", "H <= 0 not certified on the realized range"));
            }
            out.file("monotonicity.csv", c.to_csv(&meta));
            out.json(
                "monotonicity.json",
                &serde_json::json!({
                    "applicable": c.applicable,
                    "min_slope": c.min_slope,
                    "max_abs_i": c.max_abs_i,
                    "max_h_sampled": c.max_h_sampled,
                    "identity_imbalance": c.identity_imbalance,
                }),
            );
        }
        "energy-scan" => {
            let p = energy_scan(v, h, rs)?;
            let n = v.grid().n() as f64;
            if !cfg.orders.all_equal() {
                out.criteria.push(not_applicable(name, "growth", "growth law stated for equal orders"));
            } else {
                let s = cfg.orders.s()[0];
                if (s - 0.5).abs() < 1e-12 {
                    out.criteria.push(compare(name, "log_ratio_variation", p.log_ratio_variation, "<=", t.log_ratio));
                } else if s < 0.5 {
                    out.criteria.push(compare(name, "exponent_deviation", (p.exponent - (n - 2.0 * s)).abs(), "<=", t.exponent));
                } else {
                    out.criteria.push(compare(name, "exponent", p.exponent, "<=", n - 1.0 + t.exponent));
                }
            }
            out.file("energy.csv", p.to_csv(&meta));
            out.json(
                "energy.json",
                &serde_json::json!({
                    "exponent": p.exponent,
                    "coefficient": p.coefficient,
                    "fit_residual": p.fit_residual,
                    "loglog_exponent": p.loglog_exponent,
                    "log_ratio_variation": p.log_ratio_variation,
                    "excluded_nonpositive": p.excluded_nonpositive,
                }),
            );
        }
        "pohozaev" => {
            let p = pohozaev_residual(v, h, cfg.checks.pohozaev_radius)?;
            out.criteria.push(compare(name, "relative_residual", p.relative(), "<=", t.pohozaev));
            out.json("pohozaev.json", &serde_json::json!({ "radius": cfg.checks.pohozaev_radius, "terms": p, "relative": p.relative() }));
        }
        "stability" => {
            let family = cutoff_family(v, e);
            let r = stability_gap(v, h, "cutoff", &family)?;
            out.criteria.push(compare(name, "quadratic_gap", r.quadratic_gap, ">=", -t.gap));
            out.file("stability.json", r.to_json() + "\n");
        }
        "spectrum" => {
            let s = linearized_spectrum(v, h, cfg.setup.bc, cfg.checks.spectrum_steps)?;
            let lowest = s.eigenvalues.first().copied().unwrap_or(f64::NAN);
            out.criteria.push(compare(name, "smallest_eigenvalue", lowest, ">=", -t.gap));
            out.criteria.push(flag(name, "minimizer_one_signed", s.sign_consistent));
            out.json(
                "spectrum.json",
                &serde_json::json!({
                    "eigenvalues": s.eigenvalues,
                    "residual": s.residual,
                    "steps": s.steps,
                    "converged": s.converged,
                    "sign_consistent": s.sign_consistent,
                    "component_signs": s.component_signs,
                }),
            );
            let g = v.grid();
            let mut header = vec!["x".to_string()];
            header.extend((1..=v.m()).map(|c| format!("phi{c}")));
            let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let rows = (0..g.boundary_nodes()).map(|b| {
                let mut row = vec![g.bradius(b) * if g.bcoord(b)[0] < 0.0 { -1.0 } else { 1.0 }];
                row.extend(s.minimizer.iter().map(|m| m[b]));
                row
            });
            out.file("spectrum_minimizer.csv", csv_table(&meta, &header, rows));
        }
        "sigma" | "growth" => {
            let psi: Vec<Vec<f64>> = (0..v.m()).map(|c| directional_derivative(v, c, e)).collect();
            let phi = FieldSet::new(v.grid_arc().clone(), v.orders().clone(), psi.clone())?;
            let r = sigma_residual_with(v, h, &phi, &psi)?;
            if name == "sigma" {
                out.criteria.push(compare(name, "variance", r.variance, "<=", t.sigma));
                out.json(
                    "sigma.json",
                    &serde_json::json!({
                        "interior": r.interior,
                        "boundary": r.boundary,
                        "scale": r.scale,
                        "variance": r.variance,
                    }),
                );
            } else {
                let sigma = FieldSet::new(v.grid_arc().clone(), v.orders().clone(), r.sigma)?;
                let g = liouville_growth(&sigma, &phi, cfg.checks.growth, rs)?;
                out.criteria.push(flag(name, "hypothesis_satisfied", g.hypothesis_satisfied));
                out.file("growth.csv", g.to_csv(&meta));
            }
        }
        "decay" => {
            let d = decay_checks(v)?;
            let all = [d.grad_x_bound, d.grad_y_bound, d.weighted_flux_bound, d.fiber_energy_tail];
            out.criteria.push(flag(name, "bounds_finite", all.iter().all(|x| x.is_finite())));
            out.json("decay.json", &d);
        }
        "symmetry" => {
            let d = symmetry_diagnostic(v)?;
            let worst = d.iter().map(|x| x.anisotropy).fold(0.0, f64::max);
            out.criteria.push(compare(name, "max_anisotropy", worst, "<=", t.anisotropy));
            let monotone = h_monotone_check(v, h).ok();
            out.json("symmetry.json", &serde_json::json!({ "components": d, "h_monotone": monotone }));
        }
        "structure" => {
            let s = radial_structure_checks(v, h)?;
            out.criteria.push(compare(name, "grad_at_zero", s.grad_at_zero, "<=", t.gradient));
            out.criteria.push(compare(name, "potential_gap", s.potential_gap, "<", 0.0));
            if s.monotone_decreasing.iter().any(|d| *d) {
                out.criteria.push(compare(name, "hessian_sum", s.hessian_sum, "<=", 0.0));
            } else {
                out.criteria.push(not_applicable(name, "hessian_sum", "no component is decreasing"));
            }
            out.json("structure.json", &s);
        }
        "dichotomy" => {
            let d = dichotomy_check(v)?;
            out.criteria.push(flag(name, "flat_or_one_signed", d.iter().all(|x| *x != Dichotomy::Mixed)));
            out.json("dichotomy.json", &d);
        }
        "cross-validate" => {
            let g = v.grid();
            let periodic = cfg.setup.bc.lateral == LateralBc::Periodic;
            let mut rows = Vec::new();
            let mut worst: f64 = 0.0;
            for c in 0..v.m() {
                let mut samples = v.trace(c).to_vec();
                let tail = if periodic {
                    samples.pop();
                    TailModel::Periodic
                } else if cfg.setup.alpha != cfg.setup.beta {
                    TailModel::DecayToLimits { alpha: cfg.setup.alpha[c], beta: cfg.setup.beta[c] }
                } else {
                    TailModel::Constant
                };
                let line = LineFunction::new(g.x()[0], g.h(), samples, tail)?;
                // The solved field is its own far-field data, so the extension
                // of its trace is the solution and the flux is its DtN image.
                let closure = if periodic { None } else { Some(ExtensionClosure::FarField(v.component(c).to_vec())) };
                let x = cross_validate(&line, cfg.orders.s()[c], v.grid_arc().clone(), closure)?;
                let rel = x.pv_vs_dtn / x.scale;
                worst = worst.max(rel);
                rows.push(serde_json::json!({ "component": c, "pv_vs_dtn": x.pv_vs_dtn, "pv_vs_spectral": x.pv_vs_spectral, "scale": x.scale, "window": x.window }));
            }
            out.criteria.push(compare(name, "pv_vs_dtn_relative", worst, "<=", t.cross));
            out.json("cross_validate.json", &rows);
        }
        "bounded-energy" => {
            let r = bounded_energy_check(v, h, rs)?;
            if !r.applicable {
                out.criteria.push(not_applicable(name, "fitted_exponent", "∇H >= 0 not certified on the realized range"));
            } else {
                for (c, f) in r.components.iter().enumerate() {
                    let fitted = f.fitted.unwrap_or(f64::NEG_INFINITY);
                    out.criteria.push(compare(name, &format!("fitted_exponent_{}", c + 1), fitted, "<=", f.predicted + t.exponent));
                }
            }
            out.json("bounded_energy.json", &r);
        }
        "poincare" => {
            let r = poincare_reduction(v, h)?;
            out.criteria.push(compare(name, "min_slack", r.min_slack, ">=", -t.gap));
            out.json("poincare.json", &r);
        }
        other => unreachable!("check `{other}` passed validation"),
    }
    Ok(())
}

/// Runs the configured checks on up to `threads` workers; results come back
/// in config order.
pub fn run_checks(cfg: &ExperimentConfig, v: &FieldSet, threads: usize, progress: impl Fn(&CheckOutcome) + Sync) -> Vec<CheckOutcome> {
    let names = &cfg.checks.run;
    let slots: Vec<Mutex<Option<CheckOutcome>>> = names.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, names.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= names.len() {
                    break;
                }
                let outcome = run_check(cfg, v, &names[k]);
                progress(&outcome);
                *slots[k].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every check ran")).collect()
}

/// Summary line for a criterion, shared by `run` and `report`.
pub fn describe(c: &Criterion) -> String {
    let observed = c.observed.map(fmt_f64).unwrap_or_else(|| "-".into());
    if c.status == Status::NotApplicable || c.relation.is_empty() {
        format!("{:<20} {:<30} {:>24}   {:<4} {}", c.check, c.name, observed, c.status, c.note)
    } else {
        format!("{:<20} {:<30} {:>24} {:>2} {:<10} {}", c.check, c.name, observed, c.relation, fmt_f64(c.threshold), c.status)
    }
}
