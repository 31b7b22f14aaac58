//! Strict `key = value` experiment configs.
//!
//! A config is a sequence of `[section]` headers, each followed by
//! `key = value` lines; `#` starts a comment. Every key must be known to its
//! section and may appear once, except `term` in [nonlinearity].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use fraclab_core::grid::GridParams;
use fraclab_core::{
    BoundaryConditions, FractionalOrders, GrowthFunction, HalfSpaceGrid, LateralBc, NonlinearitySpec, SolverOptions, Term, TopBc,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("`{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into() }
}

pub const CHECKS: &[&str] = &[
    "solve",
    "hamiltonian",
    "radial-hamiltonian",
    "monotonicity",
    "energy-scan",
    "pohozaev",
    "stability",
    "spectrum",
    "sigma",
    "growth",
    "decay",
    "symmetry",
    "structure",
    "balance",
    "dichotomy",
    "cross-validate",
    "bounded-energy",
    "poincare",
];

const SECTIONS: &[(&str, &[&str])] = &[
    ("orders", &["s"]),
    ("nonlinearity", &["preset", "term", "description"]),
    ("grid", &["L", "nx", "Y", "ny", "grading", "radial", "ambient_n", "boundary_dim"]),
    (
        "solver",
        &[
            "newton_tol",
            "newton_max",
            "krylov_tol",
            "krylov_max",
            "damping",
            "lateral",
            "top",
            "alpha",
            "beta",
            "initial",
            "dirichlet_data",
            "width",
            "direction",
            "amplitude",
        ],
    ),
    (
        "checks",
        &[
            "run",
            "radii",
            "radii_min",
            "radii_max",
            "radii_count",
            "pohozaev_radius",
            "spectrum_steps",
            "growth",
            "trace_reference",
            "trace_tol",
            "hamiltonian_tol",
            "balance_tol",
            "pohozaev_tol",
            "slope_tol",
            "derivative_tol",
            "exponent_tol",
            "log_ratio_tol",
            "gap_tol",
            "sigma_tol",
            "anisotropy_tol",
            "cross_tol",
            "gradient_tol",
        ],
    ),
    ("output", &["dir", "snapshot"]),
];

/// Closed-form fields used as initial guesses, Dirichlet data and references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// mid + half·tanh(x·e / (width + y)).
    Tanh,
    /// mid + half·(2/π) arctan(x·e / (width + y)).
    Arctan,
    /// Petviashvili bump for H'(u) = -λu + homogeneous power.
    GroundState,
    /// amplitude·cos(π|x| / 2L), constant in y.
    CosineBump,
    /// The constant state `alpha`.
    Constant,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "tanh" => Profile::Tanh,
            "arctan" => Profile::Arctan,
            "ground-state" => Profile::GroundState,
            "cosine-bump" => Profile::CosineBump,
            "constant" => Profile::Constant,
            _ => return Err(format!("unknown profile `{s}` (tanh, arctan, ground-state, cosine-bump, constant)")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub options: SolverOptions,
    pub bc: BoundaryConditions,
    /// Limit as x·e → +∞ (layers), or the state of a constant guess.
    pub alpha: Vec<f64>,
    /// Limit as x·e → -∞.
    pub beta: Vec<f64>,
    pub initial: Profile,
    pub dirichlet_data: Option<Profile>,
    pub width: f64,
    /// Layer direction in degrees from the x₁ axis.
    pub direction: f64,
    pub amplitude: f64,
}

impl Setup {
    pub fn unit_direction(&self) -> [f64; 2] {
        let t = self.direction.to_radians();
        if self.direction == 0.0 {
            [1.0, 0.0]
        } else {
            [t.cos(), t.sin()]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub trace: f64,
    pub hamiltonian: f64,
    pub balance: f64,
    pub pohozaev: f64,
    pub slope: f64,
    pub derivative: f64,
    pub exponent: f64,
    pub log_ratio: f64,
    pub gap: f64,
    pub sigma: f64,
    pub anisotropy: f64,
    pub cross: f64,
    pub gradient: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            trace: 5e-3,
            hamiltonian: 1e-3,
            balance: 1e-3,
            pohozaev: 3e-2,
            slope: 1e-6,
            derivative: 1e-2,
            exponent: 0.1,
            log_ratio: 0.2,
            gap: 1e-6,
            sigma: 1e-8,
            anisotropy: 5e-2,
            cross: 1e-2,
            gradient: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecksConfig {
    /// Checks after the solve, in config order.
    pub run: Vec<String>,
    pub radii: Vec<f64>,
    pub pohozaev_radius: f64,
    pub spectrum_steps: usize,
    pub growth: GrowthFunction,
    pub trace_reference: Option<Profile>,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write the solved field as a binary snapshot.
    pub snapshot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub orders: FractionalOrders,
    pub nonlinearity: NonlinearitySpec,
    pub grid: GridParams,
    pub setup: Setup,
    pub checks: ChecksConfig,
    pub output: OutputConfig,
}

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    sections: BTreeMap<&'static str, BTreeMap<&'static str, Vec<Entry>>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<&'static str, BTreeMap<&'static str, Vec<Entry>>> = BTreeMap::new();
        let mut current: Option<(&'static str, &'static [&'static str])> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            if let Some(name) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                let name = name.trim();
                let &(sec, keys) = SECTIONS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| err(format!("[{name}]"), format!("unknown section on line {line}")))?;
                if sections.contains_key(sec) {
                    return Err(err(format!("[{name}]"), format!("section repeated on line {line}")));
                }
                sections.insert(sec, BTreeMap::new());
                current = Some((sec, keys));
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| err(format!("line {line}"), "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let (sec, keys) = current.ok_or_else(|| err(key, format!("line {line} precedes any section header")))?;
            let known = keys.iter().find(|k| **k == key).ok_or_else(|| err(format!("{sec}.{key}"), format!("unknown key on line {line}")))?;
            let slot = sections.get_mut(sec).expect("section registered").entry(known).or_default();
            if !slot.is_empty() && *known != "term" {
                return Err(err(format!("{sec}.{key}"), format!("repeated on line {line}")));
            }
            if value.is_empty() {
                return Err(err(format!("{sec}.{key}"), format!("empty value on line {line}")));
            }
            slot.push(Entry { value: value.to_string(), line });
        }
        Ok(Raw { sections })
    }

    fn all(&self, sec: &str, key: &str) -> &[Entry] {
        self.sections.get(sec).and_then(|s| s.get(key)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn get<T: FromStr>(&self, sec: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.all(sec, key).first() {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|x| err(format!("{sec}.{key}"), format!("line {}: {x}", e.line))),
        }
    }

    fn or<T: FromStr>(&self, sec: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(sec, key)?.unwrap_or(default))
    }

    fn list(&self, sec: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.all(sec, key).first() {
            None => Ok(None),
            Some(e) => e
                .value
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|x| err(format!("{sec}.{key}"), format!("line {}: `{t}`: {x}", e.line))))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn flag(&self, sec: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.all(sec, key).first() {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "on" | "true" | "yes" => Ok(true),
                "off" | "false" | "no" => Ok(false),
                other => Err(err(format!("{sec}.{key}"), format!("line {}: expected on/off, got `{other}`", e.line))),
            },
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err(key, format!("must be positive, got {v}")))
    }
}

fn parse_growth(text: &str) -> Result<GrowthFunction, String> {
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some("log"), None, None) => Ok(GrowthFunction::Log),
        (Some("power"), Some(p), None) => p.parse().map(GrowthFunction::Power).map_err(|e| format!("power exponent: {e}")),
        _ => Err(format!("expected `log` or `power <p>`, got `{text}`")),
    }
}

impl ExperimentConfig {
    /// Parses and validates a config; `name` labels the run.
    pub fn parse(text: &str, name: &str) -> Result<Self, ConfigError> {
        let raw = Raw::parse(text)?;

        let s = raw.list("orders", "s")?.ok_or_else(|| err("orders.s", "required"))?;
        let orders = FractionalOrders::new(&s).map_err(|e| err("orders.s", e.to_string()))?;
        let m = orders.m();

        let preset = match raw.get::<String>("nonlinearity", "preset")?.as_deref() {
            None => None,
            Some("peierls-nabarro") => Some(NonlinearitySpec::peierls_nabarro()),
            Some("double-well") => Some(NonlinearitySpec::double_well()),
            Some(other) => return Err(err("nonlinearity.preset", format!("unknown preset `{other}` (peierls-nabarro, double-well)"))),
        };
        let terms = raw
            .all("nonlinearity", "term")
            .iter()
            .map(|e| e.value.parse::<Term>().map_err(|x| err("nonlinearity.term", format!("line {}: {x}", e.line))))
            .collect::<Result<Vec<_>, _>>()?;
        let description = raw.or("nonlinearity", "description", String::from("configured potential"))?;
        let nonlinearity = match preset {
            Some(p) => {
                let p = if m == 1 { p } else { NonlinearitySpec::decoupled(&p, m).map_err(|e| err("nonlinearity.preset", e.to_string()))? };
                p.plus(&terms).map_err(|e| err("nonlinearity.term", e.to_string()))?
            }
            None if terms.is_empty() => return Err(err("nonlinearity.term", "need a preset or at least one term")),
            None => NonlinearitySpec::new(m, terms, description).map_err(|e| err("nonlinearity.term", e.to_string()))?,
        };

        let d = GridParams::default();
        let grid = GridParams {
            l: raw.or("grid", "L", d.l)?,
            nx: raw.or("grid", "nx", d.nx)?,
            y_height: raw.or("grid", "Y", d.y_height)?,
            ny: raw.or("grid", "ny", d.ny)?,
            grading: raw.or("grid", "grading", d.grading)?,
            radial: raw.flag("grid", "radial", false)?,
            ambient_n: raw.or("grid", "ambient_n", 1)?,
            boundary_dim: raw.or("grid", "boundary_dim", 1)?,
        };
        if let Err(e) = HalfSpaceGrid::new(grid.clone()) {
            let key = match &e {
                fraclab_core::FracError::InvalidParameter { name, .. } => format!("grid.{name}"),
                _ => "grid".into(),
            };
            return Err(err(key, e.to_string()));
        }

        let o = SolverOptions::default();
        let options = SolverOptions {
            newton_tol: positive("solver.newton_tol", raw.or("solver", "newton_tol", o.newton_tol)?)?,
            newton_max: raw.or("solver", "newton_max", o.newton_max)?,
            krylov_tol: positive("solver.krylov_tol", raw.or("solver", "krylov_tol", o.krylov_tol)?)?,
            krylov_max: raw.or("solver", "krylov_max", o.krylov_max)?,
            damping: raw.flag("solver", "damping", o.damping)?,
        };
        let lateral = match raw.or("solver", "lateral", String::from("dirichlet"))?.as_str() {
            "dirichlet" => LateralBc::Dirichlet,
            "neumann" => LateralBc::Neumann,
            "periodic" => LateralBc::Periodic,
            other => return Err(err("solver.lateral", format!("unknown condition `{other}` (dirichlet, neumann, periodic)"))),
        };
        if lateral == LateralBc::Periodic && (grid.radial || grid.boundary_dim != 1) {
            return Err(err("solver.lateral", "periodic truncation needs a one-dimensional slab grid"));
        }
        let top = match raw.or("solver", "top", String::from("neumann"))?.as_str() {
            "dirichlet" => TopBc::Dirichlet,
            "neumann" => TopBc::Neumann,
            other => return Err(err("solver.top", format!("unknown condition `{other}` (dirichlet, neumann)"))),
        };
        let initial: Profile = raw.or("solver", "initial", Profile::Tanh)?;
        let dirichlet_data: Option<Profile> = raw.get("solver", "dirichlet_data")?;
        let trace_reference: Option<Profile> = raw.get("checks", "trace_reference")?;
        let alpha = raw.list("solver", "alpha")?;
        let beta = raw.list("solver", "beta")?;
        let used = [Some(initial), dirichlet_data, trace_reference];
        let needs_alpha = used.iter().flatten().any(|p| matches!(p, Profile::Tanh | Profile::Arctan | Profile::Constant));
        let needs_beta = used.iter().flatten().any(|p| matches!(p, Profile::Tanh | Profile::Arctan));
        for (key, vals, needed) in [("solver.alpha", &alpha, needs_alpha), ("solver.beta", &beta, needs_beta)] {
            match vals {
                Some(v) if v.len() != m => return Err(err(key, format!("need {m} values, got {}", v.len()))),
                None if needed => return Err(err(key, "required by the chosen profiles")),
                _ => {}
            }
        }
        if used.iter().flatten().any(|p| *p == Profile::GroundState) {
            let ok = m == 1 && nonlinearity.linear_plus_power().is_some_and(|(l, p)| l > 0.0 && p >= 2);
            if !ok {
                return Err(err("solver.initial", "ground-state needs a scalar H with H'(u) = -λu + homogeneous power, λ > 0"));
            }
        }
        let setup = Setup {
            options,
            bc: BoundaryConditions::new(lateral, top),
            alpha: alpha.unwrap_or_else(|| vec![0.0; m]),
            beta: beta.unwrap_or_else(|| vec![0.0; m]),
            initial,
            dirichlet_data,
            width: positive("solver.width", raw.or("solver", "width", 1.0)?)?,
            direction: raw.or("solver", "direction", 0.0)?,
            amplitude: raw.or("solver", "amplitude", 1.0)?,
        };
        if grid.boundary_dim == 1 && setup.direction != 0.0 {
            return Err(err("solver.direction", "only meaningful for boundary_dim 2"));
        }

        let run: Vec<String> = match raw.all("checks", "run").first() {
            None => vec![],
            Some(e) => e.value.split_whitespace().map(String::from).collect(),
        };
        for (k, c) in run.iter().enumerate() {
            if !CHECKS.contains(&c.as_str()) {
                return Err(err("checks.run", format!("unknown check `{c}`")));
            }
            if run[..k].contains(c) {
                return Err(err("checks.run", format!("check `{c}` listed twice")));
            }
        }
        let run: Vec<String> = run.into_iter().filter(|c| c != "solve").collect();
        let radii = match (raw.list("checks", "radii")?, raw.get::<f64>("checks", "radii_min")?, raw.get::<f64>("checks", "radii_max")?) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => return Err(err("checks.radii", "give either radii or radii_min/radii_max")),
            (Some(r), None, None) => r,
            (None, Some(lo), Some(hi)) => {
                let n: usize = raw.or("checks", "radii_count", 11)?;
                if n < 2 || !(lo > 0.0) || !(hi > lo) {
                    return Err(err("checks.radii_count", "need radii_count >= 2 and 0 < radii_min < radii_max"));
                }
                (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
            }
            (None, None, None) => vec![],
            _ => return Err(err("checks.radii_max", "radii_min and radii_max go together")),
        };
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !(*r > 0.0)) {
            return Err(err("checks.radii", "must be positive and increasing"));
        }
        let reach = grid.l.min(grid.y_height);
        if radii.last().is_some_and(|r| *r > reach * (1.0 + 1e-12)) {
            return Err(err("checks.radii", format!("largest radius exceeds the grid extent {reach}")));
        }
        let needs_radii = ["radial-hamiltonian", "monotonicity", "energy-scan", "growth", "bounded-energy"];
        if let Some(c) = run.iter().find(|c| needs_radii.contains(&c.as_str())) {
            if radii.len() < 2 {
                return Err(err("checks.radii", format!("check `{c}` needs at least two radii")));
            }
        }
        if run.iter().any(|c| c == "energy-scan") && radii[0] <= 1.0 {
            return Err(err("checks.radii", "energy-scan needs radii > 1"));
        }
        let growth = parse_growth(&raw.or("checks", "growth", String::from("log"))?).map_err(|e| err("checks.growth", e))?;
        growth.check_class().map_err(|e| err("checks.growth", e.to_string()))?;
        let pohozaev_radius = positive("checks.pohozaev_radius", raw.or("checks", "pohozaev_radius", 5.0)?)?;
        if pohozaev_radius > reach {
            return Err(err("checks.pohozaev_radius", format!("exceeds the grid extent {reach}")));
        }
        let t = Thresholds::default();
        let tol = |key: &str, default: f64| -> Result<f64, ConfigError> { positive(&format!("checks.{key}"), raw.or("checks", key, default)?) };
        let thresholds = Thresholds {
            trace: tol("trace_tol", t.trace)?,
            hamiltonian: tol("hamiltonian_tol", t.hamiltonian)?,
            balance: tol("balance_tol", t.balance)?,
            pohozaev: tol("pohozaev_tol", t.pohozaev)?,
            slope: tol("slope_tol", t.slope)?,
            derivative: tol("derivative_tol", t.derivative)?,
            exponent: tol("exponent_tol", t.exponent)?,
            log_ratio: tol("log_ratio_tol", t.log_ratio)?,
            gap: tol("gap_tol", t.gap)?,
            sigma: tol("sigma_tol", t.sigma)?,
            anisotropy: tol("anisotropy_tol", t.anisotropy)?,
            cross: tol("cross_tol", t.cross)?,
            gradient: tol("gradient_tol", t.gradient)?,
        };
        let checks = ChecksConfig {
            run,
            radii,
            pohozaev_radius,
            spectrum_steps: raw.or("checks", "spectrum_steps", 200)?,
            growth,
            trace_reference,
            thresholds,
        };

        let output = OutputConfig { dir: raw.get::<String>("output", "dir")?.map(PathBuf::from), snapshot: raw.flag("output", "snapshot", false)? };

        Ok(ExperimentConfig { name: name.to_string(), orders, nonlinearity, grid, setup, checks, output })
    }
}
