//! Extension-based numerics for fractional elliptic gradient systems
//! (-Δ)^s u = ∇H(u): weighted half-space grids, a coupled Newton solver for
//! the degenerate extension problem, direct fractional Laplacians, and
//! evaluators for the energy, Hamiltonian, Pohozaev and stability identities.

pub mod error;
pub mod extension;
pub mod field;
pub mod fractional;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod nonlinearity;
pub mod operator;
pub mod orders;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod stability;

pub use error::{FracError, Result};

pub use extension::{dtn, harmonic_extension, ExtensionClosure};
pub use field::FieldSet;
pub use fractional::{cross_validate, frac_lap_pv, frac_lap_spectral, LineFunction, TailModel};
pub use grid::{GridParams, HalfSpaceGrid};
pub use nonlinearity::{check_orientability, HEval, NonlinearitySpec, OrientabilityReport, SampleBox, Term, TermKind};
pub use operator::{assemble_operator, BoundaryConditions, LateralBc, TopBc, WeightedOperator};
pub use orders::FractionalOrders;
pub use stability::{linearized_spectrum, stability_gap, GrowthFunction, Spectrum, StabilityReport};
pub use solver::{newton, solve_coupled, solve_radial, ExtensionSystem, SolveReport, SolverOptions};
pub use quadrature::{quadrature_rule, restrict_to_radius, weighted_integral, QuadratureRule, Region};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
