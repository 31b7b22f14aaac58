//! Finite-volume discretization of v ↦ -div(y^a ∇v) on a half-space grid.
//!
//! Nodes carry control volumes cut from the tensor grid. A vertical face
//! between y_j and y_{j+1} gets the coefficient X / ∫ y^{-a} dy over the
//! cell, which is exact for the one-dimensional solutions 1 and y^{1-a} of
//! (y^a v')' = 0; horizontal faces carry ∫ y^a over the control interval.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::HalfSpaceGrid;
use crate::quadrature::check_weight;
use crate::special::power_moment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LateralBc {
    Dirichlet,
    Neumann,
    /// x = -L and x = L identified (boundary_dim 1, non-radial).
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopBc {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub lateral: LateralBc,
    pub top: TopBc,
}

impl BoundaryConditions {
    pub fn new(lateral: LateralBc, top: TopBc) -> Self {
        BoundaryConditions { lateral, top }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub c: f64,
    /// Vertical edge (between consecutive y-levels).
    pub vertical: bool,
}

/// Symmetric positive semidefinite form ½ Σ c (v_p - v_q)² over grid faces.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    pub a: f64,
    pub periodic: bool,
    pub edges: Vec<Edge>,
    pub n_nodes: usize,
}

/// Representative of a node when the lateral ends are identified.
pub fn canonical(grid: &HalfSpaceGrid, periodic: bool, node: usize) -> usize {
    let nb = grid.boundary_nodes();
    if periodic && node % nb == nb - 1 {
        node - (nb - 1)
    } else {
        node
    }
}

/// ∫_{y_j}^{y_{j+1}} y^{-a} dy.
pub fn inverse_weight_moment(grid: &HalfSpaceGrid, a: f64, j: usize) -> f64 {
    power_moment(grid.y()[j], grid.y()[j + 1], -a)
}

/// ∫ y^a over the y-control interval of level j.
pub fn weight_moment(grid: &HalfSpaceGrid, a: f64, j: usize) -> f64 {
    let (lo, hi) = grid.y_cell(j);
    power_moment(lo, hi, a)
}

pub fn assemble_operator(grid: &HalfSpaceGrid, a: f64, lateral: LateralBc) -> Result<WeightedOperator> {
    check_weight(a)?;
    let periodic = lateral == LateralBc::Periodic;
    if periodic && (grid.is_radial() || grid.boundary_dim() != 1) {
        return Err(crate::FracError::InvalidParameter {
            name: "lateral",
            reason: "periodic truncation needs a one-dimensional slab grid".into(),
        });
    }
    let nb = grid.boundary_nodes();
    let (nx, ny) = (grid.nx(), grid.ny());
    let h = grid.h();
    let mut edges = Vec::new();
    let mut push = |p: usize, q: usize, c: f64, vertical: bool| {
        let (p, q) = (canonical(grid, periodic, p), canonical(grid, periodic, q));
        edges.push(Edge { p, q, c, vertical });
    };
    for j in 0..=ny {
        let mu = weight_moment(grid, a, j);
        for b in 0..nb {
            if grid.boundary_dim() == 2 {
                let (i1, i2) = (b % nx, b / nx);
                if i1 + 1 < nx {
                    push(grid.idx(b, j), grid.idx(b + 1, j), mu * grid.x_measure(i2) / h, false);
                }
                if i2 + 1 < nx {
                    push(grid.idx(b, j), grid.idx(b + nx, j), mu * grid.x_measure(i1) / h, false);
                }
            } else if b + 1 < nb {
                push(grid.idx(b, j), grid.idx(b + 1, j), mu * grid.x_face_measure(b) / h, false);
            }
            if j < ny {
                let c = grid.boundary_measure(b) / inverse_weight_moment(grid, a, j);
                push(grid.idx(b, j), grid.idx(b, j + 1), c, true);
            }
        }
    }
    Ok(WeightedOperator { a, periodic, edges, n_nodes: grid.node_count() })
}

impl WeightedOperator {
    /// Net outward flux Σ c (v_p - v_q) at every node.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for e in &self.edges {
            let f = e.c * (v[e.p] - v[e.q]);
            out[e.p] += f;
            out[e.q] -= f;
        }
        out
    }

    /// ½ Σ c (v_p - v_q)², the discrete ½∫ y^a |∇v|².
    pub fn energy(&self, v: &[f64]) -> f64 {
        0.5 * self.edges.iter().map(|e| e.c * (v[e.p] - v[e.q]).powi(2)).sum::<f64>()
    }
}

/// Boundary mass per boundary node (control measure of the y = 0 slab),
/// with identified ends merged in periodic mode.
pub fn boundary_mass(grid: &HalfSpaceGrid, lateral: LateralBc) -> Vec<f64> {
    let nb = grid.boundary_nodes();
    let mut m: Vec<f64> = (0..nb).map(|b| grid.boundary_measure(b)).collect();
    if lateral == LateralBc::Periodic {
        m[0] += m[nb - 1];
        m[nb - 1] = 0.0;
    }
    m
}

/// Nodes whose values are prescribed under the given boundary conditions.
pub fn dirichlet_mask(grid: &HalfSpaceGrid, bc: BoundaryConditions) -> Vec<bool> {
    let nb = grid.boundary_nodes();
    let ny = grid.ny();
    (0..grid.node_count())
        .map(|k| {
            let (b, j) = (k % nb, k / nb);
            (bc.lateral == LateralBc::Dirichlet && grid.is_lateral(b)) || (bc.top == TopBc::Dirichlet && j == ny)
        })
        .collect()
}
