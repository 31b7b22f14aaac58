//! Truncated tensor grids on the extension half-space with graded y-nodes.

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::special::sphere_measure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Half-width of the x-range, or radial extent in radial mode.
    pub l: f64,
    pub nx: usize,
    pub y_height: f64,
    pub ny: usize,
    pub grading: f64,
    pub radial: bool,
    pub ambient_n: usize,
    pub boundary_dim: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { l: 20.0, nx: 801, y_height: 10.0, ny: 120, grading: 3.0, radial: false, ambient_n: 1, boundary_dim: 1 }
    }
}

/// Tensor grid: `nx^boundary_dim` boundary nodes times `ny + 1` y-levels.
///
/// Node storage is row-major with y outermost: node `(b, j)` lives at
/// `j * boundary_nodes + b`, and in two boundary dimensions
/// `b = i2 * nx + i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceGrid {
    params: GridParams,
    x: Vec<f64>,
    y: Vec<f64>,
    h: f64,
}

/// Largest boundary-dim 2 grid accepted.
pub const MAX_NX_2D: usize = 129;
pub const MAX_NY_2D: usize = 60;

impl HalfSpaceGrid {
    pub fn new(params: GridParams) -> Result<Self> {
        let p = &params;
        if !(p.l > 0.0 && p.l.is_finite()) {
            return Err(FracError::InvalidParameter { name: "L", reason: format!("must be positive, got {}", p.l) });
        }
        if p.nx < 3 || p.nx % 2 == 0 {
            return Err(FracError::InvalidParameter { name: "nx", reason: format!("must be odd and >= 3, got {}", p.nx) });
        }
        if !(p.y_height > 0.0 && p.y_height.is_finite()) {
            return Err(FracError::InvalidParameter { name: "Y", reason: format!("must be positive, got {}", p.y_height) });
        }
        if p.ny < 2 {
            return Err(FracError::InvalidParameter { name: "ny", reason: format!("must be >= 2, got {}", p.ny) });
        }
        if !(p.grading >= 1.0 && p.grading.is_finite()) {
            return Err(FracError::InvalidParameter { name: "grading", reason: format!("must be >= 1, got {}", p.grading) });
        }
        if p.boundary_dim != 1 && p.boundary_dim != 2 {
            return Err(FracError::InvalidParameter { name: "boundary_dim", reason: "must be 1 or 2".into() });
        }
        if p.radial && p.boundary_dim != 1 {
            return Err(FracError::InvalidParameter { name: "boundary_dim", reason: "radial grids have boundary_dim 1".into() });
        }
        if p.ambient_n == 0 {
            return Err(FracError::InvalidParameter { name: "ambient_n", reason: "must be >= 1".into() });
        }
        if p.boundary_dim == 2 && (p.nx > MAX_NX_2D || p.ny > MAX_NY_2D) {
            return Err(FracError::ScopeLimit(format!(
                "boundary_dim 2 grids are capped at {MAX_NX_2D}x{MAX_NX_2D}x{MAX_NY_2D}"
            )));
        }
        let (x0, x1) = if p.radial { (0.0, p.l) } else { (-p.l, p.l) };
        let h = (x1 - x0) / (p.nx - 1) as f64;
        let x = (0..p.nx)
            .map(|i| if i == p.nx - 1 { x1 } else { x0 + i as f64 * h })
            .collect();
        let y = (0..=p.ny)
            .map(|j| p.y_height * (j as f64 / p.ny as f64).powf(p.grading))
            .collect();
        Ok(HalfSpaceGrid { params, x, y, h })
    }

    /// One boundary dimension (slab or radial).
    pub fn build(l: f64, nx: usize, y_height: f64, ny: usize, grading: f64, radial: bool, ambient_n: usize) -> Result<Self> {
        Self::new(GridParams { l, nx, y_height, ny, grading, radial, ambient_n, boundary_dim: 1 })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.params.nx
    }

    pub fn ny(&self) -> usize {
        self.params.ny
    }

    pub fn l(&self) -> f64 {
        self.params.l
    }

    pub fn y_height(&self) -> f64 {
        self.params.y_height
    }

    pub fn is_radial(&self) -> bool {
        self.params.radial
    }

    pub fn boundary_dim(&self) -> usize {
        self.params.boundary_dim
    }

    pub fn ambient_n(&self) -> usize {
        self.params.ambient_n
    }

    /// Dimension n of the boundary R^n represented by this grid.
    pub fn n(&self) -> usize {
        if self.params.radial {
            self.params.ambient_n
        } else {
            self.params.boundary_dim
        }
    }

    pub fn boundary_nodes(&self) -> usize {
        self.params.nx.pow(self.params.boundary_dim as u32)
    }

    pub fn node_count(&self) -> usize {
        self.boundary_nodes() * (self.params.ny + 1)
    }

    #[inline]
    pub fn idx(&self, b: usize, j: usize) -> usize {
        j * self.boundary_nodes() + b
    }

    /// Boundary-node coordinates; the second entry is 0 in one dimension.
    pub fn bcoord(&self, b: usize) -> [f64; 2] {
        let nx = self.params.nx;
        if self.params.boundary_dim == 2 {
            [self.x[b % nx], self.x[b / nx]]
        } else {
            [self.x[b], 0.0]
        }
    }

    /// Distance of a boundary node from the origin (|x| or r).
    pub fn bradius(&self, b: usize) -> f64 {
        let c = self.bcoord(b);
        c[0].hypot(c[1])
    }

    /// Radial center node r = 0 (symmetry condition) in radial mode.
    pub fn is_center(&self, b: usize) -> bool {
        self.params.radial && b == 0
    }

    /// Boundary nodes on the lateral truncation |x_k| = L (r = L radially).
    pub fn is_lateral(&self, b: usize) -> bool {
        let nx = self.params.nx;
        if self.params.radial {
            return b == nx - 1;
        }
        if self.params.boundary_dim == 2 {
            let (i1, i2) = (b % nx, b / nx);
            i1 == 0 || i1 == nx - 1 || i2 == 0 || i2 == nx - 1
        } else {
            b == 0 || b == nx - 1
        }
    }

    /// Density of the boundary measure along x: ω_{n-1} r^{n-1} radially, 1 otherwise.
    pub fn x_density(&self, x: f64) -> f64 {
        if self.params.radial {
            let n = self.params.ambient_n;
            sphere_measure(n) * x.abs().powi(n as i32 - 1)
        } else {
            1.0
        }
    }

    /// Control interval of x-node `i`.
    pub fn x_cell(&self, i: usize) -> (f64, f64) {
        let nx = self.params.nx;
        let lo = if i == 0 { self.x[0] } else { 0.5 * (self.x[i - 1] + self.x[i]) };
        let hi = if i == nx - 1 { self.x[nx - 1] } else { 0.5 * (self.x[i] + self.x[i + 1]) };
        (lo, hi)
    }

    /// Measure of x-control interval `i` clipped to `[lo, hi]` (in r for radial grids).
    pub fn x_measure_clipped(&self, i: usize, lo: f64, hi: f64) -> f64 {
        let (c0, c1) = self.x_cell(i);
        let (a, b) = (c0.max(lo), c1.min(hi));
        if b <= a {
            return 0.0;
        }
        if self.params.radial {
            let n = self.params.ambient_n as i32;
            sphere_measure(self.params.ambient_n) * (b.powi(n) - a.powi(n)) / n as f64
        } else {
            b - a
        }
    }

    pub fn x_measure(&self, i: usize) -> f64 {
        self.x_measure_clipped(i, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Boundary measure of the control cell of boundary node `b`.
    pub fn boundary_measure(&self, b: usize) -> f64 {
        let nx = self.params.nx;
        if self.params.boundary_dim == 2 {
            self.x_measure(b % nx) * self.x_measure(b / nx)
        } else {
            self.x_measure(b)
        }
    }

    /// Measure of the face between x-nodes `i` and `i + 1` (1, or ω r^{n-1}).
    pub fn x_face_measure(&self, i: usize) -> f64 {
        self.x_density(0.5 * (self.x[i] + self.x[i + 1]))
    }

    /// Control interval of y-node `j`.
    pub fn y_cell(&self, j: usize) -> (f64, f64) {
        let ny = self.params.ny;
        let lo = if j == 0 { 0.0 } else { 0.5 * (self.y[j - 1] + self.y[j]) };
        let hi = if j == ny { self.y[ny] } else { 0.5 * (self.y[j] + self.y[j + 1]) };
        (lo, hi)
    }

    /// Checks that samples cover every node.
    pub fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.node_count() {
            return Err(FracError::GridMismatch(format!("{what}: {len} samples for {} nodes", self.node_count())));
        }
        Ok(())
    }

    /// Same grid with a different x-count, y-count, or extents; used for nested-domain studies.
    pub fn with_params(&self, f: impl FnOnce(&mut GridParams)) -> Result<Self> {
        let mut p = self.params.clone();
        f(&mut p);
        Self::new(p)
    }
}
