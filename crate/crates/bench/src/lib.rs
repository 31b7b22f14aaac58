//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use fraclab_core::{FieldSet, FractionalOrders, HalfSpaceGrid};

/// Exact s = 1/2 Peierls-Nabarro layer (2/π) arctan(x/(1+y)) on a slab grid.
pub fn exact_layer(l: f64, nx: usize, y: f64, ny: usize) -> FieldSet {
    let g = Arc::new(HalfSpaceGrid::build(l, nx, y, ny, 3.0, false, 1).expect("valid grid"));
    FieldSet::from_fn(g, FractionalOrders::uniform(1, 0.5).expect("valid order"), |_, x, y| 2.0 / PI * (x[0] / (1.0 + y)).atan())
        .expect("field on grid")
}
