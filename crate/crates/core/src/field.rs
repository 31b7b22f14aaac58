//! Multi-component nodal fields on a half-space grid and their binary snapshot format.

use std::sync::Arc;

use crate::error::{FracError, Result};
use crate::grid::HalfSpaceGrid;
use crate::orders::FractionalOrders;

pub const FLAB_MAGIC: &[u8; 4] = b"FLAB";
pub const FLAB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    grid: Arc<HalfSpaceGrid>,
    orders: FractionalOrders,
    values: Vec<Vec<f64>>,
}

impl FieldSet {
    pub fn new(grid: Arc<HalfSpaceGrid>, orders: FractionalOrders, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != orders.m() {
            return Err(FracError::GridMismatch(format!("{} components for {} orders", values.len(), orders.m())));
        }
        for (c, v) in values.iter().enumerate() {
            grid.check_len(v.len(), "field component")?;
            if let Some(k) = v.iter().position(|x| !x.is_finite()) {
                return Err(FracError::Malformed(format!("component {c} is not finite at node {k}")));
            }
        }
        Ok(FieldSet { grid, orders, values })
    }

    pub fn constant(grid: Arc<HalfSpaceGrid>, orders: FractionalOrders, state: &[f64]) -> Result<Self> {
        let n = grid.node_count();
        let values = state.iter().map(|&c| vec![c; n]).collect();
        Self::new(grid, orders, values)
    }

    /// Samples `f(component, boundary coordinates, y)` at every node.
    pub fn from_fn(grid: Arc<HalfSpaceGrid>, orders: FractionalOrders, f: impl Fn(usize, [f64; 2], f64) -> f64) -> Result<Self> {
        let nb = grid.boundary_nodes();
        let values = (0..orders.m())
            .map(|c| {
                let mut v = vec![0.0; grid.node_count()];
                for (j, &y) in grid.y().iter().enumerate() {
                    for b in 0..nb {
                        v[grid.idx(b, j)] = f(c, grid.bcoord(b), y);
                    }
                }
                v
            })
            .collect();
        Self::new(grid, orders, values)
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn grid(&self) -> &HalfSpaceGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<HalfSpaceGrid> {
        &self.grid
    }

    pub fn orders(&self) -> &FractionalOrders {
        &self.orders
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    #[inline]
    pub fn at(&self, c: usize, b: usize, j: usize) -> f64 {
        self.values[c][self.grid.idx(b, j)]
    }

    /// Boundary trace v_c(·, 0).
    pub fn trace(&self, c: usize) -> &[f64] {
        &self.values[c][..self.grid.boundary_nodes()]
    }

    /// State vector (v_1, …, v_m) at boundary node `b`, y = 0.
    pub fn boundary_state(&self, b: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[b]).collect()
    }

    /// Same field with components relabeled; `perm[k]` is the old index of new component k.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let values = perm.iter().map(|&k| self.values[k].clone()).collect();
        Self::new(self.grid.clone(), self.orders.permuted(perm)?, values)
    }

    /// Snapshot: magic, version, m, Nx, Ny, radial flag, ambient n, orders, then
    /// each component's node values in storage order; little-endian throughout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(32 + 8 * self.m() * (1 + g.node_count()));
        out.extend_from_slice(FLAB_MAGIC);
        for v in [FLAB_VERSION, self.m() as u32, g.nx() as u32, g.ny() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(g.is_radial() as u8);
        out.extend_from_slice(&(g.ambient_n() as u32).to_le_bytes());
        for s in self.orders.s() {
            out.extend_from_slice(&s.to_le_bytes());
        }
        for v in &self.values {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Reads a snapshot against the grid it was computed on. The boundary
    /// dimension is not stored; it is recovered from the payload length.
    pub fn from_bytes(bytes: &[u8], grid: Arc<HalfSpaceGrid>) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != FLAB_MAGIC {
            return Err(FracError::Malformed("snapshot magic is not FLAB".into()));
        }
        let version = r.u32()?;
        if version != FLAB_VERSION {
            return Err(FracError::Malformed(format!("unsupported snapshot version {version}")));
        }
        let m = r.u32()? as usize;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let radial = r.take(1)?[0] != 0;
        let ambient_n = r.u32()? as usize;
        if nx != grid.nx() || ny != grid.ny() || radial != grid.is_radial() || ambient_n != grid.ambient_n() {
            return Err(FracError::GridMismatch(format!(
                "snapshot grid {nx}x{ny} radial={radial} n={ambient_n} does not match the supplied grid"
            )));
        }
        let s = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let remaining = bytes.len() - r.pos;
        let dim = [1u32, 2].into_iter().find(|&d| m * nx.pow(d) * (ny + 1) * 8 == remaining);
        if dim != Some(grid.boundary_dim() as u32) {
            return Err(FracError::GridMismatch(format!("snapshot payload of {remaining} bytes does not fit the grid")));
        }
        let n = grid.node_count();
        let values = (0..m).map(|_| (0..n).map(|_| r.f64()).collect()).collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(grid, FractionalOrders::new(&s)?, values)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FracError::Malformed("snapshot truncated".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FieldSet {
        let g = Arc::new(HalfSpaceGrid::build(2.0, 9, 1.0, 4, 2.0, false, 1).unwrap());
        let o = FractionalOrders::new(&[0.5, 0.25]).unwrap();
        FieldSet::from_fn(g, o, |c, x, y| (c + 1) as f64 * x[0] + y).unwrap()
    }

    #[test]
    fn snapshot_round_trip() {
        let f = sample();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"FLAB");
        let back = FieldSet::from_bytes(&bytes, f.grid_arc().clone()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn snapshot_rejects_mismatch() {
        let f = sample();
        let bytes = f.to_bytes();
        let other = Arc::new(HalfSpaceGrid::build(2.0, 11, 1.0, 4, 2.0, false, 1).unwrap());
        assert!(FieldSet::from_bytes(&bytes, other).is_err());
        assert!(FieldSet::from_bytes(&bytes[..bytes.len() - 1], f.grid_arc().clone()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FieldSet::from_bytes(&bad, f.grid_arc().clone()).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let g = Arc::new(HalfSpaceGrid::build(2.0, 3, 1.0, 2, 1.0, false, 1).unwrap());
        let o = FractionalOrders::uniform(1, 0.5).unwrap();
        assert!(FieldSet::new(g, o, vec![vec![f64::NAN; 9]]).is_err());
    }

    #[test]
    fn trace_and_state() {
        let f = sample();
        assert_eq!(f.trace(1)[0], -4.0);
        assert_eq!(f.boundary_state(8), vec![2.0, 4.0]);
    }
}
