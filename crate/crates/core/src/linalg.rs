//! Sparse and banded symmetric linear algebra used by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FracError, Result};

/// Symmetric matrix in coordinate form, summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct SymTriplets {
    pub n: usize,
    /// Entries (i, j, v) with i >= j; off-diagonal entries stand for both halves.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymTriplets {
    pub fn new(n: usize) -> Self {
        SymTriplets { n, entries: Vec::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            let (i, j) = if i >= j { (i, j) } else { (j, i) };
            self.entries.push((i, j, v));
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.entries.iter().map(|&(i, j, _)| i - j).max().unwrap_or(0)
    }

    pub fn to_csr(&self) -> Csr {
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, v) in &self.entries {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(full.len());
        let mut vals: Vec<f64> = Vec::with_capacity(full.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in full {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n: self.n, row_ptr, cols, vals }
    }

    pub fn to_band(&self) -> SymBand {
        let mut band = SymBand::zeros(self.n, self.bandwidth());
        for &(i, j, v) in &self.entries {
            band.add(i, j, v);
        }
        band
    }
}

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.cols[k] == i).map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    /// max_i Σ_j |a_ij|, an upper bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.cols[k] == j).map_or(0.0, |k| self.vals[k])
    }
}

/// Lower band of a symmetric matrix; row i keeps columns i-bw..=i contiguously.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBand { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn off(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds v at (i, j) (and implicitly at (j, i)).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry outside band");
        let o = self.off(i, j);
        self.data[o] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.off(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for j in lo..i {
                let a = row[j + self.bw - i];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + row[self.bw] * x[i];
        }
    }

    /// LDLᵀ without pivoting. Fails on a pivot below `rel_tol` times the
    /// largest diagonal magnitude.
    pub fn factor(self, rel_tol: f64) -> Result<LdlBand> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data;
        let scale = (0..n).map(|i| l[i * w + bw].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut t = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let (done, rest) = l.split_at_mut(i * w);
            let row_i = &mut rest[..w];
            // row_i[p + bw - i] holds L(i, p) for p in lo..i once computed.
            for k in lo..i {
                let row_k = &done[k * w..(k + 1) * w];
                let plo = lo.max(k.saturating_sub(bw));
                let mut s = row_i[k + bw - i];
                for p in plo..k {
                    s -= t[p + bw - i] * row_k[p + bw - k];
                }
                t[k + bw - i] = s;
                row_i[k + bw - i] = s / row_k[bw];
            }
            let mut d = row_i[bw];
            for p in lo..i {
                d -= t[p + bw - i] * row_i[p + bw - i];
            }
            if !(d.abs() > rel_tol * scale) {
                return Err(FracError::JacobianBreakdown { row: i, pivot: d });
            }
            row_i[bw] = d;
        }
        Ok(LdlBand { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct LdlBand {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl LdlBand {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            let mut s = x[i];
            for p in lo..i {
                s -= row[p + bw - i] * x[p];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            let xi = x[i];
            for p in lo..i {
                x[p] -= row[p + bw - i] * xi;
            }
        }
        x
    }

    /// Number of negative pivots, which equals the number of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        (0..self.n).filter(|&i| self.l[i * (self.bw + 1) + self.bw] < 0.0).count()
    }
}

/// Thomas algorithm for a symmetric tridiagonal system; `off[k]` couples k and k+1.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64], work: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    rhs[0] /= beta;
    for k in 1..n {
        work[k] = off[k - 1] / beta;
        beta = diag[k] - off[k - 1] * work[k];
        rhs[k] = (rhs[k] - off[k - 1] * rhs[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= work[k + 1] * rhs[k + 1];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// A direction of non-positive curvature was met.
    pub indefinite: bool,
}

/// Preconditioned conjugate gradients; stops when ‖r‖ <= tol·‖b‖.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome { iterations: 0, residual: 0.0, converged: true, indefinite: false };
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt();
    for it in 0..max_iter {
        if res <= tol * bnorm {
            return CgOutcome { iterations: it, residual: res / bnorm, converged: true, indefinite: false };
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome { iterations: it, residual: res / bnorm, converged: false, indefinite: true };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt();
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { iterations: max_iter, residual: res / bnorm, converged: res <= tol * bnorm, indefinite: false }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Ritz values of the iterated operator, ascending.
    pub ritz: Vec<f64>,
    /// Ritz vector for the largest Ritz value.
    pub top_vector: Vec<f64>,
    /// Residual estimate |β_k s_k| for the largest Ritz value.
    pub top_residual: f64,
    pub steps: usize,
}

/// Lanczos with full reorthogonalization for an operator self-adjoint in the
/// semi-inner product ⟨u, v⟩ = Σ w_i u_i v_i.
pub fn lanczos(apply: impl Fn(&[f64]) -> Vec<f64>, weight: &[f64], start: &[f64], steps: usize) -> LanczosResult {
    let n = start.len();
    let ip = |u: &[f64], v: &[f64]| u.iter().zip(v).zip(weight).map(|((a, b), w)| w * a * b).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let norm = ip(start, start).sqrt();
    let mut q: Vec<f64> = start.iter().map(|v| v / norm).collect();
    let mut last_beta = 0.0;
    for _ in 0..steps {
        let mut w = apply(&q);
        let alpha = ip(&w, &q);
        for _pass in 0..2 {
            for b in basis.iter().chain(std::iter::once(&q)) {
                let c = ip(&w, b);
                for i in 0..n {
                    w[i] -= c * b[i];
                }
            }
        }
        alphas.push(alpha);
        basis.push(q);
        let beta = ip(&w, &w).sqrt();
        last_beta = beta;
        if beta < 1e-13 * alpha.abs().max(1e-300) {
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let top = *order.last().unwrap();
    let s = eig.eigenvectors.column(top);
    let mut vec = vec![0.0; n];
    for (c, b) in s.iter().zip(&basis) {
        for i in 0..n {
            vec[i] += c * b[i];
        }
    }
    LanczosResult {
        ritz: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        top_residual: (last_beta * s[k - 1]).abs(),
        top_vector: vec,
        steps: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_1d(n: usize, shift: f64) -> SymTriplets {
        let mut t = SymTriplets::new(n);
        for i in 0..n {
            t.add(i, i, 2.0 + shift);
            if i + 1 < n {
                t.add(i + 1, i, -1.0);
            }
        }
        t
    }

    #[test]
    fn banded_ldl_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let mut t = SymTriplets::new(n);
        for i in 0..n {
            t.add(i, i, 10.0);
            for k in 1..=3 {
                if i + k < n {
                    t.add(i + k, i, rng.random_range(-1.0..1.0));
                }
            }
        }
        let band = t.to_band();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        band.matvec(&x, &mut b);
        let mut b2 = vec![0.0; n];
        t.to_csr().matvec(&x, &mut b2);
        for (p, q) in b.iter().zip(&b2) {
            assert!((p - q).abs() < 1e-13);
        }
        let got = band.clone().factor(1e-14).unwrap().solve(&b);
        for (p, q) in got.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        // Eigenvalues of the Dirichlet second difference are 2 - 2cos(kπ/(n+1)).
        let n = 20;
        let shift = -0.5;
        let expected = (1..=n).filter(|k| 2.0 - 2.0 * (*k as f64 * std::f64::consts::PI / (n + 1) as f64).cos() + shift < 0.0).count();
        let f = laplace_1d(n, shift).to_band().factor(1e-14).unwrap();
        assert_eq!(f.negative_pivots(), expected);
        assert!(expected > 0);
    }

    #[test]
    fn singular_pivot_reported() {
        let mut t = SymTriplets::new(2);
        t.add(0, 0, 1.0);
        t.add(1, 0, 1.0);
        t.add(1, 1, 1.0);
        assert!(matches!(t.to_band().factor(1e-12), Err(FracError::JacobianBreakdown { row: 1, .. })));
    }

    #[test]
    fn tridiagonal_matches_band() {
        let n = 15;
        let t = laplace_1d(n, 0.1);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let want = t.to_band().factor(1e-14).unwrap().solve(&rhs);
        let mut got = rhs.clone();
        let mut work = vec![0.0; n];
        solve_tridiagonal(&vec![2.1; n], &vec![-1.0; n - 1], &mut got, &mut work);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_converges() {
        let n = 100;
        let a = laplace_1d(n, 0.01).to_csr();
        let d = a.diag();
        let b: Vec<f64> = (0..n).map(|i| (0.1 * i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let out = pcg(|u, v| a.matvec(u, v), |r, z| z.iter_mut().zip(r).zip(&d).for_each(|((z, r), d)| *z = r / d), &b, &mut x, 1e-12, 1000);
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-9));
    }

    #[test]
    fn lanczos_extreme_eigenvalue() {
        let n = 50;
        let a = laplace_1d(n, 0.0).to_csr();
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        let res = lanczos(
            |u| {
                let mut v = vec![0.0; n];
                a.matvec(u, &mut v);
                v
            },
            &vec![1.0; n],
            &start,
            50,
        );
        let exact = 2.0 - 2.0 * (n as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
        assert!((res.ritz.last().unwrap() - exact).abs() < 1e-10);
    }
}
