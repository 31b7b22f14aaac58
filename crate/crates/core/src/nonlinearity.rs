//! Coupled potentials H: R^m -> R built from monomials and cosines, with
//! exact first and second derivatives, plus sampled sign certificates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};

/// Tolerance on sampled mixed partials when certifying orientability.
pub const ORIENTABILITY_TOL: f64 = 1e-12;
/// Default sample count per axis of the certification box.
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 17;
const MAX_TENSOR_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    /// c · Π u_k^{e_k}
    Monomial,
    /// c · cos(π Σ k_i u_i)
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub kind: TermKind,
    /// Exponents for monomials, frequencies for cosines.
    pub ints: Vec<i64>,
}

impl Term {
    pub fn monomial(coeff: f64, exps: &[i64]) -> Self {
        Term { coeff, kind: TermKind::Monomial, ints: exps.to_vec() }
    }

    pub fn cosine(coeff: f64, freqs: &[i64]) -> Self {
        Term { coeff, kind: TermKind::Cosine, ints: freqs.to_vec() }
    }

    fn degree(&self) -> i64 {
        self.ints.iter().sum()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TermKind::Monomial => "monomial",
            TermKind::Cosine => "cosine",
        };
        write!(f, "{:?} {}", self.coeff, kind)?;
        for k in &self.ints {
            write!(f, " {k}")?;
        }
        Ok(())
    }
}

impl FromStr for Term {
    type Err = FracError;

    /// Parses `<coeff> <kind> <m integers>`.
    fn from_str(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let coeff: f64 = parts
            .next()
            .ok_or_else(|| FracError::Malformed("empty term".into()))?
            .parse()
            .map_err(|e| FracError::Malformed(format!("term coefficient: {e}")))?;
        let kind = match parts.next() {
            Some("monomial") => TermKind::Monomial,
            Some("cosine") => TermKind::Cosine,
            other => {
                return Err(FracError::Malformed(format!("unknown term kind {other:?}")))
            }
        };
        let ints = parts
            .map(|p| p.parse::<i64>().map_err(|e| FracError::Malformed(format!("term index `{p}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if ints.is_empty() {
            return Err(FracError::Malformed("term needs m integers".into()));
        }
        if kind == TermKind::Monomial && ints.iter().any(|&e| e < 0) {
            return Err(FracError::Malformed("negative monomial exponent".into()));
        }
        if !coeff.is_finite() {
            return Err(FracError::Malformed("non-finite coefficient".into()));
        }
        Ok(Term { coeff, kind, ints })
    }
}

/// Value, gradient and Hessian (row-major m×m) of H at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl HEval {
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.grad.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    m: usize,
    terms: Vec<Term>,
    pub description: String,
}

impl NonlinearitySpec {
    pub fn new(m: usize, terms: Vec<Term>, description: impl Into<String>) -> Result<Self> {
        if m == 0 {
            return Err(FracError::Malformed("nonlinearity needs m >= 1".into()));
        }
        for t in &terms {
            if t.ints.len() != m {
                return Err(FracError::Malformed(format!(
                    "term `{t}` has {} integers, expected {m}",
                    t.ints.len()
                )));
            }
        }
        Ok(Self { m, terms, description: description.into() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// H(u) = -(1/π²) cos(π u): the potential whose layer is (2/π) arctan x at s = 1/2.
    pub fn peierls_nabarro() -> Self {
        Self::new(1, vec![Term::cosine(-1.0 / (PI * PI), &[1])], "peierls-nabarro").unwrap()
    }

    /// H(u) = -(1 - u²)²/4, the Allen–Cahn double well with H(±1) = 0.
    pub fn double_well() -> Self {
        Self::new(
            1,
            vec![Term::monomial(-0.25, &[0]), Term::monomial(0.5, &[2]), Term::monomial(-0.25, &[4])],
            "double-well",
        )
        .unwrap()
    }

    /// Sum of independent copies of a scalar potential, one per component.
    pub fn decoupled(scalar: &NonlinearitySpec, m: usize) -> Result<Self> {
        if scalar.m != 1 {
            return Err(FracError::Malformed("decoupled() expects a scalar potential".into()));
        }
        let mut terms = Vec::new();
        for c in 0..m {
            for t in &scalar.terms {
                let mut ints = vec![0; m];
                ints[c] = t.ints[0];
                terms.push(Term { coeff: t.coeff, kind: t.kind, ints });
            }
        }
        Self::new(m, terms, format!("decoupled {}", scalar.description))
    }

    /// Adds terms (same m) to this potential.
    pub fn plus(&self, extra: &[Term]) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(extra);
        Self::new(self.m, terms, self.description.clone())
    }

    /// Relabels components; `perm[k]` is the old index of new component k.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { coeff: t.coeff, kind: t.kind, ints: perm.iter().map(|&k| t.ints[k]).collect() })
            .collect();
        Self::new(self.m, terms, self.description.clone())
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.m {
            return Err(FracError::Malformed(format!("state has length {}, expected {}", u.len(), self.m)));
        }
        Ok(())
    }

    pub fn eval(&self, u: &[f64]) -> Result<HEval> {
        self.check_len(u)?;
        let m = self.m;
        let mut out = HEval { value: 0.0, grad: vec![0.0; m], hess: vec![0.0; m * m] };
        self.accumulate(u, Some(&mut out.grad), Some(&mut out.hess), &mut out.value);
        Ok(out)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let mut v = 0.0;
        self.accumulate(u, None, None, &mut v);
        v
    }

    /// Writes ∇H(u) into `grad`; panics on length mismatch (hot path).
    pub fn grad_into(&self, u: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        self.accumulate(u, Some(grad), None, &mut v);
    }

    /// Writes the Hessian (row-major) into `hess`.
    pub fn hess_into(&self, u: &[f64], hess: &mut [f64]) {
        hess.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        self.accumulate(u, None, Some(hess), &mut v);
    }

    fn accumulate(&self, u: &[f64], mut grad: Option<&mut [f64]>, mut hess: Option<&mut [f64]>, value: &mut f64) {
        let m = self.m;
        assert_eq!(u.len(), m);
        for t in &self.terms {
            match t.kind {
                TermKind::Monomial => {
                    let pw = |k: usize, e: i64| -> f64 { if e <= 0 { 1.0 } else { u[k].powi(e as i32) } };
                    let full: f64 = (0..m).map(|k| pw(k, t.ints[k])).product();
                    *value += t.coeff * full;
                    if grad.is_none() && hess.is_none() {
                        continue;
                    }
                    // Partial products avoid dividing by zero components.
                    let part = |skip: &[usize]| -> f64 {
                        let mut p = 1.0;
                        for k in 0..m {
                            let mut e = t.ints[k];
                            for &s in skip {
                                if s == k {
                                    e -= 1;
                                }
                            }
                            if e < 0 {
                                return 0.0;
                            }
                            p *= pw(k, e);
                        }
                        p
                    };
                    if let Some(g) = grad.as_deref_mut() {
                        for i in 0..m {
                            let e = t.ints[i];
                            if e > 0 {
                                g[i] += t.coeff * e as f64 * part(&[i]);
                            }
                        }
                    }
                    if let Some(h) = hess.as_deref_mut() {
                        for i in 0..m {
                            for j in i..m {
                                let (ei, ej) = (t.ints[i], t.ints[j]);
                                let c = if i == j {
                                    (ei * (ei - 1)) as f64
                                } else {
                                    (ei * ej) as f64
                                };
                                if c != 0.0 {
                                    let val = t.coeff * c * part(&[i, j]);
                                    h[i * m + j] += val;
                                    if i != j {
                                        h[j * m + i] += val;
                                    }
                                }
                            }
                        }
                    }
                }
                TermKind::Cosine => {
                    let phase: f64 = PI * (0..m).map(|k| t.ints[k] as f64 * u[k]).sum::<f64>();
                    let (sn, cs) = phase.sin_cos();
                    *value += t.coeff * cs;
                    if let Some(g) = grad.as_deref_mut() {
                        for i in 0..m {
                            g[i] -= t.coeff * sn * PI * t.ints[i] as f64;
                        }
                    }
                    if let Some(h) = hess.as_deref_mut() {
                        for i in 0..m {
                            for j in i..m {
                                let val = -t.coeff * cs * PI * PI * (t.ints[i] * t.ints[j]) as f64;
                                h[i * m + j] += val;
                                if i != j {
                                    h[j * m + i] += val;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Splits H' into a linear part and a single homogeneous power, if the
    /// potential is scalar and of the form c2 u² + Σ c_p u^{p+1} with one p.
    /// Returns (λ, p) with H'(u) = -λ u + N(u), N homogeneous of degree p.
    pub fn linear_plus_power(&self) -> Option<(f64, i64)> {
        if self.m != 1 {
            return None;
        }
        let mut lambda = 0.0;
        let mut power = None;
        for t in &self.terms {
            if t.kind != TermKind::Monomial {
                return None;
            }
            match t.degree() {
                0 => {}
                1 => return None,
                2 => lambda -= 2.0 * t.coeff,
                d => {
                    if power.is_some_and(|p| p != d - 1) {
                        return None;
                    }
                    power = Some(d - 1);
                }
            }
        }
        power.map(|p| (lambda, p))
    }

    /// Config-file lines, one per term.
    pub fn to_config_lines(&self) -> Vec<String> {
        self.terms.iter().map(|t| format!("term = {t}")).collect()
    }
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn cube(m: usize, b: f64) -> Self {
        SampleBox { lo: vec![-b; m], hi: vec![b; m] }
    }

    pub fn m(&self) -> usize {
        self.lo.len()
    }

    /// Deterministic sample points: a tensor grid when affordable, a Halton
    /// sequence otherwise.
    pub fn samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let m = self.m();
        let total = (per_axis as f64).powi(m as i32);
        let at = |k: usize, t: f64| self.lo[k] + t * (self.hi[k] - self.lo[k]);
        if total <= MAX_TENSOR_SAMPLES as f64 {
            let total = total as usize;
            (0..total)
                .map(|mut idx| {
                    (0..m)
                        .map(|k| {
                            let r = idx % per_axis;
                            idx /= per_axis;
                            at(k, r as f64 / (per_axis - 1) as f64)
                        })
                        .collect()
                })
                .collect()
        } else {
            const PRIMES: [u64; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];
            (1..=MAX_TENSOR_SAMPLES as u64)
                .map(|i| (0..m).map(|k| at(k, radical_inverse(i, PRIMES[k]))).collect())
                .collect()
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0 / base as f64;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrientabilityReport {
    pub orientable: bool,
    /// Certifying sign vector, or the least-violating one when not orientable.
    pub theta: Vec<i8>,
    pub worst_violation: f64,
    pub samples: usize,
}

/// Searches sign vectors θ (θ₁ fixed) such that H_{u_i u_j} θ_i θ_j >= -tol on
/// every sampled state.
pub fn check_orientability(h: &NonlinearitySpec, sbox: &SampleBox, per_axis: usize) -> Result<OrientabilityReport> {
    check_orientability_with_lead(h, sbox, per_axis, 1)
}

/// As [`check_orientability`] with θ₁ fixed to `lead` (±1).
pub fn check_orientability_with_lead(
    h: &NonlinearitySpec,
    sbox: &SampleBox,
    per_axis: usize,
    lead: i8,
) -> Result<OrientabilityReport> {
    let m = h.m();
    if m > 20 {
        return Err(FracError::ScopeLimit(format!("orientability enumeration for m = {m} > 20")));
    }
    if per_axis < 2 {
        return Err(FracError::InvalidParameter { name: "samples_per_axis", reason: "must be >= 2".into() });
    }
    if sbox.m() != m || sbox.lo.iter().zip(&sbox.hi).any(|(l, u)| !(u > l)) {
        return Err(FracError::InvalidParameter { name: "box", reason: "degenerate or wrong dimension".into() });
    }
    let pts = sbox.samples(per_axis);
    // Extremes of each mixed partial over the samples.
    let npairs = m * (m - 1) / 2;
    let mut mins = vec![f64::INFINITY; npairs];
    let mut maxs = vec![f64::NEG_INFINITY; npairs];
    let mut hess = vec![0.0; m * m];
    for u in &pts {
        h.hess_into(u, &mut hess);
        let mut p = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                let v = hess[i * m + j];
                mins[p] = mins[p].min(v);
                maxs[p] = maxs[p].max(v);
                p += 1;
            }
        }
    }
    let mut best: Option<(f64, Vec<i8>)> = None;
    for mask in 0u64..(1u64 << (m - 1)) {
        let mut theta = vec![lead; m];
        for k in 1..m {
            if mask >> (k - 1) & 1 == 1 {
                theta[k] = -lead;
            }
        }
        let mut worst = f64::INFINITY;
        let mut p = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                let v = if theta[i] * theta[j] > 0 { mins[p] } else { -maxs[p] };
                worst = worst.min(v);
                p += 1;
            }
        }
        if worst >= -ORIENTABILITY_TOL {
            return Ok(OrientabilityReport { orientable: true, theta, worst_violation: worst.min(0.0), samples: pts.len() });
        }
        if best.as_ref().is_none_or(|(w, _)| worst > *w) {
            best = Some((worst, theta));
        }
    }
    let (worst, theta) = best.expect("at least one sign vector");
    Ok(OrientabilityReport { orientable: m == 1 || worst >= -ORIENTABILITY_TOL, theta, worst_violation: worst, samples: pts.len() })
}

/// Sampled certificate that H <= 0 on the box; returns (ok, max H).
pub fn certify_nonpositive(h: &NonlinearitySpec, sbox: &SampleBox, per_axis: usize) -> (bool, f64) {
    let max = sbox.samples(per_axis).iter().map(|u| h.value(u)).fold(f64::NEG_INFINITY, f64::max);
    (max <= ORIENTABILITY_TOL, max)
}

/// Sampled certificate that every component of ∇H is >= 0; returns (ok, min).
pub fn certify_gradient_nonnegative(h: &NonlinearitySpec, sbox: &SampleBox, per_axis: usize) -> (bool, f64) {
    let m = h.m();
    let mut g = vec![0.0; m];
    let mut min = f64::INFINITY;
    for u in sbox.samples(per_axis) {
        h.grad_into(&u, &mut g);
        min = g.iter().cloned().fold(min, f64::min);
    }
    (min >= -ORIENTABILITY_TOL, min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<NonlinearitySpec> {
        vec![
            NonlinearitySpec::peierls_nabarro(),
            NonlinearitySpec::double_well(),
            NonlinearitySpec::decoupled(&NonlinearitySpec::double_well(), 2)
                .unwrap()
                .plus(&[Term::monomial(-0.25, &[2, 0]), Term::monomial(0.5, &[1, 1]), Term::monomial(-0.25, &[0, 2])])
                .unwrap(),
            NonlinearitySpec::new(
                3,
                vec![Term::cosine(0.7, &[1, -2, 0]), Term::monomial(1.3, &[1, 2, 3]), Term::cosine(-0.2, &[0, 0, 3])],
                "mixed",
            )
            .unwrap(),
        ]
    }

    #[test]
    fn cosine_layer_potential_at_zero() {
        let h = NonlinearitySpec::peierls_nabarro().eval(&[0.0]).unwrap();
        assert!((h.value + 1.0 / (PI * PI)).abs() < 1e-15);
        assert!(h.grad[0].abs() < 1e-15);
        assert!((h.hess[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn double_well_at_one() {
        // u²/2 - u⁴/4 at u = 1.
        let h = NonlinearitySpec::new(1, vec![Term::monomial(0.5, &[2]), Term::monomial(-0.25, &[4])], "")
            .unwrap()
            .eval(&[1.0])
            .unwrap();
        assert!((h.value - 0.25).abs() < 1e-15);
        assert!(h.grad[0].abs() < 1e-15);
        assert!((h.hess[0] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn length_mismatch() {
        assert!(NonlinearitySpec::double_well().eval(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1e-6;
        for h in catalog() {
            let m = h.m();
            for _ in 0..100 {
                let u: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
                let e = h.eval(&u).unwrap();
                for i in 0..m {
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[i] += step;
                    dn[i] -= step;
                    let fd = (h.value(&up) - h.value(&dn)) / (2.0 * step);
                    let scale = e.grad[i].abs().max(1.0);
                    assert!((fd - e.grad[i]).abs() <= 1e-6 * scale, "{} grad {i}", h.description);
                    let (gu, gd) = (h.eval(&up).unwrap().grad, h.eval(&dn).unwrap().grad);
                    for j in 0..m {
                        let fd = (gu[j] - gd[j]) / (2.0 * step);
                        let scale = e.h(i, j).abs().max(1.0);
                        assert!((fd - e.h(j, i)).abs() <= 1e-6 * scale);
                        assert_eq!(e.h(i, j), e.h(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn scalar_always_orientable() {
        let r = check_orientability(&NonlinearitySpec::double_well(), &SampleBox::cube(1, 2.0), 17).unwrap();
        assert!(r.orientable);
        assert_eq!(r.theta, vec![1]);
    }

    #[test]
    fn positive_coupling_orientable() {
        let h = NonlinearitySpec::decoupled(&NonlinearitySpec::double_well(), 2)
            .unwrap()
            .plus(&[Term::monomial(0.3, &[1, 1])])
            .unwrap();
        let r = check_orientability(&h, &SampleBox::cube(2, 1.5), 17).unwrap();
        assert!(r.orientable);
        assert_eq!(r.theta, vec![1, 1]);
        let flipped = check_orientability_with_lead(&h, &SampleBox::cube(2, 1.5), 17, -1).unwrap();
        assert!(flipped.orientable);
        assert_eq!(flipped.theta, vec![-1, -1]);
    }

    #[test]
    fn sign_changing_coupling_not_orientable() {
        // u1 u2 (u1 - u2): H_12 = 2u1 - 2u2 changes sign on [-1,1]².
        let h = NonlinearitySpec::new(2, vec![Term::monomial(1.0, &[2, 1]), Term::monomial(-1.0, &[1, 2])], "").unwrap();
        let r = check_orientability(&h, &SampleBox::cube(2, 1.0), 17).unwrap();
        assert!(!r.orientable);
        // Independent oracle: the extreme values of 2u1 - 2u2 over the box are ±4.
        assert!((r.worst_violation + 4.0).abs() < 1e-12);
    }

    #[test]
    fn orientability_rejects_large_m() {
        let h = NonlinearitySpec::new(21, vec![], "").unwrap();
        assert!(matches!(check_orientability(&h, &SampleBox::cube(21, 1.0), 2), Err(FracError::ScopeLimit(_))));
    }

    #[test]
    fn term_lines_round_trip() {
        for h in catalog() {
            let parsed: Vec<Term> = h
                .to_config_lines()
                .iter()
                .map(|l| l.trim_start_matches("term = ").parse().unwrap())
                .collect();
            assert_eq!(parsed, h.terms());
        }
        assert!("1.0 sine 1".parse::<Term>().is_err());
        assert!("1.0 monomial -1".parse::<Term>().is_err());
    }

    #[test]
    fn power_split() {
        let h = NonlinearitySpec::new(1, vec![Term::monomial(-0.5, &[2]), Term::monomial(1.0 / 3.0, &[3])], "").unwrap();
        assert_eq!(h.linear_plus_power(), Some((1.0, 2)));
        assert_eq!(NonlinearitySpec::peierls_nabarro().linear_plus_power(), None);
    }

    #[test]
    fn certificates() {
        let dw = NonlinearitySpec::double_well();
        assert!(certify_nonpositive(&dw, &SampleBox::cube(1, 1.2), 33).0);
        let g = NonlinearitySpec::new(1, vec![Term::cosine(-1.0, &[1])], "").unwrap();
        assert!(certify_gradient_nonnegative(&g, &SampleBox { lo: vec![0.0], hi: vec![1.0] }, 17).0);
        assert!(!certify_gradient_nonnegative(&g, &SampleBox::cube(1, 1.0), 17).0);
    }
}
