use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::special::extension_constant;

/// Per-component fractional orders with their extension weights and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalOrders {
    s: Vec<f64>,
    a: Vec<f64>,
    d: Vec<f64>,
}

impl FractionalOrders {
    pub fn new(s: &[f64]) -> Result<Self> {
        if s.is_empty() {
            return Err(FracError::EmptyOrders);
        }
        for (index, &value) in s.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(FracError::InvalidOrder { index, value });
            }
        }
        let a = s.iter().map(|&si| 1.0 - 2.0 * si).collect();
        let d = s.iter().map(|&si| extension_constant(si)).collect();
        Ok(Self { s: s.to_vec(), a, d })
    }

    /// All components share the same order.
    pub fn uniform(m: usize, s: f64) -> Result<Self> {
        Self::new(&vec![s; m])
    }

    pub fn m(&self) -> usize {
        self.s.len()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    /// Weight exponents a_i = 1 - 2 s_i.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Extension constants d_{s_i}.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn s_min(&self) -> f64 {
        self.s.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn s_max(&self) -> f64 {
        self.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_equal(&self) -> bool {
        self.s.iter().all(|&x| x == self.s[0])
    }

    /// Reorders components; `perm[k]` is the old index of new component k.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let s: Vec<f64> = perm.iter().map(|&k| self.s[k]).collect();
        Self::new(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_is_normalized() {
        let o = FractionalOrders::new(&[0.5]).unwrap();
        assert_eq!(o.a(), &[0.0]);
        assert!((o.d()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_order_constant() {
        // Reference value from a 30-digit Γ evaluation.
        let o = FractionalOrders::new(&[0.25]).unwrap();
        assert!((o.d()[0] - 0.477_988_797_486_125).abs() < 1e-12);
    }

    #[test]
    fn mixed_orders() {
        let o = FractionalOrders::new(&[0.75, 0.25]).unwrap();
        assert_eq!(o.a(), &[-0.5, 0.5]);
        assert_eq!(o.s_min(), 0.25);
        assert_eq!(o.s_max(), 0.75);
        assert!(!o.all_equal());
    }

    #[test]
    fn rejects_bad_orders() {
        assert_eq!(FractionalOrders::new(&[]), Err(FracError::EmptyOrders));
        assert!(matches!(
            FractionalOrders::new(&[0.5, 1.0]),
            Err(FracError::InvalidOrder { index: 1, .. })
        ));
        assert!(FractionalOrders::new(&[0.0]).is_err());
        assert!(FractionalOrders::new(&[f64::NAN]).is_err());
    }

    #[test]
    fn constant_is_continuous_in_s() {
        for &s in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let h = 1e-6;
            let lo = extension_constant(s - h);
            let hi = extension_constant(s + h);
            let mid = extension_constant(s);
            assert!((hi - mid).abs() < 1e-4 && (mid - lo).abs() < 1e-4);
            assert!(((hi + lo) / 2.0 - mid).abs() < 1e-9 * mid.max(1.0));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_constant_and_exact_weight(s in 1e-3f64..0.999) {
                let o = FractionalOrders::new(&[s]).unwrap();
                prop_assert!(o.d()[0] > 0.0);
                prop_assert_eq!(o.a()[0], 1.0 - 2.0 * s);
            }
        }
    }
}
