//! Gamma function and the normalization constants built from it.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) by the Lanczos approximation (g = 7, nine coefficients), with the
/// reflection formula for x < 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (k, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + k as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Extension constant d_s = Γ(1-s) / (2^{2s-1} Γ(s)).
///
/// With this constant the weighted conormal flux of the extension equals
/// d_s (-Δ)^s of the trace.
pub fn extension_constant(s: f64) -> f64 {
    gamma(1.0 - s) / (2f64.powf(2.0 * s - 1.0) * gamma(s))
}

/// Kernel constant C(1, s) making the one-dimensional principal value integral
/// a Fourier multiplier with symbol |ξ|^{2s}.
pub fn pv_kernel_constant(s: f64) -> f64 {
    // 2^{2s} Γ(1/2+s) / (√π |Γ(-s)|), with |Γ(-s)| = Γ(1-s)/s.
    s * 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(1.0 - s))
}

/// Surface measure of the unit sphere S^{n-1} in R^n.
pub fn sphere_measure(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// ∫_lo^hi t^e dt for 0 <= lo <= hi, valid for any exponent e > -1 when lo = 0
/// and for any e when lo > 0.
pub fn power_moment(lo: f64, hi: f64, e: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if (e + 1.0).abs() < 1e-14 {
        (hi / lo).ln()
    } else {
        let p = e + 1.0;
        if lo == 0.0 {
            hi.powf(p) / p
        } else {
            (hi.powf(p) - lo.powf(p)) / p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_known_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma(0.25) - 3.625_609_908_221_908_3).abs() < 1e-13 * 3.7);
    }

    #[test]
    fn half_laplacian_kernel_constant() {
        assert!((pv_kernel_constant(0.5) - 1.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn sphere_measures() {
        assert!((sphere_measure(1) - 2.0).abs() < 1e-14);
        assert!((sphere_measure(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_measure(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn moments() {
        assert!((power_moment(0.0, 1.0, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((power_moment(1.0, std::f64::consts::E, -1.0) - 1.0).abs() < 1e-15);
        assert_eq!(power_moment(2.0, 1.0, 0.0), 0.0);
    }
}
