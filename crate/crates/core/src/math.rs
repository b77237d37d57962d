//! Scalar helpers shared by the model and acquisition code.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Logistic sigmoid, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

/// `ln S(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1000.0) == 1.0);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!((sigmoid(-745.0)).is_finite());
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-8, 0.1, 0.5, 1.0, 3.0, 40.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() < 1e-12 * y.max(1.0), "{y}");
        }
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-16);
        // Phi(1.96) = 0.9750021048517795
        let p = std_normal_cdf(1.96);
        assert!((p - 0.975_002_104_851_779_5).abs() < 1e-14, "{p:e}");
        assert!((std_normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }
}
