//! Standard normal tail helpers.

use statrs::distribution::{ContinuousCDF, Normal};

/// `Q(x) = P(Z > x)` for a standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `Q^{-1}(p)`, the upper `p`-quantile of the standard normal.
pub fn q_inverse(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    // Φ^{-1}(p) is accurate in the lower tail, so use Q^{-1}(p) = -Φ^{-1}(p).
    let mut x = -n.inverse_cdf(p);
    // One Newton step against the accurate tail to polish the quantile.
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        x += (q_function(x) - p) / density;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((q_inverse(0.01) - 2.326_347_874_040_840_8).abs() < 1e-13);
        assert_eq!(q_inverse(0.5), 0.0);
    }

    #[test]
    fn inverse_round_trip() {
        for &p in &[1e-12, 1e-6, 0.001, 0.05, 0.3, 0.7, 0.99] {
            assert!((q_function(q_inverse(p)) - p).abs() < 1e-13 * p.max(1e-3));
        }
    }
}
