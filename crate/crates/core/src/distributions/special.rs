//! Exponential integral of non-positive integer order.
//!
//! `E_{-n}(z) = ∫₁^∞ e^{-zt} tⁿ dt` has the finite closed form
//! `e^{-z} Σ_{k=0}^{n} n!/(n-k)! · z^{-(k+1)}`. Every term is positive, so the
//! sum is free of cancellation; the only hazard is overflow, handled by
//! switching to log space.

use crate::error::{Error, Result};

/// `E_{-n}(z)` for `z > 0`.
pub fn exp_integral_neg_order(n: u64, z: f64) -> Result<f64> {
    check_arg(z)?;
    let terms = LogTerms::new(n, z);
    if terms.max_log < 690.0 && z < 700.0 {
        // Linear recurrence t_k = t_{k-1} (n-k+1)/z keeps the error at O(n) ulps.
        let mut term = 1.0 / z;
        let mut sum = term;
        for k in 1..=n {
            term *= (n - k + 1) as f64 / z;
            sum += term;
        }
        Ok((-z).exp() * sum)
    } else {
        Ok(terms.ln_value().exp())
    }
}

/// `ln E_{-n}(z)` for `z > 0`, usable where `E_{-n}(z)` itself would
/// overflow or underflow.
pub fn ln_exp_integral_neg_order(n: u64, z: f64) -> Result<f64> {
    check_arg(z)?;
    Ok(LogTerms::new(n, z).ln_value())
}

fn check_arg(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!(
            "exponential integral needs a finite positive argument, got z = {z}"
        )));
    }
    Ok(())
}

struct LogTerms {
    n: u64,
    z: f64,
    max_log: f64,
}

impl LogTerms {
    fn new(n: u64, z: f64) -> Self {
        // log t_k is concave in k, so walk until it starts decreasing.
        let ln_z = z.ln();
        let mut log_t = -ln_z;
        let mut max_log = log_t;
        for k in 1..=n {
            log_t += ((n - k + 1) as f64).ln() - ln_z;
            if log_t > max_log {
                max_log = log_t;
            } else {
                break;
            }
        }
        Self { n, z, max_log }
    }

    fn ln_value(&self) -> f64 {
        let ln_z = self.z.ln();
        let mut log_t = -ln_z;
        let mut scaled = (log_t - self.max_log).exp();
        for k in 1..=self.n {
            log_t += ((self.n - k + 1) as f64).ln() - ln_z;
            scaled += (log_t - self.max_log).exp();
        }
        -self.z + self.max_log + scaled.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn order_zero_is_exp_over_z() {
        let v = exp_integral_neg_order(0, 1.0).unwrap();
        assert!(rel(v, (-1.0f64).exp()) < 1e-15);
        for &z in &[0.1, 2.0, 40.0] {
            let v = exp_integral_neg_order(0, z).unwrap();
            assert!(rel(v, (-z).exp() / z) < 1e-14);
        }
    }

    #[test]
    fn frozen_high_precision_values() {
        // Values from a 50-digit evaluation of the defining integral.
        let cases = [
            (1, 1.0, 0.735_758_882_342_884_643_2),
            (5, 2.5, 0.470_865_819_306_243_136_7),
            (20, 7.0, 4.355_715_257_911_505_714_7),
            (50, 0.1, 3.041_409_320_171_337_804_4e115),
        ];
        for (n, z, want) in cases {
            let got = exp_integral_neg_order(n, z).unwrap();
            assert!(rel(got, want) < 1e-13, "E_-{n}({z}) = {got}, want {want}");
        }
    }

    #[test]
    fn log_form_matches_linear_form() {
        for n in [0u64, 3, 17, 50] {
            for z in [0.1, 1.0, 9.5, 50.0] {
                let lin = exp_integral_neg_order(n, z).unwrap();
                let lg = ln_exp_integral_neg_order(n, z).unwrap();
                assert!((lin.ln() - lg).abs() < 1e-12 * lg.abs().max(1.0));
            }
        }
    }

    #[test]
    fn log_form_survives_overflow() {
        let lg = ln_exp_integral_neg_order(400, 0.05).unwrap();
        assert!(lg.is_finite() && lg > 709.0);
        assert!(exp_integral_neg_order(400, 0.05).unwrap().is_infinite());
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(matches!(exp_integral_neg_order(2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(exp_integral_neg_order(2, -1.0), Err(Error::Domain(_))));
        assert!(ln_exp_integral_neg_order(2, f64::NAN).is_err());
    }
}
