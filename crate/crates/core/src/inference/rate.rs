use serde::{Deserialize, Serialize};

use super::FitReport;
use crate::error::{Error, Result};

/// Detections among retained runs at one duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub duration_s: f64,
    pub detections: u64,
    pub n_runs: u64,
}

impl RatePoint {
    pub fn fraction(&self) -> f64 {
        self.detections as f64 / self.n_runs as f64
    }

    /// Binomial variance of the detection fraction. A continuity correction
    /// of ½ run replaces an observed fraction of exactly 0 or 1.
    pub fn variance(&self) -> f64 {
        let n = self.n_runs as f64;
        let p = if self.detections == 0 {
            0.5 / n
        } else if self.detections == self.n_runs {
            1.0 - 0.5 / n
        } else {
            self.fraction()
        };
        p * (1.0 - p) / n
    }
}

/// Straight-line fit of detection fraction against duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Detections per run per second.
    pub slope: FitReport,
    /// Detection fraction at zero duration.
    pub intercept: FitReport,
    pub chi2: f64,
    /// `|slope| ≤ 3 SE`.
    pub consistent_with_zero: bool,
}

struct Line {
    slope: f64,
    intercept: f64,
    var_slope: f64,
    var_intercept: f64,
}

fn weighted_line(xs: &[f64], ys: &[f64], weights: &[f64]) -> Line {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    // Centering keeps Δ well conditioned when durations share a large offset.
    let xbar = sx / sw;
    let ybar = sy / sw;
    let sxx_c = sxx - sx * xbar;
    let sxy_c = sxy - sx * ybar;
    let slope = sxy_c / sxx_c;
    Line {
        slope,
        intercept: ybar - slope * xbar,
        var_slope: 1.0 / sxx_c,
        var_intercept: 1.0 / sw + xbar * xbar / sxx_c,
    }
}

/// Weighted linear regression of detection fraction on duration, with
/// binomial variance weights.
pub fn fit_rate(points: &[RatePoint]) -> Result<RateFit> {
    if let Some(p) = points.iter().find(|p| p.n_runs == 0 || p.detections > p.n_runs) {
        return Err(Error::InvalidParams(format!(
            "rate point needs 0 <= detections <= n_runs, n_runs > 0: {p:?}"
        )));
    }
    let mut durations: Vec<f64> = points.iter().map(|p| p.duration_s).collect();
    durations.sort_by(f64::total_cmp);
    durations.dedup();
    if durations.len() < 2 {
        return Err(Error::DegenerateDesign(format!(
            "rate fit needs at least 2 distinct durations, got {}",
            durations.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.duration_s).collect();
    let ys: Vec<f64> = points.iter().map(RatePoint::fraction).collect();
    let ws: Vec<f64> = points.iter().map(|p| 1.0 / p.variance()).collect();
    let line = weighted_line(&xs, &ys, &ws);
    let chi2: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((&x, &y), &w)| w * (y - line.intercept - line.slope * x).powi(2))
        .sum();
    let n = points.len() as u64;
    let slope_se = line.var_slope.sqrt();
    let report = |estimate: f64, std_error: f64, what: &str| FitReport {
        estimate,
        std_error,
        n,
        objective: chi2,
        converged: std_error.is_finite(),
        diagnostics: vec![format!("parameter={what}"), format!("dof={}", n - 2)],
    };
    Ok(RateFit {
        consistent_with_zero: line.slope.abs() <= 3.0 * slope_se,
        slope: report(line.slope, slope_se, "slope"),
        intercept: report(line.intercept, line.var_intercept.sqrt(), "intercept"),
        chi2,
    })
}

/// Slope the weighted regression converges to when the per-point detection
/// probabilities are exactly `probabilities` and every point has the same
/// number of runs.
pub fn rate_fit_slope_target(durations: &[f64], probabilities: &[f64]) -> f64 {
    let ws: Vec<f64> = probabilities.iter().map(|p| 1.0 / (p * (1.0 - p))).collect();
    weighted_line(durations, probabilities, &ws).slope
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_line_recovered_exactly() {
        let n = 1_000_000u64;
        let points: Vec<RatePoint> = [1e-3, 2e-3, 3e-3, 4e-3]
            .iter()
            .map(|&t| RatePoint {
                duration_s: t,
                detections: ((0.001 + 18.0 * t) * n as f64).round() as u64,
                n_runs: n,
            })
            .collect();
        let fit = fit_rate(&points).unwrap();
        assert!((fit.slope.estimate - 18.0).abs() < 1e-9, "{}", fit.slope.estimate);
        assert!((fit.intercept.estimate - 0.001).abs() < 1e-12);
        assert!(fit.chi2 < 1e-12);
        assert!(!fit.consistent_with_zero);
    }

    #[test]
    fn single_duration_is_degenerate() {
        let p = RatePoint {
            duration_s: 1.0,
            detections: 3,
            n_runs: 100,
        };
        assert!(matches!(fit_rate(&[p, p]), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn zero_detections_use_continuity_correction() {
        let points: Vec<RatePoint> = [0.5, 1.0, 2.0, 3.0]
            .iter()
            .map(|&t| RatePoint {
                duration_s: t,
                detections: 0,
                n_runs: 500,
            })
            .collect();
        let fit = fit_rate(&points).unwrap();
        assert_eq!(fit.slope.estimate, 0.0);
        assert!(fit.slope.std_error > 0.0 && fit.slope.std_error.is_finite());
        assert!(fit.consistent_with_zero);
    }

    #[test]
    fn slope_target_of_exact_line() {
        let ts = [1e-3, 2e-3, 3e-3];
        let ps: Vec<f64> = ts.iter().map(|t| 0.002 + 18.0 * t).collect();
        assert!((rate_fit_slope_target(&ts, &ps) - 18.0).abs() < 1e-9);
    }
}
