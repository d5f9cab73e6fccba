use serde::{Deserialize, Serialize};

use super::FitReport;
use crate::error::{Error, Result};

/// One point of a jump-probability versus photon-number curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub nbar: f64,
    pub nbar_err: f64,
    pub pqj: f64,
    pub pqj_err: f64,
}

/// `1 - exp(-η n̄)`.
pub fn saturation_curve(eta: f64, nbar: f64) -> f64 {
    -(-eta * nbar).exp_m1()
}

const MAX_NEWTON: usize = 100;

/// Weighted least-squares objective and its first two derivatives in `η`.
struct Objective<'a> {
    points: &'a [SaturationPoint],
    variances: Vec<f64>,
}

impl Objective<'_> {
    fn value(&self, eta: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| (p.pqj - saturation_curve(eta, p.nbar)).powi(2) / v)
            .sum()
    }

    /// `(S', S'')`.
    fn derivatives(&self, eta: f64) -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (p, v) in self.points.iter().zip(&self.variances) {
            let e = (-eta * p.nbar).exp();
            let r = p.pqj - saturation_curve(eta, p.nbar);
            let f1 = p.nbar * e;
            let f2 = -p.nbar * p.nbar * e;
            d1 += -2.0 * r * f1 / v;
            d2 += 2.0 * (f1 * f1 - r * f2) / v;
        }
        (d1, d2)
    }

    /// Gauss–Newton curvature `2 Σ f'²/σ²`.
    fn gauss_newton_curvature(&self, eta: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| 2.0 * (p.nbar * (-eta * p.nbar).exp()).powi(2) / v)
            .sum()
    }
}

/// Minimize over `η ≥ 0`: coarse log grid, golden section, then Newton on
/// `S' = 0`. Returns `(η, converged)`.
fn minimize(obj: &Objective<'_>, scale: f64) -> (f64, bool) {
    let mut grid: Vec<f64> = vec![0.0];
    grid.extend((-40..=40).map(|k| scale * 2f64.powf(k as f64 / 4.0)));
    let values: Vec<f64> = grid.iter().map(|&e| obj.value(e)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid[(best + 1).min(grid.len() - 1)];

    let (mut a, mut b) = (lo, hi);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (obj.value(c), obj.value(d));
    for _ in 0..200 {
        if (b - a) <= 1e-12 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = obj.value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = obj.value(d);
        }
    }
    let mut eta = 0.5 * (a + b);

    if eta <= 1e-12 * hi && obj.derivatives(0.0).0 >= 0.0 {
        return (0.0, true);
    }
    for _ in 0..MAX_NEWTON {
        let (g, h) = obj.derivatives(eta);
        if !(h > 0.0) {
            break;
        }
        let step = g / h;
        let next = (eta - step).max(0.0);
        let converged = (next - eta).abs() <= 1e-14 * eta.abs().max(1e-300);
        eta = next;
        if converged {
            return (eta, true);
        }
    }
    // Newton did not settle; the golden-section result still stands.
    let (g, _) = obj.derivatives(eta);
    (eta, g.abs() <= 1e-8 * obj.value(eta).max(1.0) / eta.max(1e-300))
}

/// Weighted least-squares fit of `P(QJ) = 1 - exp(-η n̄)` for `η`.
///
/// The `y` uncertainties set the weights; `x` uncertainties enter through
/// the effective variance `σ_y² + (f'(n̄) σ_x)²`, evaluated at a first
/// estimate and refitted once.
pub fn fit_saturation(points: &[SaturationPoint]) -> Result<FitReport> {
    if points.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "saturation fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.pqj_err > 0.0) || !(p.nbar_err >= 0.0) || !(p.nbar >= 0.0))
    {
        return Err(Error::InvalidParams(format!(
            "saturation point needs pqj_err > 0, nbar_err >= 0, nbar >= 0: {p:?}"
        )));
    }

    // Scale for the search grid: typical -ln(1-y)/x over informative points.
    let guesses: Vec<f64> = points
        .iter()
        .filter(|p| p.nbar > 0.0 && p.pqj > 0.0 && p.pqj < 1.0)
        .map(|p| -(-p.pqj).ln_1p() / p.nbar)
        .collect();
    let max_nbar = points.iter().map(|p| p.nbar).fold(0.0, f64::max);
    let scale = if guesses.is_empty() {
        1.0 / max_nbar.max(1.0)
    } else {
        guesses.iter().sum::<f64>() / guesses.len() as f64
    };

    let mut obj = Objective {
        points,
        variances: points.iter().map(|p| p.pqj_err * p.pqj_err).collect(),
    };
    let (first, first_ok) = minimize(&obj, scale);
    let has_x_err = points.iter().any(|p| p.nbar_err > 0.0);
    let (eta, ok) = if has_x_err {
        obj.variances = points
            .iter()
            .map(|p| {
                let slope = first * (-first * p.nbar).exp();
                p.pqj_err * p.pqj_err + (slope * p.nbar_err).powi(2)
            })
            .collect();
        minimize(&obj, first.max(scale * 1e-6))
    } else {
        (first, first_ok)
    };

    let mut diagnostics = Vec::new();
    let (_, curvature) = obj.derivatives(eta);
    let curvature = if curvature > 0.0 {
        curvature
    } else {
        diagnostics.push("gauss-newton-curvature".into());
        obj.gauss_newton_curvature(eta)
    };
    let std_error = if curvature > 0.0 {
        (2.0 / curvature).sqrt()
    } else {
        f64::INFINITY
    };
    if eta == 0.0 {
        diagnostics.push("boundary".into());
    }
    if has_x_err {
        diagnostics.push("effective-variance".into());
    }
    let chi2 = obj.value(eta);
    diagnostics.push(format!("dof={}", points.len() - 1));
    Ok(FitReport {
        estimate: eta,
        std_error,
        n: points.len() as u64,
        objective: chi2,
        converged: ok && std_error.is_finite(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_points(eta: f64, nbars: &[f64]) -> Vec<SaturationPoint> {
        nbars
            .iter()
            .map(|&n| SaturationPoint {
                nbar: n,
                nbar_err: 0.0,
                pqj: saturation_curve(eta, n),
                pqj_err: 0.02,
            })
            .collect()
    }

    #[test]
    fn two_exact_points() {
        let fit = fit_saturation(&exact_points(2.9e-3, &[100.0, 700.0])).unwrap();
        assert!(((fit.estimate - 2.9e-3) / 2.9e-3).abs() < 1e-8, "{fit:?}");
        assert!(fit.converged);
        assert!(fit.objective < 1e-16);
    }

    #[test]
    fn exact_points_with_x_errors() {
        let mut pts = exact_points(1.6e-3, &[30.0, 300.0, 900.0, 3000.0]);
        for p in &mut pts {
            p.nbar_err = 0.07 * p.nbar;
        }
        let fit = fit_saturation(&pts).unwrap();
        assert!(((fit.estimate - 1.6e-3) / 1.6e-3).abs() < 1e-8);
        assert!(fit.has_flag("effective-variance"));
    }

    #[test]
    fn all_zero_points_hit_boundary() {
        let pts: Vec<_> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| SaturationPoint {
                nbar: n,
                nbar_err: 0.0,
                pqj: 0.0,
                pqj_err: 0.01,
            })
            .collect();
        let fit = fit_saturation(&pts).unwrap();
        assert_eq!(fit.estimate, 0.0);
        assert!(fit.has_flag("boundary"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_saturation(&exact_points(1e-3, &[100.0])).is_err());
        let mut pts = exact_points(1e-3, &[100.0, 200.0]);
        pts[0].pqj_err = 0.0;
        assert!(fit_saturation(&pts).is_err());
    }
}
