use serde::{Deserialize, Serialize};

use super::FitReport;
use crate::detector::discretized_gaussian;
use crate::distributions::{ln_poisson_pmf, Pmf};
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianCriterion {
    /// Binned maximum likelihood of the discretized form.
    #[default]
    MaxLikelihood,
    /// Sample mean and variance.
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: FitReport,
    pub var: FitReport,
    pub criterion: GaussianCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramFits {
    pub poisson: FitReport,
    pub gaussian: GaussianFit,
}

fn poisson_fit(hist: &CountHistogram) -> Result<FitReport> {
    let n = hist.total();
    let mu = hist.mean();
    let mut loglik = 0.0;
    for (k, &c) in hist.counts().iter().enumerate() {
        if c > 0 {
            loglik += c as f64 * ln_poisson_pmf(k as u64, mu)?;
        }
    }
    Ok(FitReport {
        estimate: mu,
        std_error: (mu / n as f64).sqrt(),
        n,
        objective: loglik,
        converged: true,
        diagnostics: vec!["criterion=max-likelihood".into()],
    })
}

fn gaussian_log_likelihood(hist: &CountHistogram, mean: f64, var: f64) -> f64 {
    let Ok(pmf) = discretized_gaussian(mean, var, 1e-15) else {
        return f64::NEG_INFINITY;
    };
    binned_log_likelihood(hist, &pmf)
}

fn binned_log_likelihood(hist: &CountHistogram, pmf: &Pmf) -> f64 {
    hist.counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| c as f64 * pmf.mass(k).ln())
        .sum()
}

/// Nelder–Mead minimization in two dimensions.
fn nelder_mead<F: Fn([f64; 2]) -> f64>(f: F, start: [f64; 2], step: [f64; 2]) -> ([f64; 2], bool) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    for _ in 0..2000 {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        let size = (0..2)
            .map(|d| (simplex[1][d] - simplex[0][d]).abs() + (simplex[2][d] - simplex[0][d]).abs())
            .fold(0.0, f64::max);
        if spread <= 1e-12 * values[0].abs().max(1.0) && size < 1e-10 {
            return (simplex[0], true);
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let toward = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = toward(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = toward(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { toward(-0.5) } else { toward(0.5) };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    for d in 0..2 {
                        simplex[i][d] = simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]);
                    }
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best], false)
}

/// Standard errors of `(mean, var)` from the inverse of the observed
/// information, by central differences.
fn gaussian_std_errors(hist: &CountHistogram, mean: f64, var: f64) -> Option<(f64, f64)> {
    let nll = |m: f64, v: f64| -gaussian_log_likelihood(hist, m, v);
    let hm = 1e-4 * var.sqrt().max(1e-3);
    let hv = 1e-4 * var;
    let f0 = nll(mean, var);
    let fmm = (nll(mean + hm, var) - 2.0 * f0 + nll(mean - hm, var)) / (hm * hm);
    let fvv = (nll(mean, var + hv) - 2.0 * f0 + nll(mean, var - hv)) / (hv * hv);
    let fmv = (nll(mean + hm, var + hv) - nll(mean + hm, var - hv) - nll(mean - hm, var + hv)
        + nll(mean - hm, var - hv))
        / (4.0 * hm * hv);
    let det = fmm * fvv - fmv * fmv;
    if !(det > 0.0) || !(fmm > 0.0) {
        return None;
    }
    Some(((fvv / det).sqrt(), (fmm / det).sqrt()))
}

/// Fit a Poisson law and a discretized Gaussian to a count histogram.
pub fn fit_histogram_models(hist: &CountHistogram, criterion: GaussianCriterion) -> Result<HistogramFits> {
    if hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    if hist.total() < 2 {
        return Err(Error::InvalidParams(
            "histogram fits need at least 2 runs".into(),
        ));
    }
    let poisson = poisson_fit(hist)?;
    let n = hist.total();
    let m0 = hist.mean();
    let v0 = hist.variance().max(1.0 / 12.0);

    let (mean, var, converged, mut diagnostics) = match criterion {
        GaussianCriterion::Moments => (m0, v0, true, vec!["criterion=moments".to_string()]),
        GaussianCriterion::MaxLikelihood => {
            let objective = |x: [f64; 2]| -gaussian_log_likelihood(hist, x[0], x[1].exp());
            let (best, ok) = nelder_mead(objective, [m0, v0.ln()], [0.1 * v0.sqrt(), 0.1]);
            (best[0], best[1].exp(), ok, vec!["criterion=max-likelihood".to_string()])
        }
    };
    let (se_mean, se_var) = match criterion {
        GaussianCriterion::Moments => (
            (var / n as f64).sqrt(),
            (2.0 * var * var / (n as f64 - 1.0)).sqrt(),
        ),
        GaussianCriterion::MaxLikelihood => gaussian_std_errors(hist, mean, var).unwrap_or_else(|| {
            diagnostics.push("singular-information".into());
            (f64::INFINITY, f64::INFINITY)
        }),
    };
    let loglik = gaussian_log_likelihood(hist, mean, var);
    let report = |estimate: f64, std_error: f64| FitReport {
        estimate,
        std_error,
        n,
        objective: loglik,
        converged: converged && std_error.is_finite(),
        diagnostics: diagnostics.clone(),
    };
    Ok(HistogramFits {
        poisson,
        gaussian: GaussianFit {
            mean: report(mean, se_mean),
            var: report(var, se_var),
            criterion,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample_poisson;
    use crate::rng::stream;

    #[test]
    fn poisson_mean_recovered() {
        let mut rng = stream(5, 0, 0, "hist");
        let hist: CountHistogram = (0..20_000).map(|_| sample_poisson(1.146, &mut rng)).collect();
        let fits = fit_histogram_models(&hist, GaussianCriterion::Moments).unwrap();
        assert!(fits.poisson.within(1.146, 4.0), "{:?}", fits.poisson);
    }

    #[test]
    fn gaussian_mle_recovers_exact_histogram() {
        let pmf = discretized_gaussian(12.0, 9.0, 1e-15).unwrap();
        let table: Vec<u64> = pmf.masses().iter().map(|m| (m * 1e8).round() as u64).collect();
        let hist = CountHistogram::from_table(table);
        let fits = fit_histogram_models(&hist, GaussianCriterion::MaxLikelihood).unwrap();
        let g = &fits.gaussian;
        assert!((g.mean.estimate - 12.0).abs() < 1e-3, "{g:?}");
        assert!((g.var.estimate - 9.0).abs() < 1e-2, "{g:?}");
        assert!(g.mean.converged && g.mean.std_error > 0.0);
        // Binned MLE beats the moments for the same histogram.
        let moments = fit_histogram_models(&hist, GaussianCriterion::Moments).unwrap();
        assert!(g.mean.objective >= moments.gaussian.mean.objective);
    }

    #[test]
    fn empty_histogram_errors() {
        assert!(matches!(
            fit_histogram_models(&CountHistogram::new(), GaussianCriterion::Moments),
            Err(Error::EmptyHistogram)
        ));
    }
}
