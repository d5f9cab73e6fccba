use serde::{Deserialize, Serialize};

use super::FitReport;
use crate::distributions::Pmf;
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureCriterion {
    /// Multinomial maximum likelihood.
    #[default]
    MaxLikelihood,
    /// Least squares between relative frequencies and the mixture pmf.
    LeastSquares,
}

/// Observed bins as `(count, p1, p2)`, rejecting bins neither pmf can produce.
fn observed_bins(hist: &CountHistogram, pmf1: &Pmf, pmf2: &Pmf) -> Result<Vec<(f64, f64, f64)>> {
    if hist.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let mut bins = Vec::new();
    for (n, &c) in hist.counts().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (a, b) = (pmf1.mass(n), pmf2.mass(n));
        if a == 0.0 && b == 0.0 {
            return Err(Error::ModelMismatch(format!(
                "{c} runs observed at n_c = {n}, where both conditional pmfs vanish"
            )));
        }
        bins.push((c as f64, a, b));
    }
    Ok(bins)
}

/// `Σ h_n ln((1-w) p1_n + w p2_n)`.
pub fn mixture_log_likelihood(hist: &CountHistogram, pmf1: &Pmf, pmf2: &Pmf, w: f64) -> Result<f64> {
    Ok(observed_bins(hist, pmf1, pmf2)?
        .iter()
        .map(|&(c, a, b)| c * ((1.0 - w) * a + w * b).ln())
        .sum())
}

/// Fit `P(n_c) = (1-w) P(n_c|F=1) + w P(n_c|F=2)` for the bright weight `w`
/// by maximum likelihood.
pub fn fit_mixture(hist: &CountHistogram, pmf1: &Pmf, pmf2: &Pmf) -> Result<FitReport> {
    fit_mixture_with(hist, pmf1, pmf2, MixtureCriterion::MaxLikelihood)
}

pub fn fit_mixture_with(
    hist: &CountHistogram,
    pmf1: &Pmf,
    pmf2: &Pmf,
    criterion: MixtureCriterion,
) -> Result<FitReport> {
    let bins = observed_bins(hist, pmf1, pmf2)?;
    match criterion {
        MixtureCriterion::MaxLikelihood => Ok(max_likelihood(&bins, hist.total())),
        MixtureCriterion::LeastSquares => Ok(least_squares(hist, pmf1, pmf2)),
    }
}

fn max_likelihood(bins: &[(f64, f64, f64)], total: u64) -> FitReport {
    // Score and observed information; the log-likelihood is concave in w,
    // so the score is nonincreasing and a sign change brackets the optimum.
    let score = |w: f64| -> f64 {
        bins.iter()
            .map(|&(c, a, b)| c * (b - a) / ((1.0 - w) * a + w * b))
            .sum()
    };
    let info = |w: f64| -> f64 {
        bins.iter()
            .map(|&(c, a, b)| {
                let m = (1.0 - w) * a + w * b;
                c * (b - a) * (b - a) / (m * m)
            })
            .sum()
    };
    let loglik = |w: f64| -> f64 {
        bins.iter()
            .map(|&(c, a, b)| c * ((1.0 - w) * a + w * b).ln())
            .sum()
    };

    let mut diagnostics = Vec::new();
    let (w, iterations) = if score(0.0) <= 0.0 {
        diagnostics.push("boundary".into());
        diagnostics.push("boundary-low".into());
        (0.0, 0)
    } else if score(1.0) >= 0.0 {
        diagnostics.push("boundary".into());
        diagnostics.push("boundary-high".into());
        (1.0, 0)
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut it = 0;
        while hi - lo > 1e-15 && it < 200 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            it += 1;
        }
        (0.5 * (lo + hi), it)
    };
    let information = info(w);
    let std_error = if information > 0.0 && information.is_finite() {
        information.sqrt().recip()
    } else {
        diagnostics.push("singular-information".into());
        f64::INFINITY
    };
    diagnostics.push(format!("bisection-steps={iterations}"));
    FitReport {
        estimate: w,
        std_error,
        n: total,
        objective: loglik(w),
        converged: std_error.is_finite(),
        diagnostics,
    }
}

fn least_squares(hist: &CountHistogram, pmf1: &Pmf, pmf2: &Pmf) -> FitReport {
    let total = hist.total() as f64;
    let len = pmf1
        .masses()
        .len()
        .max(pmf2.masses().len())
        .max(hist.counts().len());
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..len {
        let f = hist.count(n) as f64 / total;
        let (a, b) = (pmf1.mass(n), pmf2.mass(n));
        num += (f - a) * (b - a);
        den += (b - a) * (b - a);
    }
    let mut diagnostics = vec!["criterion=least-squares".to_string()];
    let raw = num / den;
    let w = raw.clamp(0.0, 1.0);
    if w != raw {
        diagnostics.push("boundary".into());
    }
    // w is linear in the frequencies: w = Σ c_n f_n + const with
    // c_n = (p2 - p1)/den, so Var w = (Σ c² m - (Σ c m)²)/N under the fit.
    let (mut s1, mut s2) = (0.0, 0.0);
    for n in 0..len {
        let (a, b) = (pmf1.mass(n), pmf2.mass(n));
        let c = (b - a) / den;
        let m = (1.0 - w) * a + w * b;
        s1 += c * c * m;
        s2 += c * m;
    }
    let std_error = ((s1 - s2 * s2).max(0.0) / total).sqrt();
    let sse: f64 = (0..len)
        .map(|n| {
            let m = (1.0 - w) * pmf1.mass(n) + w * pmf2.mass(n);
            (hist.count(n) as f64 / total - m).powi(2)
        })
        .sum();
    FitReport {
        estimate: w,
        std_error,
        n: hist.total(),
        objective: sse,
        converged: den > 0.0,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{pmf_counts_given_state, DetectorParams, HyperfineState};
    use crate::distributions::sample_poisson;
    use crate::rng::stream;

    fn pmfs() -> (Pmf, Pmf) {
        let p = DetectorParams::default();
        (
            pmf_counts_given_state(HyperfineState::F1, &p).unwrap(),
            pmf_counts_given_state(HyperfineState::F2, &p).unwrap(),
        )
    }

    #[test]
    fn pure_dark_histogram_fits_zero() {
        let (p1, p2) = pmfs();
        let mut rng = stream(1, 0, 0, "mix");
        let hist: CountHistogram = (0..10_000).map(|_| sample_poisson(1.146, &mut rng)).collect();
        let fit = fit_mixture(&hist, &p1, &p2).unwrap();
        assert!(fit.within(0.0, 3.0), "{fit:?}");
    }

    #[test]
    fn log_likelihood_is_concave() {
        let (p1, p2) = pmfs();
        let hist = CountHistogram::from_table(vec![30, 40, 25, 20, 12, 9, 8, 6, 5, 4, 3, 3, 2]);
        let grid: Vec<f64> = (0..=100)
            .map(|i| mixture_log_likelihood(&hist, &p1, &p2, i as f64 / 100.0).unwrap())
            .collect();
        for w in grid.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-9);
        }
    }

    #[test]
    fn mismatch_and_empty_errors() {
        let p1 = Pmf::point(0);
        let p2 = Pmf::point(3);
        assert!(matches!(
            fit_mixture(&CountHistogram::new(), &p1, &p2),
            Err(Error::EmptyHistogram)
        ));
        let hist = CountHistogram::from_table(vec![5, 0, 2]);
        assert!(matches!(fit_mixture(&hist, &p1, &p2), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn exact_mixture_recovered_by_both_criteria() {
        let (p1, p2) = pmfs();
        let n = p1.n_max().max(p2.n_max());
        // Frequencies equal to the 0.3/0.7 mixture, scaled to a large total.
        let table: Vec<u64> = (0..=n)
            .map(|k| ((0.3 * p1.mass(k) + 0.7 * p2.mass(k)) * 1e9).round() as u64)
            .collect();
        let hist = CountHistogram::from_table(table);
        let ml = fit_mixture(&hist, &p1, &p2).unwrap();
        let ls = fit_mixture_with(&hist, &p1, &p2, MixtureCriterion::LeastSquares).unwrap();
        assert!((ml.estimate - 0.7).abs() < 1e-6, "{}", ml.estimate);
        assert!((ls.estimate - 0.7).abs() < 1e-6, "{}", ls.estimate);
        assert!(ml.std_error > 0.0 && ls.std_error > 0.0);
    }

    #[test]
    fn boundary_flagged() {
        let p1 = Pmf::from_masses(vec![0.8, 0.2]).unwrap();
        let p2 = Pmf::from_masses(vec![0.2, 0.8]).unwrap();
        let hist = CountHistogram::from_table(vec![0, 50]);
        let fit = fit_mixture(&hist, &p1, &p2).unwrap();
        assert_eq!(fit.estimate, 1.0);
        assert!(fit.has_flag("boundary"));
    }
}
