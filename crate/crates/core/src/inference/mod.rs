//! Statistical analysis of readout data: threshold decisions,
//! jump-probability estimation, and the mixture, saturation, and rate fits.

mod estimator;
mod histogram_fit;
mod mixture;
mod rate;
mod saturation;

use serde::{Deserialize, Serialize};

use crate::distributions::Pmf;
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;

pub use estimator::{
    estimators, EstimatorContext, MixtureEstimator, PointEstimate, PqjEstimator,
    ThresholdEstimator,
};
pub use histogram_fit::{fit_histogram_models, GaussianCriterion, GaussianFit, HistogramFits};
pub use mixture::{fit_mixture, fit_mixture_with, mixture_log_likelihood, MixtureCriterion};
pub use rate::{fit_rate, rate_fit_slope_target, RateFit, RatePoint};
pub use saturation::{fit_saturation, saturation_curve, SaturationPoint};

/// Result of a one-parameter fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimate: f64,
    pub std_error: f64,
    /// Number of points or runs the fit used.
    pub n: u64,
    /// Log-likelihood or chi-square at the optimum, depending on the fit.
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl FitReport {
    /// `|estimate - value| ≤ k · std_error`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.diagnostics.iter().any(|d| d == flag)
    }
}

/// Where a decision rule's error rates came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleProvenance {
    /// Model pmfs, threshold chosen for maximum fidelity.
    Model,
    /// Empirical histograms, threshold chosen for maximum fidelity.
    Empirical,
    /// Threshold fixed by configuration.
    Fixed,
}

/// Detection means `n_c > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub threshold: u64,
    /// `P(n_c > threshold | F = 1)`.
    pub eps_fp: f64,
    /// `P(n_c ≤ threshold | F = 2)`.
    pub eps_fn: f64,
    /// `1 - (eps_fp + eps_fn)/2`.
    pub fidelity: f64,
    pub provenance: RuleProvenance,
}

impl DecisionRule {
    /// Error rates of a fixed threshold under the given pmfs.
    pub fn at_threshold(pmf1: &Pmf, pmf2: &Pmf, threshold: u64) -> Self {
        let t = threshold as usize;
        let eps_fp = if t <= pmf1.n_max() {
            pmf1.survival()[t]
        } else {
            pmf1.tail_mass()
        };
        let eps_fn = pmf2.masses().iter().take(t + 1).sum::<f64>();
        Self::from_rates(threshold, eps_fp, eps_fn, RuleProvenance::Fixed)
    }

    pub fn from_rates(threshold: u64, eps_fp: f64, eps_fn: f64, provenance: RuleProvenance) -> Self {
        let eps_fp = eps_fp.clamp(0.0, 1.0);
        let eps_fn = eps_fn.clamp(0.0, 1.0);
        Self {
            threshold,
            eps_fp,
            eps_fn,
            fidelity: 1.0 - 0.5 * (eps_fp + eps_fn),
            provenance,
        }
    }

    /// `1 - eps_fp - eps_fn`, the contrast between the two states.
    pub fn contrast(&self) -> f64 {
        1.0 - self.eps_fp - self.eps_fn
    }

    fn informative_contrast(&self) -> Result<f64> {
        let c = self.contrast();
        if c > 0.0 {
            Ok(c)
        } else {
            Err(Error::UninformativeRule(c))
        }
    }
}

/// Fidelity for every threshold `0..=n_max`.
pub fn fidelity_profile(pmf1: &Pmf, pmf2: &Pmf) -> Vec<f64> {
    let n_max = pmf1.n_max().max(pmf2.n_max());
    let s1 = pmf1.padded(n_max).survival();
    let c2 = pmf2.padded(n_max).cdf();
    (0..=n_max).map(|t| 1.0 - 0.5 * (s1[t] + c2[t])).collect()
}

/// Threshold maximizing readout fidelity, by exhaustive search; ties go to
/// the smallest threshold.
pub fn choose_threshold(pmf1: &Pmf, pmf2: &Pmf) -> DecisionRule {
    let profile = fidelity_profile(pmf1, pmf2);
    let mut best = 0;
    for (t, &f) in profile.iter().enumerate() {
        if f > profile[best] {
            best = t;
        }
    }
    let n_max = profile.len() - 1;
    let eps_fp = pmf1.padded(n_max).survival()[best];
    let eps_fn = pmf2.padded(n_max).cdf()[best];
    DecisionRule::from_rates(best as u64, eps_fp, eps_fn, RuleProvenance::Model)
}

/// Rule built from measured histograms of prepared F = 1 and F = 2 atoms.
pub fn choose_threshold_empirical(
    hist1: &CountHistogram,
    hist2: &CountHistogram,
) -> Result<DecisionRule> {
    let rule = choose_threshold(&hist1.to_pmf()?, &hist2.to_pmf()?);
    Ok(DecisionRule {
        provenance: RuleProvenance::Empirical,
        ..rule
    })
}

/// Jump probability inferred from the detection fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqjEstimate {
    /// Estimate clamped to `[0, 1]`.
    pub estimate: f64,
    /// Unclamped `(P(D) - eps_fp)/(1 - eps_fp - eps_fn)`.
    pub raw: f64,
    pub clamped: bool,
}

/// `P(QJ) = (P(D) - eps_fp)/(1 - eps_fp - eps_fn)`.
pub fn infer_pqj(p_d: f64, rule: &DecisionRule) -> Result<PqjEstimate> {
    let contrast = rule.informative_contrast()?;
    let raw = (p_d - rule.eps_fp) / contrast;
    let estimate = raw.clamp(0.0, 1.0);
    Ok(PqjEstimate {
        estimate,
        raw,
        clamped: estimate != raw,
    })
}

/// Mean-squared error of [`infer_pqj`] for a binomial detection fraction
/// over `n_runs` runs.
pub fn mse_pqj(p_d: f64, rule: &DecisionRule, n_runs: u64) -> Result<f64> {
    let contrast = rule.informative_contrast()?;
    if n_runs == 0 {
        return Err(Error::InvalidParams("n_runs must be at least 1".into()));
    }
    Ok(p_d * (1.0 - p_d) / (n_runs as f64 * contrast * contrast))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::poisson_count_pmf;
    use crate::detector::discretized_gaussian;

    fn rule(eps_fp: f64, eps_fn: f64) -> DecisionRule {
        DecisionRule::from_rates(4, eps_fp, eps_fn, RuleProvenance::Fixed)
    }

    #[test]
    fn separated_points_tie_break_to_zero() {
        let r = choose_threshold(&Pmf::point(0), &Pmf::point(10));
        assert_eq!(r.threshold, 0);
        assert_eq!(r.fidelity, 1.0);
        let profile = fidelity_profile(&Pmf::point(0), &Pmf::point(10));
        assert!(profile[..10].iter().all(|&f| f == 1.0));
    }

    #[test]
    fn identical_pmfs_give_half() {
        let p = poisson_count_pmf(3.0, 1e-12).unwrap();
        let profile = fidelity_profile(&p, &p);
        assert!(profile.iter().all(|f| (f - 0.5).abs() < 1e-12));
        assert_eq!(choose_threshold(&p, &p).threshold, 0);
    }

    #[test]
    fn poisson_and_gaussian_heuristic_forms() {
        let p1 = poisson_count_pmf(1.146, 1e-12).unwrap();
        let p2 = discretized_gaussian(5.9, 17.6, 1e-12).unwrap();
        let r = choose_threshold(&p1, &p2);
        // Exhaustive search over the fitted forms; the measured histograms
        // are not available, so n_thr = 4 and F = 0.72 are not expected.
        let best = fidelity_profile(&p1, &p2)
            .into_iter()
            .fold(f64::MIN, f64::max);
        assert_eq!(r.fidelity, best);
        assert!((2..=6).contains(&r.threshold));
    }

    #[test]
    fn zero_padding_does_not_change_choice() {
        let p1 = poisson_count_pmf(1.146, 1e-12).unwrap();
        let p2 = discretized_gaussian(5.9, 17.6, 1e-12).unwrap();
        let a = choose_threshold(&p1, &p2);
        let b = choose_threshold(&p1.padded(200), &p2.padded(300));
        assert_eq!(a, b);
    }

    #[test]
    fn pqj_substitutions() {
        assert_eq!(infer_pqj(0.37, &rule(0.0, 0.0)).unwrap().estimate, 0.37);
        assert_eq!(infer_pqj(0.1, &rule(0.1, 0.3)).unwrap().estimate, 0.0);
        let e = infer_pqj(0.5, &rule(0.1, 0.2)).unwrap();
        assert!((e.estimate - 0.4 / 0.7).abs() < 1e-15);
        assert!(!e.clamped);
    }

    #[test]
    fn pqj_clamps_and_flags() {
        let low = infer_pqj(0.05, &rule(0.1, 0.2)).unwrap();
        assert!(low.clamped && low.estimate == 0.0 && low.raw < 0.0);
        let high = infer_pqj(0.95, &rule(0.1, 0.2)).unwrap();
        assert!(high.clamped && high.estimate == 1.0 && high.raw > 1.0);
    }

    #[test]
    fn uninformative_rule_errors() {
        assert!(matches!(
            infer_pqj(0.5, &rule(0.5, 0.5)),
            Err(Error::UninformativeRule(_))
        ));
        assert!(mse_pqj(0.5, &rule(0.6, 0.5), 10).is_err());
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse_pqj(0.0, &rule(0.1, 0.2), 50).unwrap(), 0.0);
        assert_eq!(mse_pqj(1.0, &rule(0.1, 0.2), 50).unwrap(), 0.0);
        assert!((mse_pqj(0.5, &rule(0.0, 0.0), 100).unwrap() - 0.0025).abs() < 1e-15);
        assert!(mse_pqj(0.5, &rule(0.0, 0.0), 0).is_err());
    }

    #[test]
    fn fixed_threshold_rates() {
        let p1 = poisson_count_pmf(1.146, 1e-12).unwrap();
        let p2 = discretized_gaussian(5.9, 17.6, 1e-12).unwrap();
        let r = DecisionRule::at_threshold(&p1, &p2, 4);
        let tail: f64 = p1.masses()[5..].iter().sum::<f64>() + p1.tail_mass();
        assert!((r.eps_fp - tail).abs() < 1e-15);
        assert!((r.eps_fn - p2.masses()[..5].iter().sum::<f64>()).abs() < 1e-15);
        assert_eq!(r.provenance, RuleProvenance::Fixed);
    }
}
