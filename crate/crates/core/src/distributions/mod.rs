//! Count-statistics primitives for the readout of a bright (F = 2) atom.
//!
//! The bright atom scatters a geometric number `s ≥ 1` of photons before it
//! falls dark; each scattered photon is detected independently with
//! probability `η`; the detector adds Poisson background with mean `µ`.

mod pmf;
mod sampling;
pub mod special;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub use pmf::Pmf;
pub use sampling::{sample_cascade, sample_poisson, sample_readout_count_f2};
pub use special::{exp_integral_neg_order, ln_exp_integral_neg_order};

/// Default tail cutoff used when truncating a pmf.
pub const DEFAULT_TAIL_CUTOFF: f64 = 1e-12;

/// Hard cap on the number of pmf terms.
pub const MAX_PMF_TERMS: usize = 100_000;

/// Absolute accuracy the log-space closed form must certify before it is used.
pub const CLOSED_FORM_ABS_TOL: f64 = 1e-8;

/// Parameters of the scatter cascade and background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    /// Probability `p` that a scatter leaves the atom bright.
    pub scatter_survival: f64,
    /// Probability `η` that a scattered photon is registered.
    pub det_efficiency: f64,
    /// Mean background counts `µ` per readout window.
    pub bg_mean: f64,
}

impl CascadeParams {
    pub fn new(scatter_survival: f64, det_efficiency: f64, bg_mean: f64) -> Result<Self> {
        let params = Self {
            scatter_survival,
            det_efficiency,
            bg_mean,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.scatter_survival;
        let eta = self.det_efficiency;
        let mu = self.bg_mean;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParams(format!(
                "scatter_survival must lie in (0, 1), got {p}"
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "det_efficiency must lie in (0, 1], got {eta}"
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "bg_mean must be finite and nonnegative, got {mu}"
            )));
        }
        Ok(())
    }

    /// `x = µ(1-p)/(ηp)`, the argument shift in the closed form.
    pub fn x(&self) -> f64 {
        let p = self.scatter_survival;
        self.bg_mean * (1.0 - p) / (self.det_efficiency * p)
    }

    /// `1 - p + ηp`.
    fn denom(&self) -> f64 {
        1.0 - self.scatter_survival + self.det_efficiency * self.scatter_survival
    }

    /// Mean number of scattered photons, `1/(1-p)`.
    pub fn mean_scattered(&self) -> f64 {
        1.0 / (1.0 - self.scatter_survival)
    }

    /// Mean detected fluorescence photons, `η/(1-p)`.
    pub fn mean_detected(&self) -> f64 {
        self.det_efficiency * self.mean_scattered()
    }

    pub fn with_bg_mean(self, bg_mean: f64) -> Self {
        Self { bg_mean, ..self }
    }
}

/// Which form of the detected-photon law to use at `d = 0`.
///
/// `PaperLiteral` applies the published expression for every `d ≥ 0`; its
/// `d = 0` mass is `(1-p)/(p(1-p+ηp))`, which is not a probability in
/// general and makes the law sum to `1/p`. `Corrected` uses the value the
/// underlying series actually sums to, `(1-p)(1-η)/(1-p+ηp)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PaperLiteral,
    #[default]
    Corrected,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::PaperLiteral => "paper-literal",
            Variant::Corrected => "corrected",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper-literal" | "paper_literal" => Ok(Variant::PaperLiteral),
            "corrected" => Ok(Variant::Corrected),
            other => Err(Error::UnknownStrategy {
                kind: "variant",
                name: other.to_string(),
                available: "paper-literal, corrected".into(),
            }),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `ln P_µ(n)`; `-inf` for impossible outcomes.
pub fn ln_poisson_pmf(n: u64, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "Poisson mean must be finite and nonnegative, got {mu}"
        )));
    }
    if mu == 0.0 {
        return Ok(if n == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let nf = n as f64;
    Ok(nf * mu.ln() - mu - ln_gamma(nf + 1.0))
}

/// Poisson probability `e^{-µ} µⁿ / n!`.
pub fn poisson_pmf(n: u64, mu: f64) -> Result<f64> {
    if n < 20 && mu >= 0.0 && mu.is_finite() && mu < 500.0 {
        // Exact product form; the log form loses a few ulps through ln_gamma.
        let mut v = (-mu).exp();
        for k in 1..=n {
            v *= mu / k as f64;
        }
        return Ok(v);
    }
    Ok(ln_poisson_pmf(n, mu)?.exp())
}

/// `P(n_scat = s) = p^{s-1}(1-p)` for `s ≥ 1`, zero for `s = 0`.
pub fn pmf_scatter_count(s: u64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "scatter survival must lie in (0, 1), got {p}"
        )));
    }
    if s == 0 {
        return Ok(0.0);
    }
    Ok(((s - 1) as f64 * p.ln()).exp() * (1.0 - p))
}

/// `P(n_det = d)` after binomial thinning of the scatter cascade.
pub fn pmf_detected_photons(d: u64, params: &CascadeParams, variant: Variant) -> Result<f64> {
    params.validate()?;
    let p = params.scatter_survival;
    let eta = params.det_efficiency;
    let a = params.denom();
    if d == 0 && variant == Variant::Corrected {
        return Ok((1.0 - p) * (1.0 - eta) / a);
    }
    let df = d as f64;
    let ln_mass = (df - 1.0) * p.ln() + (1.0 - p).ln() + df * eta.ln() - (df + 1.0) * a.ln();
    Ok(ln_mass.exp())
}

/// Value of `P(n_c | F = 2)` with a note on how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountMass {
    pub value: f64,
    /// The closed form could not certify its accuracy and direct summation
    /// was used instead.
    pub used_fallback: bool,
}

/// `P(n_c | F = 2)`: Poisson background convolved with the thinned cascade.
///
/// `PaperLiteral` evaluates `µⁿ/(n! p) · x eˣ · E_{-n}(x + µ)` in log space.
/// If its estimated rounding error exceeds [`CLOSED_FORM_ABS_TOL`], or if
/// `µ = 0` where the form degenerates, the convolution is summed directly.
/// `Corrected` always sums the convolution term by term.
pub fn pmf_counts_f2(n_c: u64, params: &CascadeParams, variant: Variant) -> Result<CountMass> {
    params.validate()?;
    match variant {
        Variant::Corrected => Ok(CountMass {
            value: convolve_direct(n_c, params, variant)?,
            used_fallback: false,
        }),
        Variant::PaperLiteral => {
            if let Some(value) = closed_form_literal(n_c, params)? {
                Ok(CountMass {
                    value,
                    used_fallback: false,
                })
            } else {
                Ok(CountMass {
                    value: convolve_direct(n_c, params, variant)?,
                    used_fallback: true,
                })
            }
        }
    }
}

/// The closed form, or `None` when it cannot be trusted to
/// [`CLOSED_FORM_ABS_TOL`].
fn closed_form_literal(n_c: u64, params: &CascadeParams) -> Result<Option<f64>> {
    let mu = params.bg_mean;
    if mu == 0.0 {
        return Ok(None);
    }
    let p = params.scatter_survival;
    let x = params.x();
    let nf = n_c as f64;
    let parts = [
        nf * mu.ln(),
        -ln_gamma(nf + 1.0),
        -p.ln(),
        x.ln(),
        x,
        ln_exp_integral_neg_order(n_c, x + mu)?,
    ];
    let ln_value: f64 = parts.iter().sum();
    let value = ln_value.exp();
    // Each log-space addend carries a relative error of a few ulps of its own
    // magnitude; exponentiating turns the absolute log error into a relative
    // error on the value.
    let log_err = 4.0 * f64::EPSILON * (parts.iter().map(|t| t.abs()).sum::<f64>() + 1.0);
    if !value.is_finite() || value * log_err > CLOSED_FORM_ABS_TOL {
        return Ok(None);
    }
    Ok(Some(value))
}

fn convolve_direct(n_c: u64, params: &CascadeParams, variant: Variant) -> Result<f64> {
    let mu = params.bg_mean;
    let mut sum = 0.0;
    for d in 0..=n_c {
        let bg = poisson_pmf(n_c - d, mu)?;
        if bg == 0.0 {
            continue;
        }
        sum += pmf_detected_photons(d, params, variant)? * bg;
    }
    Ok(sum)
}

/// Full pmf of `n_c | F = 2` under the corrected law, truncated once the
/// tail drops below `cutoff`.
pub fn f2_count_pmf(params: &CascadeParams, cutoff: f64) -> Result<Pmf> {
    params.validate()?;
    let mu = params.bg_mean;
    let mut detected: Vec<f64> = Vec::new();
    let mut background: Vec<f64> = Vec::new();
    Pmf::from_fn(cutoff, 0, |n| {
        let n = n as u64;
        detected.push(pmf_detected_photons(n, params, Variant::Corrected)?);
        background.push(poisson_pmf(n, mu)?);
        let nn = n as usize;
        Ok((0..=nn).map(|d| detected[d] * background[nn - d]).sum())
    })
}

/// Truncated Poisson pmf.
pub fn poisson_count_pmf(mu: f64, cutoff: f64) -> Result<Pmf> {
    poisson_pmf(0, mu)?;
    Pmf::from_fn(cutoff, 0, |n| poisson_pmf(n as u64, mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cascade(p: f64, eta: f64, mu: f64) -> CascadeParams {
        CascadeParams::new(p, eta, mu).unwrap()
    }

    #[test]
    fn poisson_edge_values() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(3, 0.0).unwrap(), 0.0);
        assert!(matches!(poisson_pmf(1, -0.5), Err(Error::Domain(_))));
        // 50-digit series evaluation: 0.2087554215743346244731694488...
        let v = poisson_pmf(2, 1.146).unwrap();
        assert!((v - 0.208_755_421_574_334_624_5).abs() < 1e-16);
        let total: f64 = (0..60).map(|n| poisson_pmf(n, 1.146).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_large_n_in_log_space() {
        let v = poisson_pmf(1000, 1000.0).unwrap();
        // Stirling: 1/sqrt(2π·1000) to leading order.
        assert!((v - 0.012_614_611_348_721_5).abs() < 1e-10);
    }

    #[test]
    fn scatter_count_values() {
        for p in [0.1, 0.5, 0.97] {
            assert!((pmf_scatter_count(1, p).unwrap() - (1.0 - p)).abs() < 1e-15);
            assert_eq!(pmf_scatter_count(0, p).unwrap(), 0.0);
        }
        assert!((pmf_scatter_count(3, 0.5).unwrap() - 0.125).abs() < 1e-15);
        let partial: f64 = (1..=25).map(|s| pmf_scatter_count(s, 0.9).unwrap()).sum();
        assert!((partial - (1.0 - 0.9f64.powi(25))).abs() < 1e-13);
        assert!(pmf_scatter_count(2, 1.0).is_err());
        assert!(pmf_scatter_count(2, 0.0).is_err());
    }

    #[test]
    fn detected_photons_values() {
        let c = cascade(0.5, 0.5, 0.0);
        let d1 = pmf_detected_photons(1, &c, Variant::Corrected).unwrap();
        assert!((d1 - 0.25 / 0.5625).abs() < 1e-15);
        let c0 = pmf_detected_photons(0, &c, Variant::Corrected).unwrap();
        let l0 = pmf_detected_photons(0, &c, Variant::PaperLiteral).unwrap();
        assert!((c0 - 1.0 / 3.0).abs() < 1e-15);
        assert!((l0 - 4.0 / 3.0).abs() < 1e-15);
        // Away from d = 0 both variants agree.
        assert_eq!(d1, pmf_detected_photons(1, &c, Variant::PaperLiteral).unwrap());
    }

    #[test]
    fn perfect_detection_reduces_to_scatter_law() {
        let c = cascade(0.8, 1.0, 0.0);
        assert_eq!(pmf_detected_photons(0, &c, Variant::Corrected).unwrap(), 0.0);
        for d in 1..30 {
            let got = pmf_detected_photons(d, &c, Variant::Corrected).unwrap();
            let want = pmf_scatter_count(d, 0.8).unwrap();
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn literal_law_sums_to_inverse_p() {
        let c = cascade(0.7, 0.1, 0.0);
        let total: f64 = (0..2000)
            .map(|d| pmf_detected_photons(d, &c, Variant::PaperLiteral).unwrap())
            .sum();
        assert!((total - 1.0 / 0.7).abs() < 1e-10);
    }

    #[test]
    fn corrected_counts_normalize() {
        for (p, eta, mu) in [(0.3, 0.5, 0.5), (0.95, 0.01, 3.0), (0.99, 0.0475, 1.146)] {
            let pmf = f2_count_pmf(&cascade(p, eta, mu), 1e-13).unwrap();
            assert!((pmf.total() - 1.0).abs() < 1e-10);
            assert!(pmf.masses().iter().all(|&m| (0.0..=1.0).contains(&m)));
        }
    }

    #[test]
    fn zero_background_counts_equal_detected_law() {
        let c = cascade(0.9, 0.3, 0.0);
        for n in 0..40 {
            for variant in [Variant::Corrected, Variant::PaperLiteral] {
                let got = pmf_counts_f2(n, &c, variant).unwrap();
                let want = pmf_detected_photons(n, &c, variant).unwrap();
                assert!((got.value - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_falls_back_when_ill_conditioned() {
        // η tiny drives x to ~1e9, where the log-space form cannot certify 1e-8.
        let c = cascade(0.3, 1e-9, 3.0);
        let m = pmf_counts_f2(2, &c, Variant::PaperLiteral).unwrap();
        assert!(m.used_fallback);
        let well = pmf_counts_f2(2, &cascade(0.3, 0.5, 3.0), Variant::PaperLiteral).unwrap();
        assert!(!well.used_fallback);
    }

    #[test]
    fn mean_detected_matches_pmf_mean() {
        let c = cascade(0.99, 0.0475, 1.146);
        let pmf = f2_count_pmf(&c, 1e-14).unwrap();
        assert!((pmf.mean() - (1.146 + c.mean_detected())).abs() < 1e-8);
    }

    #[test]
    fn invalid_cascade_rejected() {
        assert!(CascadeParams::new(1.0, 0.5, 1.0).is_err());
        assert!(CascadeParams::new(0.5, 0.0, 1.0).is_err());
        assert!(CascadeParams::new(0.5, 0.5, -1.0).is_err());
        assert!(CascadeParams::new(0.5, 1.0, 0.0).is_ok());
    }
}
