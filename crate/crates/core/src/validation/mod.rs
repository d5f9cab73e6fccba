//! Brute-force reference computations.
//!
//! Nothing here calls into the closed forms it is used to check: detected
//! photon masses are summed over the scatter count `s` directly, Poisson
//! weights are built by repeated multiplication, and the exponential
//! integral is integrated numerically.

pub mod quadrature;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distributions::{
    exp_integral_neg_order, pmf_counts_f2, pmf_detected_photons, CascadeParams, Pmf, Variant,
};
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;

pub use quadrature::exp_integral_neg_order_quadrature;

/// Tail mass left out of the truncated scatter sums.
pub const ORACLE_TAIL: f64 = 1e-14;

/// `P(n_det = d)` by summing binomial thinning over the geometric scatter
/// count. `PaperLiteral` extends the scatter law `p^{s-1}(1-p)` to `s = 0`,
/// which is what the published expression implicitly sums.
pub fn detected_mass_by_scatter_sum(d: u64, params: &CascadeParams, variant: Variant) -> f64 {
    let p = params.scatter_survival;
    let eta = params.det_efficiency;
    let s_max = ((ORACLE_TAIL.ln() / p.ln()).ceil() as u64).max(d) + d + 1;
    // term(s) = C(s, d) η^d (1-η)^{s-d} p^{s-1} (1-p), stepped in s.
    let mut term = eta.powi(d as i32) * p.powi(d as i32 - 1) * (1.0 - p);
    let mut sum = 0.0;
    let start = match (variant, d) {
        (Variant::Corrected, 0) => {
            term *= (1.0 - eta) * p;
            1
        }
        _ => d,
    };
    for s in start..=s_max {
        sum += term;
        term *= (s + 1) as f64 / (s + 1 - d) as f64 * (1.0 - eta) * p;
    }
    sum
}

/// `P(n_c | F = 2)` by explicit convolution of scatter-summed detected masses
/// with Poisson background.
pub fn counts_by_brute_force(n_c: u64, params: &CascadeParams, variant: Variant) -> f64 {
    let mu = params.bg_mean;
    let mut poisson = vec![(-mu).exp()];
    for k in 1..=n_c {
        let prev = poisson[(k - 1) as usize];
        poisson.push(prev * mu / k as f64);
    }
    (0..=n_c)
        .map(|d| detected_mass_by_scatter_sum(d, params, variant) * poisson[(n_c - d) as usize])
        .sum()
}

/// One row of the closed-form versus brute-force comparison.
#[derive(Debug, Clone, Serialize)]
pub struct AppendixRow {
    pub p: f64,
    pub eta: f64,
    pub mu: f64,
    pub n_c: u64,
    pub closed_form: f64,
    pub brute_force: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixReport {
    pub variant: Variant,
    pub tolerance: f64,
    pub rows: Vec<AppendixRow>,
    pub max_abs_diff: f64,
    pub fallbacks: usize,
    /// Largest `d = 0` detected mass seen on the grid.
    pub max_d0_mass: f64,
    /// Grid points whose `d = 0` mass exceeds 1.
    pub d0_anomalies: usize,
    /// Every row is within `tolerance`.
    pub passed: bool,
}

pub const GRID_P: [f64; 3] = [0.3, 0.7, 0.95];
pub const GRID_ETA: [f64; 3] = [0.01, 0.1, 0.5];
pub const GRID_MU: [f64; 3] = [0.5, 1.146, 3.0];
pub const GRID_MAX_COUNT: u64 = 30;
pub const APPENDIX_TOL: f64 = 1e-10;

/// Compare the implementation against the brute-force oracle over the
/// 27-point `(p, η, µ)` grid for `n_c ≤ 30`.
pub fn validate_appendix(variant: Variant) -> Result<AppendixReport> {
    let mut rows = Vec::new();
    let mut fallbacks = 0;
    let mut max_d0_mass: f64 = 0.0;
    let mut d0_anomalies = 0;
    for &p in &GRID_P {
        for &eta in &GRID_ETA {
            for &mu in &GRID_MU {
                let params = CascadeParams::new(p, eta, mu)?;
                let d0 = pmf_detected_photons(0, &params, variant)?;
                max_d0_mass = max_d0_mass.max(d0);
                if d0 > 1.0 {
                    d0_anomalies += 1;
                }
                for n_c in 0..=GRID_MAX_COUNT {
                    let closed = pmf_counts_f2(n_c, &params, variant)?;
                    if closed.used_fallback {
                        fallbacks += 1;
                    }
                    let brute = counts_by_brute_force(n_c, &params, variant);
                    rows.push(AppendixRow {
                        p,
                        eta,
                        mu,
                        n_c,
                        closed_form: closed.value,
                        brute_force: brute,
                        abs_diff: (closed.value - brute).abs(),
                    });
                }
            }
        }
    }
    let max_abs_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    Ok(AppendixReport {
        variant,
        tolerance: APPENDIX_TOL,
        passed: max_abs_diff < APPENDIX_TOL,
        rows,
        max_abs_diff,
        fallbacks,
        max_d0_mass,
        d0_anomalies,
    })
}

/// Worst relative error of the closed-form exponential integral against the
/// recurrence `E_{-n} = (e^{-z} + n E_{-(n-1)})/z` and against quadrature.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpIntegralCheck {
    pub points: usize,
    pub max_recurrence_rel: f64,
    pub max_quadrature_rel: f64,
}

pub fn check_exp_integral(orders: &[u64], args: &[f64]) -> Result<ExpIntegralCheck> {
    let mut max_recurrence_rel: f64 = 0.0;
    let mut max_quadrature_rel: f64 = 0.0;
    let mut points = 0;
    for &z in args {
        for &n in orders {
            let value = exp_integral_neg_order(n, z)?;
            if n >= 1 {
                let lower = exp_integral_neg_order(n - 1, z)?;
                let rec = ((-z).exp() + n as f64 * lower) / z;
                max_recurrence_rel = max_recurrence_rel.max(((value - rec) / rec).abs());
            }
            let quad = exp_integral_neg_order_quadrature(n, z);
            max_quadrature_rel = max_quadrature_rel.max(((value - quad) / quad).abs());
            points += 1;
        }
    }
    Ok(ExpIntegralCheck {
        points,
        max_recurrence_rel,
        max_quadrature_rel,
    })
}

/// Pearson goodness-of-fit result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `hist` against `pmf`. Adjacent bins are pooled
/// left to right until each expects at least 5 draws; the remainder,
/// including the pmf tail, joins the last bin.
pub fn chi_square_gof(hist: &CountHistogram, pmf: &Pmf) -> Result<ChiSquare> {
    let total = hist.total() as f64;
    if total == 0.0 {
        return Err(Error::EmptyHistogram);
    }
    let len = hist.counts().len().max(pmf.n_max() + 1);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for n in 0..len {
        obs += hist.count(n) as f64;
        exp += pmf.mass(n) * total;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    exp += pmf.tail_mass() * total;
    match bins.last_mut() {
        Some(last) => {
            last.0 += obs;
            last.1 += exp;
        }
        None => bins.push((obs, exp)),
    }
    if bins.len() < 2 {
        return Err(Error::InvalidParams(
            "chi-square needs at least two pooled bins".into(),
        ));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParams(e.to_string()))?;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_sum_reproduces_worked_values() {
        let c = CascadeParams::new(0.5, 0.5, 0.0).unwrap();
        let d1 = detected_mass_by_scatter_sum(1, &c, Variant::Corrected);
        assert!((d1 - 0.25 / 0.5625).abs() < 1e-14);
        let d0 = detected_mass_by_scatter_sum(0, &c, Variant::Corrected);
        assert!((d0 - 1.0 / 3.0).abs() < 1e-14);
        let l0 = detected_mass_by_scatter_sum(0, &c, Variant::PaperLiteral);
        assert!((l0 - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn scatter_sum_normalizes_for_corrected() {
        let c = CascadeParams::new(0.7, 0.1, 0.0).unwrap();
        let total: f64 = (0..400)
            .map(|d| detected_mass_by_scatter_sum(d, &c, Variant::Corrected))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_of_exact_frequencies_is_zero() {
        let pmf = Pmf::from_masses(vec![0.25, 0.5, 0.25]).unwrap();
        let hist = CountHistogram::from_table(vec![250, 500, 250]);
        let c = chi_square_gof(&hist, &pmf).unwrap();
        assert_eq!(c.dof, 2);
        assert!(c.statistic < 1e-20);
        assert!((c.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_rejects_wrong_law() {
        let pmf = Pmf::from_masses(vec![0.5, 0.5]).unwrap();
        let hist = CountHistogram::from_table(vec![700, 300]);
        assert!(chi_square_gof(&hist, &pmf).unwrap().p_value < 1e-10);
    }
}
