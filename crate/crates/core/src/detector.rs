//! Readout model: hyperfine state in, photon count out.
//!
//! A dark (F = 1) atom contributes only Poisson background. A bright
//! (F = 2) atom is described by one of the registered [`F2CountModel`]s:
//! the scatter-cascade Markov model, or a discretized Gaussian fitted to
//! observed bright-state histograms.

use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::distributions::{
    f2_count_pmf, poisson_count_pmf, sample_poisson, sample_readout_count_f2, CascadeParams, Pmf,
    DEFAULT_TAIL_CUTOFF,
};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HyperfineState {
    F1,
    F2,
}

impl HyperfineState {
    pub fn is_bright(self) -> bool {
        self == HyperfineState::F2
    }
}

/// Parameters of the readout phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    /// Mean background counts per readout window.
    pub bg_mean_counts: f64,
    /// Probability that a scattered photon leaves the atom in F = 2.
    pub scatter_survival: f64,
    /// Probability that a scattered photon is registered.
    pub det_efficiency: f64,
    /// Registered name of the bright-state count model.
    pub f2_model: String,
    pub gauss_mean_counts: f64,
    pub gauss_var_counts2: f64,
    /// Convolve the Gaussian heuristic with background. Off by default: the
    /// heuristic is fitted to total counts, background included.
    pub gauss_convolve_background: bool,
    pub readout_duration_s: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            bg_mean_counts: 1.146,
            scatter_survival: 0.99,
            det_efficiency: 0.0475,
            f2_model: MarkovModel::NAME.to_string(),
            gauss_mean_counts: 5.9,
            gauss_var_counts2: 17.6,
            gauss_convolve_background: false,
            readout_duration_s: 1e-3,
        }
    }
}

impl DetectorParams {
    pub fn cascade(&self) -> CascadeParams {
        CascadeParams {
            scatter_survival: self.scatter_survival,
            det_efficiency: self.det_efficiency,
            bg_mean: self.bg_mean_counts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cascade().validate()?;
        if !(self.gauss_var_counts2 > 0.0) || !self.gauss_mean_counts.is_finite() {
            return Err(Error::InvalidParams(format!(
                "gaussian heuristic needs finite mean and positive variance, got ({}, {})",
                self.gauss_mean_counts, self.gauss_var_counts2
            )));
        }
        if !(self.readout_duration_s > 0.0) {
            return Err(Error::InvalidParams(format!(
                "readout_duration_s must be positive, got {}",
                self.readout_duration_s
            )));
        }
        f2_models().get(&self.f2_model)?;
        Ok(())
    }

    pub fn with_bg_mean(&self, bg_mean_counts: f64) -> Self {
        Self {
            bg_mean_counts,
            ..self.clone()
        }
    }

    pub fn with_model(&self, name: &str) -> Self {
        Self {
            f2_model: name.to_string(),
            ..self.clone()
        }
    }
}

/// Draws counts for one fixed parameter set.
pub trait CountSampler: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> u64;
}

/// A bright-state count model.
pub trait F2CountModel: Named + Send + Sync {
    fn pmf(&self, params: &DetectorParams) -> Result<Pmf>;
    fn sampler(&self, params: &DetectorParams) -> Result<Box<dyn CountSampler>>;
}

/// Scatter cascade with binomial thinning plus Poisson background.
pub struct MarkovModel;

impl MarkovModel {
    pub const NAME: &'static str = "markov";
}

impl Named for MarkovModel {
    fn name(&self) -> &'static str {
        Self::NAME
    }
}

struct CascadeSampler(CascadeParams);

impl CountSampler for CascadeSampler {
    fn sample(&self, rng: &mut dyn RngCore) -> u64 {
        sample_readout_count_f2(&self.0, rng)
    }
}

impl F2CountModel for MarkovModel {
    fn pmf(&self, params: &DetectorParams) -> Result<Pmf> {
        f2_count_pmf(&params.cascade(), DEFAULT_TAIL_CUTOFF)
    }

    fn sampler(&self, params: &DetectorParams) -> Result<Box<dyn CountSampler>> {
        params.cascade().validate()?;
        Ok(Box::new(CascadeSampler(params.cascade())))
    }
}

/// Gaussian integrated over unit bins `[n-½, n+½)`, restricted to `n ≥ 0`
/// and renormalized.
pub struct GaussianModel;

impl GaussianModel {
    pub const NAME: &'static str = "gaussian";
}

impl Named for GaussianModel {
    fn name(&self) -> &'static str {
        Self::NAME
    }
}

/// Inverse-CDF sampler over a tabulated pmf, optionally adding background.
pub struct TableSampler {
    cdf: Vec<f64>,
    bg_mean: f64,
}

impl TableSampler {
    pub fn new(pmf: &Pmf, bg_mean: f64) -> Self {
        let mut cdf = pmf.cdf();
        // Fold the truncated tail into the last bin.
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Self { cdf, bg_mean }
    }
}

impl CountSampler for TableSampler {
    fn sample(&self, rng: &mut dyn RngCore) -> u64 {
        let u: f64 = rng.random();
        let n = self.cdf.partition_point(|&c| c <= u) as u64;
        n + sample_poisson(self.bg_mean, rng)
    }
}

impl F2CountModel for GaussianModel {
    fn pmf(&self, params: &DetectorParams) -> Result<Pmf> {
        let base = discretized_gaussian(
            params.gauss_mean_counts,
            params.gauss_var_counts2,
            DEFAULT_TAIL_CUTOFF,
        )?;
        if params.gauss_convolve_background {
            let bg = poisson_count_pmf(params.bg_mean_counts, DEFAULT_TAIL_CUTOFF)?;
            Ok(base.convolve(&bg))
        } else {
            Ok(base)
        }
    }

    fn sampler(&self, params: &DetectorParams) -> Result<Box<dyn CountSampler>> {
        let base = discretized_gaussian(
            params.gauss_mean_counts,
            params.gauss_var_counts2,
            DEFAULT_TAIL_CUTOFF,
        )?;
        let bg = if params.gauss_convolve_background {
            params.bg_mean_counts
        } else {
            0.0
        };
        Ok(Box::new(TableSampler::new(&base, bg)))
    }
}

/// `Φ(b) - Φ(a)` for `a < b`, taking differences on the side of zero where
/// they do not cancel.
fn normal_interval(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * erfc(-a / s) - 0.5 * erfc(b / s)
    }
}

/// Upper tail `1 - Φ(a)`.
fn normal_upper(a: f64) -> f64 {
    0.5 * erfc(a / std::f64::consts::SQRT_2)
}

/// Discretized Gaussian on `n ≥ 0`.
pub fn discretized_gaussian(mean: f64, var: f64, cutoff: f64) -> Result<Pmf> {
    if !(var > 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParams(format!(
            "gaussian needs finite mean and positive variance, got ({mean}, {var})"
        )));
    }
    let sd = var.sqrt();
    let z = |x: f64| (x - mean) / sd;
    let norm = normal_upper(z(-0.5));
    if !(norm > 0.0) {
        return Err(Error::InvalidParams(format!(
            "gaussian ({mean}, {var}) has no mass on n >= 0"
        )));
    }
    let mut masses = Vec::new();
    let mut n = 0usize;
    loop {
        let lo = n as f64 - 0.5;
        masses.push(normal_interval(z(lo), z(lo + 1.0)) / norm);
        let tail = normal_upper(z(lo + 1.0)) / norm;
        n += 1;
        if (tail < cutoff && lo + 1.0 > mean) || n >= crate::distributions::MAX_PMF_TERMS {
            break;
        }
    }
    let total: f64 = masses.iter().sum();
    let tail = (1.0 - total).max(0.0);
    let scale = (1.0 - tail) / total;
    Pmf::from_masses(masses.into_iter().map(|m| m * scale).collect())
}

/// All bright-state models, keyed by name.
pub fn f2_models() -> &'static Registry<dyn F2CountModel> {
    static REGISTRY: OnceLock<Registry<dyn F2CountModel>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn F2CountModel> = Registry::new("f2 model");
        reg.register(Arc::new(MarkovModel));
        reg.register(Arc::new(GaussianModel));
        reg
    })
}

/// Conditional count pmf `P(n_c | state)`.
pub fn pmf_counts_given_state(state: HyperfineState, params: &DetectorParams) -> Result<Pmf> {
    params.validate()?;
    match state {
        HyperfineState::F1 => poisson_count_pmf(params.bg_mean_counts, DEFAULT_TAIL_CUTOFF),
        HyperfineState::F2 => f2_models().get(&params.f2_model)?.pmf(params),
    }
}

/// Precomputed readout model for one parameter set: both conditional pmfs
/// and a sampler for each state.
pub struct ReadoutModel {
    params: DetectorParams,
    pmf_f1: Pmf,
    pmf_f2: Pmf,
    f2_sampler: Box<dyn CountSampler>,
}

impl ReadoutModel {
    pub fn new(params: &DetectorParams) -> Result<Self> {
        params.validate()?;
        let model = f2_models().get(&params.f2_model)?;
        Ok(Self {
            params: params.clone(),
            pmf_f1: pmf_counts_given_state(HyperfineState::F1, params)?,
            pmf_f2: model.pmf(params)?,
            f2_sampler: model.sampler(params)?,
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn pmf(&self, state: HyperfineState) -> &Pmf {
        match state {
            HyperfineState::F1 => &self.pmf_f1,
            HyperfineState::F2 => &self.pmf_f2,
        }
    }

    /// Draw one readout count. Under the Markov model the atom always ends
    /// dark; only the count is reported.
    pub fn sample<R: Rng + ?Sized>(&self, state: HyperfineState, rng: &mut R) -> u64 {
        match state {
            HyperfineState::F1 => sample_poisson(self.params.bg_mean_counts, rng),
            HyperfineState::F2 => {
                let mut dynrng: &mut R = rng;
                self.f2_sampler.sample(&mut dynrng)
            }
        }
    }
}

/// Draw one readout count for `state`.
pub fn sample_readout<R: Rng + ?Sized>(
    state: HyperfineState,
    params: &DetectorParams,
    rng: &mut R,
) -> Result<u64> {
    Ok(ReadoutModel::new(params)?.sample(state, rng))
}
