use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{fit_mixture, infer_pqj, DecisionRule};
use crate::distributions::Pmf;
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;
use crate::registry::{Named, Registry};

/// What an estimator may use besides the histogram itself.
#[derive(Debug, Clone)]
pub struct EstimatorContext {
    pub pmf1: Pmf,
    pub pmf2: Pmf,
    pub rule: DecisionRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Value before clamping to `[0, 1]`.
    pub raw: f64,
    pub clamped: bool,
    pub diagnostics: Vec<String>,
}

/// Estimates the jump probability from the histogram of one setting.
pub trait PqjEstimator: Named + Send + Sync {
    fn estimate(&self, hist: &CountHistogram, ctx: &EstimatorContext) -> Result<PointEstimate>;
}

/// Detection fraction above the threshold, corrected for both error rates.
pub struct ThresholdEstimator;

impl ThresholdEstimator {
    pub const NAME: &'static str = "threshold";
}

impl Named for ThresholdEstimator {
    fn name(&self) -> &'static str {
        Self::NAME
    }
}

impl PqjEstimator for ThresholdEstimator {
    fn estimate(&self, hist: &CountHistogram, ctx: &EstimatorContext) -> Result<PointEstimate> {
        if hist.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let n = hist.total() as f64;
        let p_d = hist.above(ctx.rule.threshold) as f64 / n;
        let est = infer_pqj(p_d, &ctx.rule)?;
        // A fraction of exactly 0 or 1 would give zero variance; use half a
        // run instead.
        let p_var = p_d.clamp(0.5 / n, 1.0 - 0.5 / n);
        let contrast = ctx.rule.contrast();
        let std_error = (p_var * (1.0 - p_var) / n).sqrt() / contrast;
        let mut diagnostics = vec![format!("p_d={p_d}")];
        if est.clamped {
            diagnostics.push("clamped".into());
        }
        Ok(PointEstimate {
            value: est.estimate,
            std_error,
            raw: est.raw,
            clamped: est.clamped,
            diagnostics,
        })
    }
}

/// Bright weight of a two-component mixture fit to the whole histogram.
pub struct MixtureEstimator;

impl MixtureEstimator {
    pub const NAME: &'static str = "mixture";
}

impl Named for MixtureEstimator {
    fn name(&self) -> &'static str {
        Self::NAME
    }
}

impl PqjEstimator for MixtureEstimator {
    fn estimate(&self, hist: &CountHistogram, ctx: &EstimatorContext) -> Result<PointEstimate> {
        let fit = fit_mixture(hist, &ctx.pmf1, &ctx.pmf2)?;
        // The continuity floor keeps the error bar finite at the boundary.
        let std_error = if fit.std_error.is_finite() {
            fit.std_error
        } else {
            (0.5 / hist.total() as f64).sqrt()
        };
        Ok(PointEstimate {
            value: fit.estimate,
            std_error,
            raw: fit.estimate,
            clamped: fit.has_flag("boundary"),
            diagnostics: fit.diagnostics,
        })
    }
}

/// All jump-probability estimators, keyed by name.
pub fn estimators() -> &'static Registry<dyn PqjEstimator> {
    static REGISTRY: OnceLock<Registry<dyn PqjEstimator>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn PqjEstimator> = Registry::new("estimator");
        reg.register(Arc::new(ThresholdEstimator));
        reg.register(Arc::new(MixtureEstimator));
        reg
    })
}
