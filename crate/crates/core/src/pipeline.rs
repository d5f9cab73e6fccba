//! End-to-end analyses: simulate a campaign, then run the inference chain
//! on its output.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RuleSource};
use crate::detector::{pmf_counts_given_state, CountSampler, DetectorParams, HyperfineState, TableSampler};
use crate::distributions::Pmf;
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;
use crate::inference::{
    choose_threshold, choose_threshold_empirical, estimators, fit_histogram_models, fit_rate,
    fit_saturation, mse_pqj, rate_fit_slope_target, DecisionRule, EstimatorContext, FitReport,
    HistogramFits, PointEstimate, PqjEstimator, RateFit, RatePoint, RuleProvenance,
    SaturationPoint, ThresholdEstimator,
};
use crate::rng::stream;
use crate::sequence::{
    jump_probability, run_characterization, run_dark_current_campaign, run_qe_campaign,
    run_readout_noise_campaign, CampaignConfig, CampaignResult, DetectionTally, Execution,
    ExposureParams, ReadoutNoiseSettings,
};

/// Threshold and fidelity reported for the measured histograms, kept for
/// comparison only.
pub const REFERENCE_THRESHOLD: u64 = 4;
pub const REFERENCE_FIDELITY: f64 = 0.72;

/// Stream tags for draws made by the analyses themselves; campaigns use
/// tags 1 to 4.
const TAG_BOOTSTRAP: u64 = 5;
const TAG_CALIBRATION: u64 = 6;

/// Decision rule together with the pmfs it was built from.
#[derive(Debug, Clone)]
pub struct RuleSetup {
    pub context: EstimatorContext,
    /// Characterization histograms, when the rule is empirical.
    pub histograms: Option<(CountHistogram, CountHistogram)>,
}

fn campaign(config: &ExperimentConfig, n_runs: u64, sweep: Vec<f64>, execution: Execution) -> CampaignConfig {
    CampaignConfig {
        n_runs,
        sweep,
        master_seed: config.master_seed,
        detector: config.detector.clone(),
        exposure: config.exposure.clone(),
        execution,
    }
}

pub fn model_pmfs(detector: &DetectorParams) -> Result<(Pmf, Pmf)> {
    Ok((
        pmf_counts_given_state(HyperfineState::F1, detector)?,
        pmf_counts_given_state(HyperfineState::F2, detector)?,
    ))
}

fn rule_from(pmf1: &Pmf, pmf2: &Pmf, threshold: Option<u64>, provenance: RuleProvenance) -> DecisionRule {
    match threshold {
        Some(t) => DecisionRule::at_threshold(pmf1, pmf2, t),
        None => DecisionRule {
            provenance,
            ..choose_threshold(pmf1, pmf2)
        },
    }
}

/// Build the decision rule the configuration asks for. An empirical rule
/// runs the characterization campaign first.
pub fn decision_rule(config: &ExperimentConfig, execution: Execution) -> Result<RuleSetup> {
    match config.decision.source {
        RuleSource::Model => {
            let (pmf1, pmf2) = model_pmfs(&config.detector)?;
            let rule = rule_from(&pmf1, &pmf2, config.decision.threshold, RuleProvenance::Model);
            Ok(RuleSetup {
                context: EstimatorContext { pmf1, pmf2, rule },
                histograms: None,
            })
        }
        RuleSource::Empirical => {
            let result = run_characterization(&campaign(
                config,
                config.campaigns.characterize.n_runs,
                vec![0.0],
                execution,
            ))?;
            let h1 = result.settings[0].histogram();
            let h2 = result.settings[1].histogram();
            let (pmf1, pmf2) = (h1.to_pmf()?, h2.to_pmf()?);
            let rule = match config.decision.threshold {
                Some(t) => DecisionRule {
                    provenance: RuleProvenance::Empirical,
                    ..DecisionRule::at_threshold(&pmf1, &pmf2, t)
                },
                None => choose_threshold_empirical(&h1, &h2)?,
            };
            Ok(RuleSetup {
                context: EstimatorContext { pmf1, pmf2, rule },
                histograms: Some((h1, h2)),
            })
        }
    }
}

/// One row of the bright/dark histogram table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub n_c: u64,
    pub count_f1: u64,
    pub count_f2: u64,
    pub model_f1: f64,
    pub model_f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeReport {
    pub f2_model: String,
    pub retained_runs: [u64; 2],
    pub fits_f1: HistogramFits,
    pub fits_f2: HistogramFits,
    pub rule_model: DecisionRule,
    pub rule_empirical: DecisionRule,
    pub reference_threshold: u64,
    pub reference_fidelity: f64,
    /// Model-rule fidelity minus the reference fidelity.
    pub fidelity_gap: f64,
}

pub struct CharacterizeOutput {
    pub report: CharacterizeReport,
    pub rows: Vec<HistogramRow>,
    pub campaign: CampaignResult,
}

pub fn characterize(config: &ExperimentConfig, execution: Execution) -> Result<CharacterizeOutput> {
    let result = run_characterization(&campaign(
        config,
        config.campaigns.characterize.n_runs,
        vec![0.0],
        execution,
    ))?;
    let h1 = result.settings[0].histogram();
    let h2 = result.settings[1].histogram();
    let (pmf1, pmf2) = model_pmfs(&config.detector)?;
    let criterion = config.estimator.gaussian_criterion;
    let rule_model = rule_from(&pmf1, &pmf2, config.decision.threshold, RuleProvenance::Model);
    let rule_empirical = match config.decision.threshold {
        Some(t) => DecisionRule {
            provenance: RuleProvenance::Empirical,
            ..DecisionRule::at_threshold(&h1.to_pmf()?, &h2.to_pmf()?, t)
        },
        None => choose_threshold_empirical(&h1, &h2)?,
    };
    let len = [h1.counts().len(), h2.counts().len(), pmf1.n_max() + 1, pmf2.n_max() + 1]
        .into_iter()
        .max()
        .unwrap_or(0);
    let rows = (0..len)
        .map(|n| HistogramRow {
            n_c: n as u64,
            count_f1: h1.count(n),
            count_f2: h2.count(n),
            model_f1: pmf1.mass(n),
            model_f2: pmf2.mass(n),
        })
        .collect();
    let report = CharacterizeReport {
        f2_model: config.detector.f2_model.clone(),
        retained_runs: [h1.total(), h2.total()],
        fits_f1: fit_histogram_models(&h1, criterion)?,
        fits_f2: fit_histogram_models(&h2, criterion)?,
        fidelity_gap: rule_model.fidelity - REFERENCE_FIDELITY,
        rule_model,
        rule_empirical,
        reference_threshold: REFERENCE_THRESHOLD,
        reference_fidelity: REFERENCE_FIDELITY,
    };
    Ok(CharacterizeOutput {
        report,
        rows,
        campaign: result,
    })
}

/// One point of the jump-probability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QeSweepRow {
    pub setting_id: u64,
    pub nbar_photons: f64,
    pub pqj: f64,
    pub pqj_err: f64,
    pub nbar_err: f64,
    pub raw: f64,
    pub clamped: bool,
    pub retained_runs: u64,
    pub detections: u64,
    /// Jump probability the simulation used.
    pub true_pqj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeReport {
    pub estimator: String,
    pub rule: DecisionRule,
    pub eta_qj: FitReport,
    pub injected_eta_qj: f64,
    pub within_3se: bool,
    pub bootstrap_replicates: u64,
}

pub struct QeOutput {
    pub report: QeReport,
    pub rows: Vec<QeSweepRow>,
    pub campaign: CampaignResult,
}

/// Resample a histogram with replacement.
fn resample(hist: &CountHistogram, master_seed: u64, replicate: u64, which: u64) -> Result<CountHistogram> {
    let sampler = TableSampler::new(&hist.to_pmf()?, 0.0);
    let mut rng = stream(master_seed, (TAG_BOOTSTRAP << 32) | which, replicate, "bootstrap");
    Ok((0..hist.total()).map(|_| sampler.sample(&mut rng)).collect())
}

/// Standard deviation of each setting's estimate over bootstrap
/// replicates of the characterization histograms.
fn bootstrap_spread(
    config: &ExperimentConfig,
    setup: &RuleSetup,
    estimator: &dyn PqjEstimator,
    hists: &[CountHistogram],
) -> Result<Vec<f64>> {
    let Some((h1, h2)) = &setup.histograms else {
        return Ok(vec![0.0; hists.len()]);
    };
    let b = config.decision.bootstrap_replicates;
    let mut sums = vec![(0.0, 0.0); hists.len()];
    for r in 0..b {
        let r1 = resample(h1, config.master_seed, r, 1)?;
        let r2 = resample(h2, config.master_seed, r, 2)?;
        let (pmf1, pmf2) = (r1.to_pmf()?, r2.to_pmf()?);
        let rule = DecisionRule {
            provenance: RuleProvenance::Empirical,
            ..DecisionRule::at_threshold(&pmf1, &pmf2, setup.context.rule.threshold)
        };
        let ctx = EstimatorContext { pmf1, pmf2, rule };
        for (s, h) in sums.iter_mut().zip(hists) {
            // A replicate that cannot produce an estimate is skipped.
            if let Ok(e) = estimator.estimate(h, &ctx) {
                s.0 += e.value;
                s.1 += e.value * e.value;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(s, ss)| {
            let n = b as f64;
            ((ss / n - (s / n).powi(2)) * n / (n - 1.0).max(1.0)).max(0.0).sqrt()
        })
        .collect())
}

pub fn qe_sweep(config: &ExperimentConfig, execution: Execution) -> Result<QeOutput> {
    let setup = decision_rule(config, execution)?;
    let estimator = estimators().get(&config.estimator.name)?;
    let qe = &config.campaigns.qe;
    let result = run_qe_campaign(&campaign(config, qe.n_runs, qe.nbar_photons.clone(), execution))?;
    let hists: Vec<CountHistogram> = result.settings.iter().map(|s| s.histogram()).collect();
    let estimates: Vec<PointEstimate> = hists
        .iter()
        .map(|h| estimator.estimate(h, &setup.context))
        .collect::<Result<_>>()?;
    let spread = bootstrap_spread(config, &setup, estimator.as_ref(), &hists)?;

    let rows: Vec<QeSweepRow> = result
        .settings
        .iter()
        .zip(&estimates)
        .zip(&spread)
        .map(|((s, e), sd)| QeSweepRow {
            setting_id: s.setting_id,
            nbar_photons: s.setting_value,
            pqj: e.value,
            pqj_err: e.std_error.hypot(*sd),
            nbar_err: qe.nbar_rel_uncertainty * s.setting_value,
            raw: e.raw,
            clamped: e.clamped,
            retained_runs: s.retained_runs(),
            detections: s.detections(setup.context.rule.threshold),
            true_pqj: jump_probability(&ExposureParams {
                nbar_photons: s.setting_value,
                ..config.exposure.clone()
            }),
        })
        .collect();
    let points: Vec<SaturationPoint> = rows
        .iter()
        .map(|r| SaturationPoint {
            nbar: r.nbar_photons,
            nbar_err: r.nbar_err,
            pqj: r.pqj,
            pqj_err: r.pqj_err,
        })
        .collect();
    let eta_qj = fit_saturation(&points)?;
    let injected = config.exposure.eta_qj;
    Ok(QeOutput {
        report: QeReport {
            estimator: estimator.name().to_string(),
            rule: setup.context.rule,
            within_3se: eta_qj.within(injected, 3.0),
            eta_qj,
            injected_eta_qj: injected,
            bootstrap_replicates: config.decision.bootstrap_replicates,
        },
        rows,
        campaign: result,
    })
}

/// Exact detection probability among retained runs at one readout-noise
/// setting: the atom reaches readout in F = 2 through preparation error or
/// a dark jump during the wait, otherwise in F = 1.
pub fn readout_noise_detection_probability(
    config: &ExperimentConfig,
    bg_rate_per_s: f64,
    t_rd: f64,
    threshold: u64,
) -> Result<f64> {
    let noise = &config.campaigns.readout_noise;
    let detector = DetectorParams {
        bg_mean_counts: bg_rate_per_s * t_rd,
        readout_duration_s: t_rd,
        ..config.detector.clone()
    };
    let (pmf1, pmf2) = model_pmfs(&detector)?;
    let rule = DecisionRule::at_threshold(&pmf1, &pmf2, threshold);
    let exposure = &config.exposure;
    let dark = jump_probability(&ExposureParams {
        nbar_photons: 0.0,
        exposure_duration_s: noise.wait_s,
        ..exposure.clone()
    });
    let bright = exposure.prep_error + (1.0 - exposure.prep_error) * dark;
    Ok((1.0 - bright) * rule.eps_fp + bright * (1.0 - rule.eps_fn))
}

/// Regression slope expected over the configured sweep at a background rate.
pub fn readout_noise_expected_slope(config: &ExperimentConfig, bg_rate_per_s: f64, threshold: u64) -> Result<f64> {
    let ts = &config.campaigns.readout_noise.t_rd_s;
    let probs: Vec<f64> = ts
        .iter()
        .map(|&t| readout_noise_detection_probability(config, bg_rate_per_s, t, threshold))
        .collect::<Result<_>>()?;
    Ok(rate_fit_slope_target(ts, &probs))
}

/// Background rate for which the expected slope equals `target`.
pub fn tune_background_rate(config: &ExperimentConfig, target: f64, threshold: u64) -> Result<f64> {
    let slope = |rate: f64| readout_noise_expected_slope(config, rate, threshold);
    let floor = slope(0.0)?;
    if target <= floor {
        return Err(Error::InvalidParams(format!(
            "readout error rate {target}/s is below the slope {floor}/s reached without background"
        )));
    }
    let mut hi = 100.0;
    while slope(hi)? < target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::InvalidParams(format!(
                "readout error rate {target}/s is out of reach"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutNoiseReport {
    pub threshold: u64,
    pub bg_rate_per_s: f64,
    pub tuned: bool,
    pub target_rate_per_s: f64,
    pub expected_slope_per_s: f64,
    pub fit: RateFit,
    /// Detection probability per read at the nominal readout duration,
    /// from the fitted slope.
    pub dark_counts_per_read: f64,
    pub dark_counts_per_read_err: f64,
    /// Exact false-positive probability at the nominal readout duration.
    pub exact_fp_per_read: f64,
    pub within_3se: bool,
}

pub struct RateOutput<R> {
    pub report: R,
    pub tallies: Vec<DetectionTally>,
    pub campaign: CampaignResult,
}

fn rate_points(tallies: &[DetectionTally]) -> Vec<RatePoint> {
    tallies
        .iter()
        .map(|t| RatePoint {
            duration_s: t.duration_s,
            detections: t.detections,
            n_runs: t.retained_runs,
        })
        .collect()
}

pub fn readout_noise(config: &ExperimentConfig, execution: Execution) -> Result<RateOutput<ReadoutNoiseReport>> {
    let setup = decision_rule(config, execution)?;
    let threshold = setup.context.rule.threshold;
    let rn = &config.campaigns.readout_noise;
    let target = rn.readout_error_rate_per_s;
    let (bg_rate, tuned) = match rn.bg_rate_per_s {
        Some(r) => (r, false),
        None if target == 0.0 => (0.0, true),
        None => (tune_background_rate(config, target, threshold)?, true),
    };
    let noise = ReadoutNoiseSettings {
        wait_s: rn.wait_s,
        bg_rate_per_s: bg_rate,
    };
    let (result, tallies) = run_readout_noise_campaign(
        &campaign(config, rn.n_runs, rn.t_rd_s.clone(), execution),
        &noise,
        threshold,
    )?;
    let fit = fit_rate(&rate_points(&tallies))?;
    let t_nominal = config.detector.readout_duration_s;
    let expected = readout_noise_expected_slope(config, bg_rate, threshold)?;
    let target_slope = if tuned { target } else { expected };
    Ok(RateOutput {
        report: ReadoutNoiseReport {
            threshold,
            bg_rate_per_s: bg_rate,
            tuned,
            target_rate_per_s: target,
            expected_slope_per_s: expected,
            dark_counts_per_read: fit.slope.estimate * t_nominal,
            dark_counts_per_read_err: fit.slope.std_error * t_nominal,
            exact_fp_per_read: readout_noise_detection_probability(config, bg_rate, t_nominal, threshold)?,
            within_3se: fit.slope.within(target_slope, 3.0),
            fit,
        },
        tallies,
        campaign: result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarkCurrentReport {
    pub rule: DecisionRule,
    /// Regression of the detection fraction.
    pub fit: RateFit,
    /// Jumps per second: the detection slope divided by the rule contrast.
    pub dark_rate: FitReport,
    pub injected_rate_per_s: f64,
    pub within_3se: bool,
    /// The fitted rate is within 3 SE of zero.
    pub consistent_with_zero: bool,
}

pub fn dark_current(config: &ExperimentConfig, execution: Execution) -> Result<RateOutput<DarkCurrentReport>> {
    let setup = decision_rule(config, execution)?;
    let rule = setup.context.rule;
    let dc = &config.campaigns.dark_current;
    let (result, tallies) = run_dark_current_campaign(
        &campaign(config, dc.n_runs, dc.t_exp_s.clone(), execution),
        rule.threshold,
    )?;
    let fit = fit_rate(&rate_points(&tallies))?;
    let contrast = rule.contrast();
    if !(contrast > 0.0) {
        return Err(Error::UninformativeRule(contrast));
    }
    let mut dark_rate = fit.slope.clone();
    dark_rate.estimate /= contrast;
    dark_rate.std_error /= contrast;
    dark_rate.diagnostics.push(format!("contrast={contrast}"));
    let injected = config.exposure.dark_jump_rate_per_s;
    Ok(RateOutput {
        report: DarkCurrentReport {
            within_3se: dark_rate.within(injected, 3.0),
            consistent_with_zero: dark_rate.within(0.0, 3.0),
            rule,
            fit,
            dark_rate,
            injected_rate_per_s: injected,
        },
        tallies,
        campaign: result,
    })
}

/// Method used to generate calibration campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    /// Detection outcomes drawn directly as Bernoulli trials.
    Decision,
    /// Full prepare / expose / readout sequences.
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub method: CalibrationMethod,
    pub p_detect: f64,
    pub p_qj: f64,
    pub n_runs: u64,
    pub n_campaigns: u64,
    /// `p_detect` lies in `[eps_fp, 1 - eps_fn]`, so some jump probability
    /// produces it. Unreachable sequence rows are not simulated.
    pub reachable: bool,
    pub empirical_mse: f64,
    pub predicted_mse: f64,
    pub rel_diff: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorValidationReport {
    pub rule: DecisionRule,
    pub rel_tolerance: f64,
    pub rows: Vec<CalibrationRow>,
    pub passed: bool,
}

fn calibration_row(
    method: CalibrationMethod,
    p_detect: f64,
    p_qj: f64,
    n_runs: u64,
    errors: &[(f64, f64)],
    tolerance: f64,
) -> CalibrationRow {
    let n = errors.len() as f64;
    let empirical = errors.iter().map(|(e, _)| e * e).sum::<f64>() / n;
    let predicted = errors.iter().map(|(_, p)| p).sum::<f64>() / n;
    let rel = (empirical - predicted).abs() / predicted;
    CalibrationRow {
        method,
        p_detect,
        p_qj,
        n_runs,
        n_campaigns: errors.len() as u64,
        reachable: true,
        empirical_mse: empirical,
        predicted_mse: predicted,
        rel_diff: rel,
        passed: rel <= tolerance,
    }
}

/// Compare the empirical mean-squared error of the threshold estimator
/// with its binomial prediction.
///
/// The unclamped estimate is scored against the jump probability that
/// produces `p_detect`; clamping would bias the comparison near the
/// boundaries.
pub fn validate_estimators(config: &ExperimentConfig, execution: Execution) -> Result<EstimatorValidationReport> {
    let setup = decision_rule(config, execution)?;
    let rule = setup.context.rule;
    let contrast = rule.contrast();
    if !(contrast > 0.0) {
        return Err(Error::UninformativeRule(contrast));
    }
    let v = &config.validation.estimators;
    let mut rows = Vec::new();
    for (i, &p_d) in v.p_detect.iter().enumerate() {
        let p_qj = (p_d - rule.eps_fp) / contrast;
        let predicted = mse_pqj(p_d, &rule, v.n_runs)?;
        let binomial = Binomial::new(v.n_runs, p_d)
            .map_err(|e| Error::InvalidParams(format!("binomial: {e}")))?;
        let errors = execution.map(v.n_campaigns, |c| {
            let mut rng = stream(config.master_seed, (TAG_CALIBRATION << 32) | i as u64, c, "decision");
            let d = binomial.sample(&mut rng);
            let raw = (d as f64 / v.n_runs as f64 - rule.eps_fp) / contrast;
            (raw - p_qj, predicted)
        })?;
        rows.push(calibration_row(CalibrationMethod::Decision, p_d, p_qj, v.n_runs, &errors, v.rel_tolerance));

        let reachable = (0.0..=1.0).contains(&p_qj) && p_qj < 1.0;
        if !reachable {
            rows.push(CalibrationRow {
                method: CalibrationMethod::Sequence,
                p_detect: p_d,
                p_qj,
                n_runs: v.n_runs,
                n_campaigns: 0,
                reachable: false,
                empirical_mse: f64::NAN,
                predicted_mse: predicted,
                rel_diff: f64::NAN,
                passed: true,
            });
            continue;
        }
        let nbar = config.exposure.nbar_photons.max(1.0);
        let exposure = ExposureParams {
            eta_qj: -(-p_qj).ln_1p() / nbar,
            nbar_photons: nbar,
            dark_jump_rate_per_s: 0.0,
            prep_error: 0.0,
            ..config.exposure.clone()
        };
        let results = execution.map(v.n_campaigns, |c| -> Result<(f64, f64)> {
            let seed = stream(config.master_seed, (TAG_CALIBRATION << 32) | i as u64, c, "sequence")
                .random::<u64>();
            let cc = CampaignConfig {
                n_runs: v.n_runs,
                sweep: vec![nbar],
                master_seed: seed,
                detector: config.detector.clone(),
                exposure: exposure.clone(),
                execution: Execution::Serial,
            };
            let result = run_qe_campaign(&cc)?;
            let hist = result.settings[0].histogram();
            let est = ThresholdEstimator.estimate(&hist, &setup.context)?;
            Ok((est.raw - p_qj, mse_pqj(p_d, &rule, hist.total())?))
        })?;
        let errors = results.into_iter().collect::<Result<Vec<_>>>()?;
        rows.push(calibration_row(CalibrationMethod::Sequence, p_d, p_qj, v.n_runs, &errors, v.rel_tolerance));
    }
    Ok(EstimatorValidationReport {
        rule,
        rel_tolerance: v.rel_tolerance,
        passed: rows.iter().all(|r| r.passed),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rule_is_informative() {
        let setup = decision_rule(&ExperimentConfig::with_seed(1), Execution::Serial).unwrap();
        let r = setup.context.rule;
        assert!(r.contrast() > 0.3, "{r:?}");
        assert_eq!(r.provenance, RuleProvenance::Model);
    }

    #[test]
    fn fixed_threshold_is_respected() {
        let mut c = ExperimentConfig::with_seed(1);
        c.decision.threshold = Some(7);
        let setup = decision_rule(&c, Execution::Serial).unwrap();
        assert_eq!(setup.context.rule.threshold, 7);
        assert_eq!(setup.context.rule.provenance, RuleProvenance::Fixed);
    }

    #[test]
    fn tuning_hits_target_slope() {
        let c = ExperimentConfig::with_seed(1);
        let thr = decision_rule(&c, Execution::Serial).unwrap().context.rule.threshold;
        let rate = tune_background_rate(&c, 18.0, thr).unwrap();
        let slope = readout_noise_expected_slope(&c, rate, thr).unwrap();
        assert!((slope - 18.0).abs() < 1e-9, "{slope}");
    }

    #[test]
    fn zero_background_and_dark_rate_gives_no_detections() {
        let mut c = ExperimentConfig::with_seed(3);
        c.exposure.dark_jump_rate_per_s = 0.0;
        c.campaigns.readout_noise.bg_rate_per_s = Some(0.0);
        c.campaigns.readout_noise.n_runs = 200;
        let out = readout_noise(&c, Execution::Serial).unwrap();
        assert!(out.tallies.iter().all(|t| t.detections == 0));
        assert!(out.report.fit.consistent_with_zero);
    }

    #[test]
    fn empirical_rule_with_bootstrap() {
        let mut c = ExperimentConfig::with_seed(5);
        c.decision.source = RuleSource::Empirical;
        c.decision.bootstrap_replicates = 20;
        c.campaigns.characterize.n_runs = 2000;
        c.campaigns.qe.n_runs = 100;
        c.estimator.name = ThresholdEstimator::NAME.into();
        let out = qe_sweep(&c, Execution::Auto).unwrap();
        assert_eq!(out.report.rule.provenance, RuleProvenance::Empirical);
        assert!(out.rows.iter().all(|r| r.pqj_err > 0.0));
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mut c = ExperimentConfig::with_seed(9);
        c.campaigns.qe.n_runs = 50;
        let a = qe_sweep(&c, Execution::Serial).unwrap();
        let b = qe_sweep(&c, Execution::Parallel(3)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.report, b.report);
    }
}
