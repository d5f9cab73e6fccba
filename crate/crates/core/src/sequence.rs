//! The prepare → expose → readout → presence-check cycle, and the campaigns
//! built from it.
//!
//! Jump-inducing events during exposure (absorbed probe photons that end in
//! F = 2, and spontaneous dark jumps) are independent Poisson processes, so
//! the probability of at least one jump is `1 - exp(-(η_QJ n̄ + r_dark t))`.
//! Atom loss is a Poisson process running over exposure and readout.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, HyperfineState, ReadoutModel};
use crate::error::{Error, Result};
use crate::histogram::CountHistogram;
use crate::rng::StreamKey;

/// Upper bound on `η_QJ` for a single pass with 1:1 branching.
pub const SINGLE_PASS_BOUND: f64 = 0.25;

/// Parameters of the exposure phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExposureParams {
    /// Jump probability per incident probe photon.
    pub eta_qj: f64,
    /// Mean number of probe photons.
    pub nbar_photons: f64,
    pub dark_jump_rate_per_s: f64,
    pub exposure_duration_s: f64,
    pub atom_loss_rate_per_s: f64,
    /// Probability that preparation leaves the atom in F = 2.
    pub prep_error: f64,
}

impl Default for ExposureParams {
    fn default() -> Self {
        Self {
            eta_qj: 2.9e-3,
            nbar_photons: 570.0,
            dark_jump_rate_per_s: 9e-3,
            exposure_duration_s: 10e-3,
            atom_loss_rate_per_s: 0.1,
            prep_error: 0.0,
        }
    }
}

impl ExposureParams {
    /// Validate; returns warnings for allowed-but-suspicious values.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(0.0..=1.0).contains(&self.eta_qj) {
            return Err(Error::InvalidParams(format!(
                "eta_qj must lie in [0, 1], got {}",
                self.eta_qj
            )));
        }
        if self.eta_qj > SINGLE_PASS_BOUND {
            warnings.push(format!(
                "eta_qj = {} exceeds the single-pass bound {SINGLE_PASS_BOUND}",
                self.eta_qj
            ));
        }
        for (name, v) in [
            ("nbar_photons", self.nbar_photons),
            ("dark_jump_rate_per_s", self.dark_jump_rate_per_s),
            ("exposure_duration_s", self.exposure_duration_s),
            ("atom_loss_rate_per_s", self.atom_loss_rate_per_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.prep_error) {
            return Err(Error::InvalidParams(format!(
                "prep_error must lie in [0, 1], got {}",
                self.prep_error
            )));
        }
        Ok(warnings)
    }

    /// Mean number of jump-inducing events during exposure.
    pub fn jump_drive(&self) -> f64 {
        self.eta_qj * self.nbar_photons + self.dark_jump_rate_per_s * self.exposure_duration_s
    }

    pub fn probe_off(&self) -> Self {
        Self {
            nbar_photons: 0.0,
            ..self.clone()
        }
    }
}

/// Branching-ratio decomposition `η_QJ = q · η_abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingParams {
    /// Probability of decaying to the other ground state after excitation.
    pub q: f64,
    /// Excitation probability per incident photon.
    pub eta_abs: f64,
}

impl BranchingParams {
    pub fn new(q: f64, eta_abs: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) || !(0.0..=1.0).contains(&eta_abs) {
            return Err(Error::InvalidParams(format!(
                "branching needs q, eta_abs in [0, 1], got ({q}, {eta_abs})"
            )));
        }
        Ok(Self { q, eta_abs })
    }

    pub fn eta_qj(&self) -> f64 {
        self.q * self.eta_abs
    }

    /// Largest `η_QJ` reachable in a single natural-linewidth pass, `q(1-q)`.
    pub fn single_pass_bound(&self) -> f64 {
        self.q * (1.0 - self.q)
    }

    /// Does a directly specified `η_QJ` agree with this decomposition?
    pub fn consistent_with(&self, eta_qj: f64) -> bool {
        (self.eta_qj() - eta_qj).abs() <= 1e-12 * eta_qj.abs().max(1.0)
    }
}

/// Probability that at least one jump occurs during exposure.
pub fn jump_probability(exposure: &ExposureParams) -> f64 {
    -(-exposure.jump_drive()).exp_m1()
}

/// Outcome of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_index: u64,
    /// The atom was in F = 2 when readout started.
    pub jumped: bool,
    pub n_c: u64,
    pub atom_present: bool,
}

/// Run one prepare / expose / readout / presence-check cycle.
///
/// Each stage draws from its own labelled sub-stream of `key`, so the count
/// drawn for a lost atom has no effect on any other quantity.
pub fn run_single_sequence(
    exposure: &ExposureParams,
    readout: &ReadoutModel,
    key: StreamKey,
) -> RunOutcome {
    let mut prep_rng = key.with_label("prep").rng();
    let mut jump_rng = key.with_label("jump").rng();
    let mut loss_rng = key.with_label("loss").rng();
    let mut readout_rng = key.with_label("readout").rng();

    let prepared_bright = exposure.prep_error > 0.0 && prep_rng.random::<f64>() < exposure.prep_error;
    let jumped = prepared_bright || jump_rng.random::<f64>() < jump_probability(exposure);
    let state = if jumped {
        HyperfineState::F2
    } else {
        HyperfineState::F1
    };

    let sequence_time = exposure.exposure_duration_s + readout.params().readout_duration_s;
    let survival = (-exposure.atom_loss_rate_per_s * sequence_time).exp();
    let atom_present = loss_rng.random::<f64>() < survival;

    let n_c = readout.sample(state, &mut readout_rng);
    RunOutcome {
        run_index: key.run,
        jumped,
        n_c,
        atom_present,
    }
}

/// How campaign runs are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Serial,
    /// Thread pool with the given number of threads; 0 means rayon's default.
    Parallel(usize),
    #[default]
    Auto,
}

impl Execution {
    /// `(0..n).map(f)` under this schedule, in index order.
    pub fn map<T, F>(self, n: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match self {
            Execution::Serial => Ok((0..n).map(f).collect()),
            Execution::Auto => Ok((0..n).into_par_iter().map(f).collect()),
            Execution::Parallel(threads) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
                Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
            }
        }
    }
}

/// Shared inputs to every campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub n_runs: u64,
    /// Probe photon numbers, readout durations, or exposure durations,
    /// depending on the campaign.
    pub sweep: Vec<f64>,
    pub master_seed: u64,
    pub detector: DetectorParams,
    pub exposure: ExposureParams,
    pub execution: Execution,
}

impl CampaignConfig {
    fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::InvalidParams("n_runs must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(Error::InvalidParams("campaign sweep is empty".into()));
        }
        if let Some(bad) = self.sweep.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams(format!("sweep value {bad} is not a valid setting")));
        }
        self.detector.validate()?;
        self.exposure.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignKind {
    QuantumEfficiency,
    ReadoutNoise,
    DarkCurrent,
    Characterize,
}

impl CampaignKind {
    /// Unit tag of the swept quantity.
    pub fn unit(self) -> &'static str {
        match self {
            CampaignKind::QuantumEfficiency => "photons",
            CampaignKind::ReadoutNoise | CampaignKind::DarkCurrent => "s",
            CampaignKind::Characterize => "state",
        }
    }

    /// Keeps campaigns that share a master seed on disjoint streams.
    fn stream_tag(self) -> u64 {
        match self {
            CampaignKind::QuantumEfficiency => 1,
            CampaignKind::ReadoutNoise => 2,
            CampaignKind::DarkCurrent => 3,
            CampaignKind::Characterize => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CampaignKind::QuantumEfficiency => "qe-sweep",
            CampaignKind::ReadoutNoise => "readout-noise",
            CampaignKind::DarkCurrent => "dark-current",
            CampaignKind::Characterize => "characterize",
        }
    }
}

/// Stream key for run `run` of setting `setting` in a campaign.
pub fn run_key(kind: CampaignKind, master_seed: u64, setting: u64, run: u64) -> StreamKey {
    StreamKey::new(master_seed, (kind.stream_tag() << 32) | setting, run, "run")
}

/// All runs at one sweep setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingOutcome {
    pub setting_id: u64,
    pub setting_value: f64,
    pub runs: Vec<RunOutcome>,
}

impl SettingOutcome {
    pub fn retained(&self) -> impl Iterator<Item = &RunOutcome> + '_ {
        self.runs.iter().filter(|r| r.atom_present)
    }

    pub fn retained_runs(&self) -> u64 {
        self.retained().count() as u64
    }

    /// Histogram of `n_c` over runs with the atom present.
    pub fn histogram(&self) -> CountHistogram {
        self.retained().map(|r| r.n_c).collect()
    }

    /// Retained runs with `n_c > threshold`.
    pub fn detections(&self, threshold: u64) -> u64 {
        self.retained().filter(|r| r.n_c > threshold).count() as u64
    }

    pub fn jumped_fraction(&self) -> f64 {
        let retained = self.retained_runs();
        self.retained().filter(|r| r.jumped).count() as f64 / retained as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub kind: CampaignKind,
    pub settings: Vec<SettingOutcome>,
}

fn run_setting(
    kind: CampaignKind,
    config: &CampaignConfig,
    setting_id: u64,
    setting_value: f64,
    exposure: &ExposureParams,
    detector: &DetectorParams,
) -> Result<SettingOutcome> {
    let readout = ReadoutModel::new(detector)?;
    let runs = config.execution.map(config.n_runs, |run| {
        run_single_sequence(
            exposure,
            &readout,
            run_key(kind, config.master_seed, setting_id, run),
        )
    })?;
    Ok(SettingOutcome {
        setting_id,
        setting_value,
        runs,
    })
}

/// Sweep the mean probe photon number.
pub fn run_qe_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    let kind = CampaignKind::QuantumEfficiency;
    let settings = config
        .sweep
        .iter()
        .enumerate()
        .map(|(i, &nbar)| {
            let exposure = ExposureParams {
                nbar_photons: nbar,
                ..config.exposure.clone()
            };
            run_setting(kind, config, i as u64, nbar, &exposure, &config.detector)
        })
        .collect::<Result<_>>()?;
    Ok(CampaignResult { kind, settings })
}

/// Readout-noise protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutNoiseSettings {
    /// Idle time between preparation and readout, probe off.
    pub wait_s: f64,
    /// Background counts per second of readout; the mean per readout is
    /// `bg_rate_per_s · t_rd`.
    pub bg_rate_per_s: f64,
}

impl Default for ReadoutNoiseSettings {
    fn default() -> Self {
        Self {
            wait_s: 37e-3,
            bg_rate_per_s: 1146.0,
        }
    }
}

/// Per-setting detection tally for rate regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionTally {
    pub duration_s: f64,
    pub detections: u64,
    pub retained_runs: u64,
}

fn tallies(result: &CampaignResult, threshold: u64) -> Vec<DetectionTally> {
    result
        .settings
        .iter()
        .map(|s| DetectionTally {
            duration_s: s.setting_value,
            detections: s.detections(threshold),
            retained_runs: s.retained_runs(),
        })
        .collect()
}

/// Detector and exposure used at one readout-noise setting.
pub fn readout_noise_setting(
    config: &CampaignConfig,
    noise: &ReadoutNoiseSettings,
    t_rd: f64,
) -> (ExposureParams, DetectorParams) {
    let exposure = ExposureParams {
        nbar_photons: 0.0,
        exposure_duration_s: noise.wait_s,
        ..config.exposure.clone()
    };
    let detector = DetectorParams {
        bg_mean_counts: noise.bg_rate_per_s * t_rd,
        readout_duration_s: t_rd,
        ..config.detector.clone()
    };
    (exposure, detector)
}

/// Sweep the readout duration with the probe off.
pub fn run_readout_noise_campaign(
    config: &CampaignConfig,
    noise: &ReadoutNoiseSettings,
    threshold: u64,
) -> Result<(CampaignResult, Vec<DetectionTally>)> {
    config.validate()?;
    if !(noise.wait_s >= 0.0 && noise.bg_rate_per_s >= 0.0) {
        return Err(Error::InvalidParams(
            "readout-noise wait and background rate must be nonnegative".into(),
        ));
    }
    if config.sweep.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidParams("readout durations must be positive".into()));
    }
    let kind = CampaignKind::ReadoutNoise;
    let settings = config
        .sweep
        .iter()
        .enumerate()
        .map(|(i, &t_rd)| {
            let (exposure, detector) = readout_noise_setting(config, noise, t_rd);
            run_setting(kind, config, i as u64, t_rd, &exposure, &detector)
        })
        .collect::<Result<Vec<_>>>()?;
    let result = CampaignResult { kind, settings };
    let tally = tallies(&result, threshold);
    Ok((result, tally))
}

/// Sweep the probe-off exposure duration.
pub fn run_dark_current_campaign(
    config: &CampaignConfig,
    threshold: u64,
) -> Result<(CampaignResult, Vec<DetectionTally>)> {
    config.validate()?;
    let kind = CampaignKind::DarkCurrent;
    let settings = config
        .sweep
        .iter()
        .enumerate()
        .map(|(i, &t_exp)| {
            let exposure = ExposureParams {
                nbar_photons: 0.0,
                exposure_duration_s: t_exp,
                ..config.exposure.clone()
            };
            run_setting(kind, config, i as u64, t_exp, &exposure, &config.detector)
        })
        .collect::<Result<Vec<_>>>()?;
    let result = CampaignResult { kind, settings };
    let tally = tallies(&result, threshold);
    Ok((result, tally))
}

/// Runs with the atom deliberately prepared in each state (no exposure):
/// setting 0 is F = 1, setting 1 is F = 2.
pub fn run_characterization(config: &CampaignConfig) -> Result<CampaignResult> {
    config.validate()?;
    let kind = CampaignKind::Characterize;
    let settings = [0.0, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &prep_error)| {
            let exposure = ExposureParams {
                eta_qj: 0.0,
                nbar_photons: 0.0,
                dark_jump_rate_per_s: 0.0,
                exposure_duration_s: 0.0,
                prep_error,
                ..config.exposure.clone()
            };
            run_setting(kind, config, i as u64, (i + 1) as f64, &exposure, &config.detector)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult { kind, settings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(sweep: Vec<f64>, n_runs: u64) -> CampaignConfig {
        CampaignConfig {
            n_runs,
            sweep,
            master_seed: 2024,
            detector: DetectorParams::default(),
            exposure: ExposureParams::default(),
            execution: Execution::Auto,
        }
    }

    #[test]
    fn jump_probability_values() {
        let off = ExposureParams {
            nbar_photons: 0.0,
            dark_jump_rate_per_s: 0.0,
            ..Default::default()
        };
        assert_eq!(jump_probability(&off), 0.0);
        let inset = ExposureParams {
            eta_qj: 2.9e-3,
            nbar_photons: 570.0,
            dark_jump_rate_per_s: 0.0,
            ..Default::default()
        };
        assert!((jump_probability(&inset) - (1.0 - (-1.653f64).exp())).abs() < 1e-12);
        assert!((jump_probability(&inset) - 0.808).abs() < 1e-3);
    }

    #[test]
    fn jump_probability_monotone_concave() {
        let at = |nbar: f64| {
            jump_probability(&ExposureParams {
                nbar_photons: nbar,
                dark_jump_rate_per_s: 0.0,
                ..Default::default()
            })
        };
        let grid: Vec<f64> = (0..200).map(|i| at(i as f64 * 50.0)).collect();
        for w in grid.windows(3) {
            assert!(w[1] >= w[0]);
            assert!(w[2] - w[1] <= w[1] - w[0] + 1e-15);
        }
        assert!(at(1e5) > 1.0 - 1e-12);
    }

    #[test]
    fn branching_consistency() {
        let b = BranchingParams::new(0.5, 5.8e-3).unwrap();
        assert!(b.consistent_with(2.9e-3));
        assert_eq!(b.single_pass_bound(), 0.25);
        assert!(BranchingParams::new(1.5, 0.1).is_err());
    }

    #[test]
    fn large_eta_flagged_not_rejected() {
        let e = ExposureParams {
            eta_qj: 0.3,
            ..Default::default()
        };
        assert_eq!(e.validate().unwrap().len(), 1);
        let bad = ExposureParams {
            eta_qj: 1.3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn no_drive_no_background_gives_zero_counts() {
        let detector = DetectorParams::default().with_bg_mean(0.0);
        let readout = ReadoutModel::new(&detector).unwrap();
        let exposure = ExposureParams {
            eta_qj: 0.0,
            dark_jump_rate_per_s: 0.0,
            atom_loss_rate_per_s: 0.0,
            ..Default::default()
        };
        for run in 0..500 {
            let key = run_key(CampaignKind::QuantumEfficiency, 9, 0, run);
            let out = run_single_sequence(&exposure, &readout, key);
            assert!(!out.jumped);
            assert_eq!(out.n_c, 0);
            assert!(out.atom_present);
        }
    }

    #[test]
    fn jumped_fraction_binomial() {
        let mut c = config(vec![0.0], 10_000);
        c.exposure.eta_qj = 0.0;
        c.exposure.atom_loss_rate_per_s = 0.0;
        c.exposure.dark_jump_rate_per_s = std::f64::consts::LN_2 / c.exposure.exposure_duration_s;
        let r = run_qe_campaign(&c).unwrap();
        let frac = r.settings[0].jumped_fraction();
        assert!((frac - 0.5).abs() < 3.0 * (0.25f64 / 1e4).sqrt(), "{frac}");
    }

    #[test]
    fn schedule_independent() {
        let mut c = config(vec![10.0, 300.0, 3000.0], 400);
        let serial = {
            c.execution = Execution::Serial;
            run_qe_campaign(&c).unwrap()
        };
        c.execution = Execution::Parallel(3);
        let parallel = run_qe_campaign(&c).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn survival_under_loss() {
        let mut c = config(vec![3.0], 20_000);
        c.exposure.atom_loss_rate_per_s = 1.0 / 3.0;
        c.detector.readout_duration_s = 1e-9;
        let (r, _) = run_dark_current_campaign(&c, 4).unwrap();
        let frac = r.settings[0].retained_runs() as f64 / 20_000.0;
        let want = (-1.0f64).exp();
        let se = (want * (1.0 - want) / 20_000.0).sqrt();
        assert!((frac - want).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn no_readout_noise_without_background_or_dark_jumps() {
        let mut c = config(vec![0.5e-3, 1e-3, 2e-3], 2000);
        c.exposure.dark_jump_rate_per_s = 0.0;
        let noise = ReadoutNoiseSettings {
            bg_rate_per_s: 0.0,
            ..Default::default()
        };
        let (_, tally) = run_readout_noise_campaign(&c, &noise, 4).unwrap();
        assert!(tally.iter().all(|t| t.detections == 0));
    }

    #[test]
    fn discarded_counts_do_not_leak() {
        let mut c = config(vec![570.0], 3000);
        c.exposure.atom_loss_rate_per_s = 20.0;
        let r = run_qe_campaign(&c).unwrap();
        let s = &r.settings[0];
        let mut tampered = s.clone();
        for run in tampered.runs.iter_mut().filter(|r| !r.atom_present) {
            run.n_c = 10_000;
        }
        assert!(s.retained_runs() < 3000);
        assert_eq!(s.histogram(), tampered.histogram());
        assert_eq!(s.detections(4), tampered.detections(4));
    }

    #[test]
    fn characterization_states() {
        let c = config(vec![0.0], 2000);
        let r = run_characterization(&c).unwrap();
        assert!(r.settings[0].runs.iter().all(|r| !r.jumped));
        assert!(r.settings[1].runs.iter().all(|r| r.jumped));
    }

    #[test]
    fn rejects_empty_sweep_and_zero_runs() {
        assert!(run_qe_campaign(&config(vec![], 10)).is_err());
        assert!(run_qe_campaign(&config(vec![1.0], 0)).is_err());
    }
}
