//! Experiment configuration: a versioned TOML schema with unit-tagged keys.
//!
//! Every section is optional and defaults to the reference parameter set;
//! only `schema_version` and `master_seed` are required. Unknown keys are
//! rejected, all of them listed in one error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::DetectorParams;
use crate::distributions::Variant;
use crate::error::{Error, Result};
use crate::inference::{GaussianCriterion, MixtureCriterion};
use crate::sequence::ExposureParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Where the decision rule's error rates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSource {
    /// Conditional pmfs of the detector model.
    #[default]
    Model,
    /// Histograms of a characterization campaign.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionConfig {
    /// Fixed threshold; the fidelity-maximizing one when absent.
    pub threshold: Option<u64>,
    pub source: RuleSource,
    /// Bootstrap replicates of the characterization histograms used to
    /// propagate error-rate uncertainty; 0 treats the rates as known.
    /// Requires `source = "empirical"`.
    pub bootstrap_replicates: u64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            source: RuleSource::Model,
            bootstrap_replicates: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Registered jump-probability estimator used per QE setting.
    pub name: String,
    pub mixture_criterion: MixtureCriterion,
    pub gaussian_criterion: GaussianCriterion,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            name: crate::inference::MixtureEstimator::NAME.to_string(),
            mixture_criterion: MixtureCriterion::MaxLikelihood,
            gaussian_criterion: GaussianCriterion::MaxLikelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QeCampaign {
    pub n_runs: u64,
    pub nbar_photons: Vec<f64>,
    /// Relative uncertainty attached to each photon number.
    pub nbar_rel_uncertainty: f64,
}

impl Default for QeCampaign {
    fn default() -> Self {
        Self {
            n_runs: 300,
            nbar_photons: log_spaced(10.0, 1e4, 10),
            nbar_rel_uncertainty: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutNoiseCampaign {
    pub n_runs: u64,
    pub t_rd_s: Vec<f64>,
    pub wait_s: f64,
    /// Background counts per second of readout. When absent it is tuned so
    /// that the expected regression slope equals `readout_error_rate_per_s`.
    pub bg_rate_per_s: Option<f64>,
    pub readout_error_rate_per_s: f64,
}

impl Default for ReadoutNoiseCampaign {
    fn default() -> Self {
        Self {
            n_runs: 500,
            t_rd_s: vec![0.5e-3, 1e-3, 1.5e-3, 2e-3],
            wait_s: 37e-3,
            bg_rate_per_s: None,
            readout_error_rate_per_s: 18.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarkCurrentCampaign {
    pub n_runs: u64,
    pub t_exp_s: Vec<f64>,
}

impl Default for DarkCurrentCampaign {
    fn default() -> Self {
        Self {
            n_runs: 500,
            t_exp_s: vec![0.5, 1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacterizeCampaign {
    /// Runs per prepared state.
    pub n_runs: u64,
}

impl Default for CharacterizeCampaign {
    fn default() -> Self {
        Self { n_runs: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorValidation {
    pub n_campaigns: u64,
    pub n_runs: u64,
    pub p_detect: Vec<f64>,
    /// Allowed relative difference between empirical and predicted MSE.
    pub rel_tolerance: f64,
}

impl Default for EstimatorValidation {
    fn default() -> Self {
        Self {
            n_campaigns: 1000,
            n_runs: 300,
            p_detect: vec![0.2, 0.5, 0.8],
            rel_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub variant: Variant,
    pub estimators: EstimatorValidation,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Corrected,
            estimators: EstimatorValidation::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Campaigns {
    pub qe: QeCampaign,
    pub readout_noise: ReadoutNoiseCampaign,
    pub dark_current: DarkCurrentCampaign,
    pub characterize: CharacterizeCampaign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub exposure: ExposureParams,
    #[serde(default)]
    pub decision: DecisionConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub campaigns: Campaigns,
    #[serde(default)]
    pub validation: ValidationConfig,
    /// Not part of the provenance hash.
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn with_seed(master_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            master_seed,
            detector: DetectorParams::default(),
            exposure: ExposureParams::default(),
            decision: DecisionConfig::default(),
            estimator: EstimatorConfig::default(),
            campaigns: Campaigns::default(),
            validation: ValidationConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let table = value
            .as_table()
            .ok_or_else(|| Error::Config("config must be a table".into()))?;
        match table.get("schema_version") {
            None => return Err(Error::Config("missing key `schema_version`".into())),
            Some(v) => {
                let found = v
                    .as_integer()
                    .ok_or_else(|| Error::Config("`schema_version` must be an integer".into()))?;
                if found != SCHEMA_VERSION as i64 {
                    return Err(Error::SchemaVersion {
                        expected: SCHEMA_VERSION,
                        found: u32::try_from(found).unwrap_or(u32::MAX),
                    });
                }
            }
        }
        let known = schema_tree();
        let mut unknown = Vec::new();
        collect_unknown(table, known.as_table().expect("schema is a table"), "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        if !table.contains_key("master_seed") {
            return Err(Error::Config("missing key `master_seed`".into()));
        }
        let config: Self = toml::from_str(text)
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.exposure.validate()?;
        crate::detector::f2_models().get(&self.detector.f2_model)?;
        crate::inference::estimators().get(&self.estimator.name)?;
        let c = &self.campaigns;
        for (name, n) in [
            ("campaigns.qe.n_runs", c.qe.n_runs),
            ("campaigns.readout_noise.n_runs", c.readout_noise.n_runs),
            ("campaigns.dark_current.n_runs", c.dark_current.n_runs),
            ("campaigns.characterize.n_runs", c.characterize.n_runs),
            ("validation.estimators.n_runs", self.validation.estimators.n_runs),
            ("validation.estimators.n_campaigns", self.validation.estimators.n_campaigns),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        if !(c.qe.nbar_rel_uncertainty >= 0.0) {
            return Err(Error::Config(
                "`campaigns.qe.nbar_rel_uncertainty` must be nonnegative".into(),
            ));
        }
        if self.decision.bootstrap_replicates > 0 && self.decision.source != RuleSource::Empirical {
            return Err(Error::Config(
                "`decision.bootstrap_replicates` needs `decision.source = \"empirical\"`".into(),
            ));
        }
        if let Some(p) = self
            .validation
            .estimators
            .p_detect
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Config(format!(
                "`validation.estimators.p_detect` entry {p} is not a probability"
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output paths excluded.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output: OutputConfig::default(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Every key the schema accepts, as a TOML tree with all optional keys set.
fn schema_tree() -> toml::Value {
    let mut full = ExperimentConfig::with_seed(0);
    full.decision.threshold = Some(0);
    full.campaigns.readout_noise.bg_rate_per_s = Some(0.0);
    toml::Value::try_from(&full).expect("config serializes")
}

fn collect_unknown(table: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in table {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match known.get(key) {
            None => out.push(path),
            Some(toml::Value::Table(sub)) => {
                if let toml::Value::Table(user) = value {
                    collect_unknown(user, sub, &path, out);
                }
            }
            Some(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str("schema_version = 1\nmaster_seed = 7\n").unwrap();
        assert_eq!(c, ExperimentConfig::with_seed(7));
    }

    #[test]
    fn default_round_trips_through_toml() {
        let mut c = ExperimentConfig::with_seed(11);
        c.decision.threshold = Some(4);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ExperimentConfig::from_toml_str("schema_version = 1\n").unwrap_err();
        assert!(err.to_string().contains("master_seed"), "{err}");
    }

    #[test]
    fn all_unknown_keys_listed() {
        let text = "schema_version = 1\nmaster_seed = 1\nbogus = 2\n[detector]\nbg_mean = 1.0\n\
                    [campaigns.qe]\nruns = 3\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err().to_string();
        for key in ["bogus", "detector.bg_mean", "campaigns.qe.runs"] {
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let err = ExperimentConfig::from_toml_str("schema_version = 2\nmaster_seed = 1\n").unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { expected: 1, found: 2 }));
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::with_seed(3);
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_model_rejected() {
        let text = "schema_version = 1\nmaster_seed = 1\n[detector]\nf2_model = \"lorentz\"\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(matches!(err, Error::UnknownStrategy { .. }), "{err}");
    }

    #[test]
    fn log_spacing_endpoints() {
        let v = log_spaced(10.0, 1e4, 10);
        assert_eq!(v.len(), 10);
        assert!((v[0] - 10.0).abs() < 1e-12 && (v[9] - 1e4).abs() < 1e-9);
    }
}
