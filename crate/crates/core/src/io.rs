//! File formats. Every file starts with a `#` provenance line carrying the
//! schema version, config hash and master seed; readers skip it.
//!
//! Run CSV columns, in order:
//! `setting_id, setting_value, unit, run_index, jumped, n_c, atom_present`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::sequence::{CampaignKind, CampaignResult, RunOutcome, SettingOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub config_sha256: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn of(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_sha256: config.hash(),
            master_seed: config.master_seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!(
            "# schema_version={} config_sha256={} master_seed={}",
            self.schema_version, self.config_sha256, self.master_seed
        )
    }
}

/// One run as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub setting_id: u64,
    pub setting_value: f64,
    pub unit: String,
    pub run_index: u64,
    pub jumped: bool,
    pub n_c: u64,
    pub atom_present: bool,
}

pub fn run_records(result: &CampaignResult) -> Vec<RunRecord> {
    let unit = result.kind.unit();
    result
        .settings
        .iter()
        .flat_map(|s| {
            s.runs.iter().map(move |r| RunRecord {
                setting_id: s.setting_id,
                setting_value: s.setting_value,
                unit: unit.to_string(),
                run_index: r.run_index,
                jumped: r.jumped,
                n_c: r.n_c,
                atom_present: r.atom_present,
            })
        })
        .collect()
}

/// Regroup records by setting, in file order. Duplicate
/// `(setting_id, run_index)` pairs are rejected.
pub fn records_to_campaign(kind: CampaignKind, records: &[RunRecord]) -> Result<CampaignResult> {
    let mut settings: Vec<SettingOutcome> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if !seen.insert((r.setting_id, r.run_index)) {
            return Err(Error::InvalidParams(format!(
                "duplicate run {} in setting {}",
                r.run_index, r.setting_id
            )));
        }
        let run = RunOutcome {
            run_index: r.run_index,
            jumped: r.jumped,
            n_c: r.n_c,
            atom_present: r.atom_present,
        };
        match settings.iter_mut().find(|s| s.setting_id == r.setting_id) {
            Some(s) => s.runs.push(run),
            None => settings.push(SettingOutcome {
                setting_id: r.setting_id,
                setting_value: r.setting_value,
                runs: vec![run],
            }),
        }
    }
    Ok(CampaignResult { kind, settings })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write serializable rows as CSV after the provenance line.
pub fn write_csv<T: Serialize>(path: &Path, provenance: &Provenance, rows: &[T]) -> Result<()> {
    let mut file = create(path)?;
    writeln!(file, "{}", provenance.header_line()).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read CSV rows written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_runs(path: &Path, provenance: &Provenance, result: &CampaignResult) -> Result<()> {
    write_csv(path, provenance, &run_records(result))
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    read_csv(path)
}

/// Provenance line of a file written by this module.
pub fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text.lines().next().unwrap_or_default();
    let field = |key: &str| {
        line.split_whitespace()
            .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
            .ok_or_else(|| Error::Config(format!("{}: no `{key}` in provenance line", path.display())))
    };
    Ok(Provenance {
        schema_version: field("schema_version")?
            .parse()
            .map_err(|_| Error::Config("bad schema_version".into()))?,
        config_sha256: field("config_sha256")?.to_string(),
        master_seed: field("master_seed")?
            .parse()
            .map_err(|_| Error::Config("bad master_seed".into()))?,
    })
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: &'a Provenance,
    command: &'a str,
    result: &'a T,
}

/// JSON report wrapping `result` with provenance. JSON cannot hold the
/// comment line, so provenance is a field instead.
pub fn write_report<T: Serialize>(path: &Path, provenance: &Provenance, command: &str, result: &T) -> Result<()> {
    let mut file = create(path)?;
    let report = Report {
        provenance,
        command,
        result,
    };
    serde_json::to_writer_pretty(&mut file, &report)?;
    writeln!(file).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{run_qe_campaign, CampaignConfig, Execution};

    fn sample_campaign() -> CampaignResult {
        run_qe_campaign(&CampaignConfig {
            n_runs: 40,
            sweep: vec![0.1, 123.456789, 1e4 / 3.0],
            master_seed: 77,
            detector: Default::default(),
            exposure: Default::default(),
            execution: Execution::Serial,
        })
        .unwrap()
    }

    #[test]
    fn runs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let prov = Provenance::of(&ExperimentConfig::with_seed(77));
        let result = sample_campaign();
        write_runs(&path, &prov, &result).unwrap();
        let records = read_runs(&path).unwrap();
        assert_eq!(records, run_records(&result));
        let back = records_to_campaign(result.kind, &records).unwrap();
        assert_eq!(back, result);
        assert_eq!(read_provenance(&path).unwrap(), prov);
    }

    #[test]
    fn duplicate_runs_rejected() {
        let mut records = run_records(&sample_campaign());
        records.push(records[0].clone());
        assert!(records_to_campaign(CampaignKind::QuantumEfficiency, &records).is_err());
    }

    #[test]
    fn report_embeds_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/report.json");
        let prov = Provenance::of(&ExperimentConfig::with_seed(5));
        write_report(&path, &prov, "test", &vec![1.5, 2.5]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["provenance"]["master_seed"], 5);
        assert_eq!(v["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    }
}
