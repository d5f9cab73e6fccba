use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use qjpd_core::config::ExperimentConfig;
use qjpd_core::distributions::Variant;
use qjpd_core::io::{write_csv, write_report, write_runs, Provenance};
use qjpd_core::pipeline;
use qjpd_core::sequence::Execution;
use qjpd_core::validation::{check_exp_integral, validate_appendix};
use qjpd_core::Error;

#[derive(Parser)]
#[command(name = "qjpd", version, about = "Quantum-jump photodetector simulation and analysis")]
struct Cli {
    /// TOML configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Runs per setting for the selected campaign, overriding the config.
    #[arg(long, global = true)]
    runs: Option<u64>,
    /// Bright-state count model.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Detected-photon law for `validate-appendix`.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Worker threads: 1 runs serially, 0 or absent uses all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Prepared-state histograms, fitted count models and the decision rule.
    Characterize,
    /// Photon-number sweep and saturation fit for the jump efficiency.
    QeSweep,
    /// Readout-duration sweep and readout error rate.
    ReadoutNoise,
    /// Exposure-duration sweep and dark jump rate.
    DarkCurrent,
    /// Closed-form count law against the brute-force oracle.
    ValidateAppendix,
    /// Monte Carlo check of the estimator's mean-squared error.
    ValidateEstimators,
    /// Print the default configuration.
    DefaultConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Characterize => "characterize",
            Command::QeSweep => "qe-sweep",
            Command::ReadoutNoise => "readout-noise",
            Command::DarkCurrent => "dark-current",
            Command::ValidateAppendix => "validate-appendix",
            Command::ValidateEstimators => "validate-estimators",
            Command::DefaultConfig => "default-config",
        }
    }
}

enum Failure {
    Error(Error),
    /// A validation suite ran but did not pass.
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 3,
            Failure::Error(e) => match e {
                Error::Config(_) | Error::SchemaVersion { .. } | Error::UnknownStrategy { .. } => 2,
                Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 4,
                _ => 1,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Validation(_) => "validation-failure",
            Failure::Error(e) => match e {
                Error::Config(_) | Error::SchemaVersion { .. } | Error::UnknownStrategy { .. } => "config",
                Error::Io { .. } | Error::Csv(_) | Error::Json(_) => "io",
                _ => "runtime",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Validation(m) => m.clone(),
            Failure::Error(e) => e.to_string(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::with_seed(0),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(model) = &cli.model {
        config.detector.f2_model = model.clone();
    }
    if let Some(variant) = &cli.variant {
        config.validation.variant = Variant::parse(variant).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(runs) = cli.runs {
        let c = &mut config.campaigns;
        match cli.command {
            Command::Characterize => c.characterize.n_runs = runs,
            Command::QeSweep => c.qe.n_runs = runs,
            Command::ReadoutNoise => c.readout_noise.n_runs = runs,
            Command::DarkCurrent => c.dark_current.n_runs = runs,
            Command::ValidateEstimators => config.validation.estimators.n_runs = runs,
            Command::ValidateAppendix | Command::DefaultConfig => {}
        }
    }
    config.validate().map_err(|e| match e {
        Error::InvalidParams(m) => Error::Config(m),
        other => other,
    })?;
    Ok(config)
}

fn execution(threads: Option<usize>) -> Execution {
    match threads {
        None | Some(0) => Execution::Auto,
        Some(1) => Execution::Serial,
        Some(n) => Execution::Parallel(n),
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    provenance: Provenance,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

/// Exponential-integral check grid: orders 0..=50, arguments log-spaced
/// over [0.1, 50].
fn exp_integral_grid() -> (Vec<u64>, Vec<f64>) {
    (
        (0..=50).collect(),
        qjpd_core::config::log_spaced(0.1, 50.0, 25),
    )
}

const EXP_INTEGRAL_TOL: f64 = 1e-10;

fn run(cli: &Cli) -> Result<serde_json::Value, Failure> {
    if cli.command == Command::DefaultConfig {
        print!("{}", ExperimentConfig::with_seed(cli.seed.unwrap_or(0)).to_toml_string());
        return Ok(json!(null));
    }
    let config = load_config(cli)?;
    let exec = execution(cli.threads);
    let dir = config.output.dir.clone();
    let mut out = Outputs {
        dir: &dir,
        provenance: Provenance::of(&config),
        written: Vec::new(),
    };
    let name = cli.command.name();
    let summary = match cli.command {
        Command::Characterize => {
            let r = pipeline::characterize(&config, exec)?;
            write_runs(&out.path("characterize_runs.csv"), &out.provenance, &r.campaign)?;
            write_csv(&out.path("characterize_histograms.csv"), &out.provenance, &r.rows)?;
            write_report(&out.path("characterize_report.json"), &out.provenance, name, &r.report)?;
            json!({
                "threshold": r.report.rule_model.threshold,
                "fidelity": r.report.rule_model.fidelity,
                "empirical_fidelity": r.report.rule_empirical.fidelity,
                "poisson_mu": r.report.fits_f1.poisson.estimate,
            })
        }
        Command::QeSweep => {
            let r = pipeline::qe_sweep(&config, exec)?;
            write_runs(&out.path("qe_runs.csv"), &out.provenance, &r.campaign)?;
            write_csv(&out.path("qe_sweep.csv"), &out.provenance, &r.rows)?;
            write_report(&out.path("qe_report.json"), &out.provenance, name, &r.report)?;
            json!({
                "eta_qj": r.report.eta_qj.estimate,
                "eta_qj_se": r.report.eta_qj.std_error,
                "within_3se": r.report.within_3se,
            })
        }
        Command::ReadoutNoise => {
            let r = pipeline::readout_noise(&config, exec)?;
            write_runs(&out.path("readout_noise_runs.csv"), &out.provenance, &r.campaign)?;
            write_csv(&out.path("readout_noise.csv"), &out.provenance, &r.tallies)?;
            write_report(&out.path("readout_noise_report.json"), &out.provenance, name, &r.report)?;
            json!({
                "rate_per_s": r.report.fit.slope.estimate,
                "rate_se": r.report.fit.slope.std_error,
                "dark_counts_per_read": r.report.dark_counts_per_read,
            })
        }
        Command::DarkCurrent => {
            let r = pipeline::dark_current(&config, exec)?;
            write_runs(&out.path("dark_current_runs.csv"), &out.provenance, &r.campaign)?;
            write_csv(&out.path("dark_current.csv"), &out.provenance, &r.tallies)?;
            write_report(&out.path("dark_current_report.json"), &out.provenance, name, &r.report)?;
            json!({
                "dark_rate_per_s": r.report.dark_rate.estimate,
                "dark_rate_se": r.report.dark_rate.std_error,
                "consistent_with_zero": r.report.consistent_with_zero,
            })
        }
        Command::ValidateAppendix => {
            let variant = config.validation.variant;
            let report = validate_appendix(variant)?;
            let (orders, args) = exp_integral_grid();
            let ei = check_exp_integral(&orders, &args)?;
            let stem = format!("appendix_{}", variant.name());
            write_csv(&out.path(&format!("{stem}.csv")), &out.provenance, &report.rows)?;
            let ei_passed =
                ei.max_recurrence_rel < EXP_INTEGRAL_TOL && ei.max_quadrature_rel < EXP_INTEGRAL_TOL;
            let summary = json!({
                "variant": variant.name(),
                "tolerance": report.tolerance,
                "grid_points": report.rows.len(),
                "max_abs_diff": report.max_abs_diff,
                "fallbacks": report.fallbacks,
                "max_d0_mass": report.max_d0_mass,
                "d0_anomalies": report.d0_anomalies,
                "passed": report.passed,
                "exp_integral": {
                    "points": ei.points,
                    "max_recurrence_rel": ei.max_recurrence_rel,
                    "max_quadrature_rel": ei.max_quadrature_rel,
                    "tolerance": EXP_INTEGRAL_TOL,
                    "passed": ei_passed,
                },
            });
            write_report(&out.path(&format!("{stem}_report.json")), &out.provenance, name, &summary)?;
            if !report.passed {
                return Err(Failure::Validation(format!(
                    "appendix grid: max |closed form - brute force| = {:e} exceeds {:e}",
                    report.max_abs_diff, report.tolerance
                )));
            }
            if !ei_passed {
                return Err(Failure::Validation(format!(
                    "exponential integral: recurrence {:e}, quadrature {:e} exceed {EXP_INTEGRAL_TOL:e}",
                    ei.max_recurrence_rel, ei.max_quadrature_rel
                )));
            }
            summary
        }
        Command::ValidateEstimators => {
            let report = pipeline::validate_estimators(&config, exec)?;
            write_csv(&out.path("estimators.csv"), &out.provenance, &report.rows)?;
            write_report(&out.path("estimators_report.json"), &out.provenance, name, &report)?;
            if !report.passed {
                let worst = report
                    .rows
                    .iter()
                    .filter(|r| !r.passed)
                    .map(|r| format!("p_detect={} ({:?}): rel diff {:.3}", r.p_detect, r.method, r.rel_diff))
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(Failure::Validation(format!("estimator calibration failed: {worst}")));
            }
            json!({ "rows": report.rows.len(), "passed": report.passed })
        }
        Command::DefaultConfig => unreachable!("handled above"),
    };
    Ok(json!({
        "command": name,
        "config_sha256": out.provenance.config_sha256,
        "master_seed": out.provenance.master_seed,
        "out_dir": dir,
        "files": out.written,
        "summary": summary,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let record = json!({
                "error": failure.kind(),
                "message": failure.message(),
                "exit_code": failure.exit_code(),
            });
            eprintln!("{record}");
            ExitCode::from(failure.exit_code())
        }
    }
}
