//! Command-line front end: loads data or a population spec, runs the
//! requested analysis and prints a table and/or a JSON report.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid data
//! or population spec, 3 estimation failure or failed verification.

pub mod args;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use lafte::bounds::{lafte_bounds_bounded_response, lafte_bounds_with, tau_bounds, BoundsKind};
use lafte::data::{load_table, LoadOptions, ObservationTable};
use lafte::diagnostics::{double_exclusion_check, mover_test_forced, Verdict};
use lafte::error::{DataError, EstimationError, SpecError};
use lafte::estimands::{complier_shares, estimate_all, ModelSpec};
use lafte::strata::{
    analytic_bounds, analytic_moments, sample, sample_balanced, true_parameters, validate_spec, verify_identities,
    PopulationSpec,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{Cli, CommandKind, Format};
use crate::config::RunConfig;
use crate::report::{Diagnostics, Metadata, ReportBundle, Simulation, Style};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Estimation(_) => EXIT_ESTIMATION,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingColumn(_) | DataError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        CliError::Data(format!("invalid population spec: {e}"))
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        match e {
            EstimationError::ResponseBound(_) => CliError::Data(e.to_string()),
            _ => CliError::Estimation(e.to_string()),
        }
    }
}

/// A finished run: the report plus the exit code it implies.
pub struct Outcome {
    pub bundle: ReportBundle,
    pub code: i32,
}

/// Parses `args` (program name first), runs the command, prints the
/// report and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (command, overrides) = cli.command.split();
    let cfg = match RunConfig::resolve(&overrides).and_then(|c| c.validate(command).map(|()| c)) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match execute(command, &cfg) {
        Ok(outcome) => match emit(command, &cfg, &outcome.bundle) {
            Ok(()) => outcome.code,
            Err(e) => fail(&e),
        },
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn emit(command: CommandKind, cfg: &RunConfig, bundle: &ReportBundle) -> Result<(), CliError> {
    let json = bundle.to_json();
    if command != CommandKind::Simulate {
        if let Some(path) = &cfg.out {
            write_file(path, json.as_bytes())?;
        }
    }
    let style = Style {
        color: std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none(),
    };
    let text = match cfg.format {
        Format::Text => report::render(bundle, style),
        Format::Structured => json,
    };
    let mut stdout = std::io::stdout().lock();
    // a closed pipe is not an error of the analysis
    let _ = stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush());
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn metadata(command: CommandKind, cfg: &RunConfig, input_hash: Option<String>) -> Metadata {
    Metadata {
        tool: "lafte",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        input_hash,
        n: None,
        clusters: None,
    }
}

/// Runs a validated command without printing anything.
pub fn execute(command: CommandKind, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        CommandKind::Estimate | CommandKind::Diagnose | CommandKind::Bounds => analyse(command, cfg),
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Verify => verify(cfg),
    }
}

fn load_data(cfg: &RunConfig) -> Result<(ObservationTable, Vec<String>, String), CliError> {
    let path = cfg.data.as_deref().expect("validated");
    let hash = file_hash(path)?;
    let options = LoadOptions {
        delimiter: cfg.delimiter,
        missing: cfg.missing,
    };
    let loaded = load_table(path, &cfg.columns, options)?;
    Ok((loaded.table, loaded.report.warnings, hash))
}

fn analyse(command: CommandKind, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (table, warnings, hash) = load_data(cfg)?;
    let spec = ModelSpec::default();
    let mut bundle = ReportBundle::new(Metadata {
        n: Some(table.n()),
        clusters: table.clusters().map(|c| c.count()),
        ..metadata(command, cfg, Some(hash))
    });
    bundle.warnings = warnings;
    if command == CommandKind::Estimate {
        bundle.estimates = Some(estimate_all(&table, &spec)?);
        let shares = complier_shares(&table, &spec)?;
        bundle.warnings.extend(shares.warnings.iter().cloned());
        bundle.shares = Some(shares);
        return Ok(Outcome { bundle, code: EXIT_OK });
    }
    let diagnostics = Diagnostics {
        mover_test: mover_test_forced(&table, &spec, cfg.level, cfg.force_step2)?,
        sign_check: double_exclusion_check(&table, &spec, cfg.level)?,
    };
    if command == CommandKind::Bounds {
        let rejected = diagnostics.sign_check.verdict == Verdict::Rejected;
        let mut bounds = vec![
            lafte_bounds_with(&table, &spec, cfg.upper_se)?,
            lafte_bounds_bounded_response(&table, cfg.ymin, cfg.ymax, &spec)?,
            tau_bounds(&table, &spec)?,
        ];
        for b in &mut bounds {
            if rejected && b.kind != BoundsKind::Tau {
                b.warnings
                    .push("reported under a rejected assumption: the sign check rejects double exclusion".into());
            }
            bundle.warnings.extend(b.warnings.iter().map(|w| format!("{}: {w}", b.kind.label())));
        }
        bundle.bounds = Some(bounds);
    }
    bundle.diagnostics = Some(diagnostics);
    Ok(Outcome { bundle, code: EXIT_OK })
}

fn load_spec(cfg: &RunConfig) -> Result<(PopulationSpec, String), CliError> {
    let path = cfg.spec.as_deref().expect("validated");
    let hash = file_hash(path)?;
    let spec = PopulationSpec::load(path)?;
    validate_spec(&spec)?;
    Ok((spec, hash))
}

/// Truth written next to a simulated dataset.
#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    rows: usize,
    balanced: bool,
    spec: &'a PopulationSpec,
    audit: lafte::strata::AssumptionAudit,
    moments: lafte::strata::PopulationMoments,
    true_parameters: Option<lafte::strata::TrueParams>,
    bounds: BoundsSummary,
}

#[derive(Serialize)]
struct BoundsSummary {
    mtr_mts: Option<(f64, f64)>,
    bounded_response: Option<(f64, f64)>,
    ymin: f64,
    ymax: f64,
    tau: Option<(f64, f64)>,
}

fn sidecar_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.truth.json"))
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (spec, hash) = load_spec(cfg)?;
    let audit = validate_spec(&spec)?;
    let table = if cfg.balanced {
        sample_balanced(&spec, cfg.n, cfg.seed)
    } else {
        sample(&spec, cfg.n, cfg.seed)
    };
    let dataset = cfg.out.clone().unwrap_or_else(|| PathBuf::from("simulated.csv"));
    table
        .save(&dataset, cfg.delimiter)
        .map_err(|e| CliError::Usage(format!("cannot write dataset: {e}")))?;
    let b = analytic_bounds(&spec);
    let mut bundle = ReportBundle::new(Metadata {
        n: Some(table.n()),
        ..metadata(CommandKind::Simulate, cfg, Some(hash))
    });
    let truth = match true_parameters(&spec) {
        Ok(t) => Some(t),
        Err(e) => {
            bundle.warnings.push(format!("no true complier parameters: {e}"));
            None
        }
    };
    let sidecar = Sidecar {
        seed: cfg.seed,
        rows: table.n(),
        balanced: cfg.balanced,
        spec: &spec,
        audit,
        moments: analytic_moments(&spec),
        true_parameters: truth,
        bounds: BoundsSummary {
            mtr_mts: b.mtr_mts,
            bounded_response: b.bounded_response,
            ymin: b.ymin,
            ymax: b.ymax,
            tau: b.tau,
        },
    };
    let path = sidecar_path(&dataset);
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    write_file(&path, json.as_bytes())?;
    let (n0, n1) = table.arm_sizes();
    if n0 == 0 || n1 == 0 {
        bundle.warnings.push("one instrument arm is empty; the dataset cannot be estimated".into());
    }
    bundle.simulation = Some(Simulation {
        dataset: dataset.display().to_string(),
        sidecar: path.display().to_string(),
        rows: table.n(),
        balanced: cfg.balanced,
    });
    Ok(Outcome { bundle, code: EXIT_OK })
}

fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (spec, hash) = load_spec(cfg)?;
    let report = verify_identities(&spec, cfg.tolerance)?;
    let code = if report.all_passed() { EXIT_OK } else { EXIT_ESTIMATION };
    let mut bundle = ReportBundle::new(metadata(CommandKind::Verify, cfg, Some(hash)));
    bundle.warnings = report
        .checks
        .iter()
        .filter(|c| matches!(c.status, lafte::strata::CheckStatus::Flagged))
        .map(|c| format!("{}: {}", c.id, c.detail.as_deref().unwrap_or(&c.claim)))
        .collect();
    bundle.verification = Some(report);
    Ok(Outcome { bundle, code })
}
