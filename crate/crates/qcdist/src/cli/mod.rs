//! Command-line driver: argument parsing, configuration loading, artifact
//! writing, and process exit codes.
//!
//! Exit codes: 0 success, 1 runtime or verification failure, 2 bad
//! configuration or arguments, 3 infeasible construction, 4 quadrature
//! precision failure.

mod config;
mod runners;

pub use config::{
    AnalysisConfig, ConstructionConfig, MapSpec, MeansConfig, Overrides, RunConfig, TGrid,
};
pub use runners::{cmd_analyze, cmd_construct, cmd_formulas, cmd_means, cmd_verify, ArtifactSet};

use crate::cantor::CantorError;
use crate::carleson::CarlesonError;
use crate::dimension::DimensionError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Cantor(#[from] CantorError),
    #[error(transparent)]
    Dimension(#[from] DimensionError),
    #[error(transparent)]
    Carleson(#[from] CarlesonError),
    #[error("{0}")]
    Internal(String),
    #[error("verification failed; see verify_summary.json")]
    VerificationFailed,
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Cantor(e) => cantor_exit_code(e),
            CliError::Dimension(e) => dimension_exit_code(e),
            CliError::Carleson(e) => carleson_exit_code(e),
            CliError::Io { .. } | CliError::Internal(_) | CliError::VerificationFailed => 1,
        }
    }
}

fn cantor_exit_code(e: &CantorError) -> u8 {
    match e {
        // Parameters that can never work: a configuration problem.
        CantorError::InvalidDilatation { .. }
        | CantorError::InvalidBranching { .. }
        | CantorError::InvalidTarget { .. }
        | CantorError::Gauge(_) => 2,
        // Admissible parameters with no solution: infeasibility.
        CantorError::NoFeasiblePacking { .. }
        | CantorError::SigmaLimitUnreachable { .. }
        | CantorError::LevelUnsolvable { .. }
        | CantorError::RaiseBudgetExhausted { .. }
        | CantorError::NodeCapExceeded { .. } => 3,
        CantorError::LevelOutOfRange { .. } | CantorError::Map(_) => 1,
    }
}

fn dimension_exit_code(e: &DimensionError) -> u8 {
    match e {
        DimensionError::InvalidExponent { .. }
        | DimensionError::InvalidDilatation { .. }
        | DimensionError::InvalidRatio { .. }
        | DimensionError::InvalidBranching { .. }
        | DimensionError::TooFewScales { .. }
        | DimensionError::BadScale { .. } => 2,
        DimensionError::Cantor(inner) => cantor_exit_code(inner),
        _ => 1,
    }
}

fn carleson_exit_code(e: &CarlesonError) -> u8 {
    match e {
        CarlesonError::NonFiniteIntegrand { .. } | CarlesonError::PrecisionLoss { .. } => 4,
        CarlesonError::BadDepth { .. }
        | CarlesonError::BadWindow { .. }
        | CarlesonError::BadRadius { .. }
        | CarlesonError::BadExponent { .. }
        | CarlesonError::TooFewRadii { .. }
        | CarlesonError::BadParameter { .. }
        | CarlesonError::OutsideAdmissibleRange { .. } => 2,
        CarlesonError::PointOutsideDisk { .. }
        | CarlesonError::SchemaViolation { .. }
        | CarlesonError::Fit(_) => 1,
    }
}

#[derive(Parser)]
#[command(
    name = "qcdist",
    about = "Disk-tree constructions under radial quasiconformal stretches: \
             level tables, dimension and content measurements, boundary \
             integral means, and consistency verification."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the disk tree and write its level tables and geometry.
    Construct(RunArgs),
    /// Measure box dimensions, content decay, and critical exponents.
    Analyze(RunArgs),
    /// Compute circle integral means and the fitted spectrum slope.
    Means(RunArgs),
    /// Evaluate the closed-form distortion table for one dilatation.
    Formulas(FormulasArgs),
    /// Rebuild a construction and gate its defining identities.
    Verify(RunArgs),
}

/// Artifact formats selectable with --format.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn matches(self, name: &str) -> bool {
        let ext = match self {
            Format::Csv => ".csv",
            Format::Json => ".json",
            Format::Svg => ".svg",
        };
        name.ends_with(ext)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory that receives the artifacts (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated per-level branching counts overriding the configuration.
    #[arg(long)]
    levels: Option<String>,
    /// Dilatation K overriding the configuration.
    #[arg(long, visible_alias = "K", value_name = "K")]
    dilatation: Option<f64>,
    /// Seed overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Only write artifacts in these formats (default: all of them).
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
}

#[derive(Args)]
struct FormulasArgs {
    /// Dilatation K >= 1.
    #[arg(long, visible_alias = "K", value_name = "K")]
    dilatation: f64,
    /// Comma-separated exponents in [0, 2] (default 0, 0.1, ..., 2).
    #[arg(long)]
    exponents: Option<String>,
    /// Boundary-compression bound inputs "dim,q,beta" to evaluate as well.
    #[arg(long, value_name = "DIM,Q,BETA")]
    makarov: Option<String>,
    /// When set, write formulas.json there instead of printing a table.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs the selected command, and reports the exit code.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_thread_pool()?;
    match cli.command {
        Command::Construct(args) => {
            let config = load_config(&args)?;
            write_artifacts(&args.out, cmd_construct(&config)?, &args.format)
        }
        Command::Analyze(args) => {
            let config = load_config(&args)?;
            write_artifacts(&args.out, cmd_analyze(&config)?, &args.format)
        }
        Command::Means(args) => {
            let config = load_config(&args)?;
            write_artifacts(&args.out, cmd_means(&config)?, &args.format)
        }
        Command::Formulas(args) => run_formulas(args),
        Command::Verify(args) => {
            let config = load_config(&args)?;
            let (artifacts, pass) = cmd_verify(&config)?;
            write_artifacts(&args.out, artifacts, &args.format)?;
            if pass {
                Ok(())
            } else {
                Err(CliError::VerificationFailed)
            }
        }
    }
}

/// Honors QCDIST_THREADS as a fixed worker-pool size. Unset or empty
/// leaves the library default.
fn init_thread_pool() -> Result<(), CliError> {
    match std::env::var("QCDIST_THREADS") {
        Ok(text) if !text.trim().is_empty() => {
            let n: usize = text.trim().parse().map_err(|_| {
                CliError::Config(format!("QCDIST_THREADS = {text:?} is not a thread count"))
            })?;
            if n == 0 {
                return Err(CliError::Config("QCDIST_THREADS must be positive".to_string()));
            }
            // A global pool can already exist when this runs under a test
            // harness; the existing size then stays in effect.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        _ => Ok(()),
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Io {
        path: args.config.display().to_string(),
        source: e,
    })?;
    let mut config = RunConfig::from_json(&text)?;
    let overrides = Overrides {
        levels: args.levels.as_deref().map(Overrides::parse_levels).transpose()?,
        dilatation: args.dilatation,
        seed: args.seed,
    };
    overrides.apply(&mut config)?;
    Ok(config)
}

fn write_artifacts(out: &Path, artifacts: ArtifactSet, formats: &[Format]) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    for (name, bytes) in &artifacts.files {
        if !formats.is_empty() && !formats.iter().any(|f| f.matches(name)) {
            continue;
        }
        let path = out.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        println!("wrote {}", path.display());
    }
    for note in &artifacts.notes {
        println!("{note}");
    }
    Ok(())
}

fn run_formulas(args: FormulasArgs) -> Result<(), CliError> {
    let exponents = match &args.exponents {
        Some(text) => {
            let parsed: Result<Vec<f64>, _> =
                text.split(',').map(|s| s.trim().parse::<f64>()).collect();
            parsed
                .map_err(|e| CliError::Config(format!("cannot parse --exponents {text:?}: {e}")))?
        }
        None => (0..=20).map(|i| i as f64 * 0.1).collect(),
    };
    if exponents.is_empty() {
        return Err(CliError::Config("--exponents must name at least one exponent".to_string()));
    }
    let makarov = match &args.makarov {
        Some(text) => {
            let parsed: Result<Vec<f64>, _> =
                text.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed.as_deref() {
                Ok([dim, q, beta]) => Some((*dim, *q, *beta)),
                _ => {
                    return Err(CliError::Config(format!(
                        "--makarov wants three numbers \"dim,q,beta\", got {text:?}"
                    )))
                }
            }
        }
        None => None,
    };
    let (artifacts, table) = cmd_formulas(args.dilatation, &exponents, makarov)?;
    match &args.out {
        Some(dir) => write_artifacts(dir, artifacts, &[]),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
