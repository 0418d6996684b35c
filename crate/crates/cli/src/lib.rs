//! `ambig`: drives the simulate, entropy, diagnose, report, repair and verify
//! loop over files on disk.
//!
//! Every command reads a [`config::RunConfig`] assembled from an optional
//! TOML file and command-line flags, and writes pretty-printed JSON under the
//! output directory with atomic renames. Outputs contain no timestamps or
//! absolute paths, so identical inputs give identical bytes.

pub mod commands;
pub mod config;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{ConfigFile, ProviderKind, RunConfig, TOKEN_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// 1 usage, 2 data, 3 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ambig",
    version,
    about = "Detect, diagnose and repair ambiguity behind inconsistent BPMN model families"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; each overrides the matching config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory of BPMN models (*.bpmn, *.xml).
    #[arg(long, global = true)]
    pub models: Option<PathBuf>,
    /// Case population CSV (first column `case_id`).
    #[arg(long, global = true)]
    pub cases: Option<PathBuf>,
    /// Process narrative, paragraphs separated by blank lines.
    #[arg(long, global = true)]
    pub narrative: Option<PathBuf>,
    /// Supplemental documents cited as repair evidence.
    #[arg(long, global = true)]
    pub supplemental: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Decimal places KPI values are rounded to before grouping (default 6).
    #[arg(long, global = true)]
    pub round_decimals: Option<u32>,
    /// Maximum steps per case before simulation aborts it.
    #[arg(long, global = true)]
    pub step_cap: Option<usize>,
    /// Minimum token coverage for a gateway to be localized in a segment.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Largest diagnosis size the hitting-set search explores.
    #[arg(long, global = true)]
    pub cardinality_cap: Option<usize>,
    /// Run on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Response file for the canned provider.
    #[arg(long, global = true)]
    pub canned: Option<PathBuf>,
    /// URL of the HTTP rewrite provider; the token comes from AMBIG_PROVIDER_TOKEN.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every model over the population; writes kpis/<model>.json.
    Simulate {
        /// Include per-case traces in each KPI file.
        #[arg(long)]
        traces: bool,
    },
    /// Distribution and normalized entropy of a family's KPI vectors.
    Entropy {
        /// KPI directory or CSV (default <out>/kpis).
        #[arg(long)]
        kpis: Option<PathBuf>,
    },
    /// Diagnose a model pair; without models, the two most frequent KPI
    /// outcomes supply one representative each.
    Diagnose {
        /// Model file or id in the models directory.
        model_a: Option<String>,
        model_b: Option<String>,
        #[arg(long)]
        kpis: Option<PathBuf>,
    },
    /// Localize the diagnosis in the narrative.
    Report,
    /// Ask the rewrite provider for repairs and rebuild the narrative.
    Repair,
    /// Compare the entropy of two model families.
    Verify {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
    },
    /// Parse and structurally check models.
    Validate { paths: Vec<PathBuf> },
}

fn resolve(common: &Common, token: Option<String>) -> Result<RunConfig, CliError> {
    let mut file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let over = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    };
    over(&mut file.models, &common.models);
    over(&mut file.cases, &common.cases);
    over(&mut file.narrative, &common.narrative);
    over(&mut file.supplemental, &common.supplemental);
    over(&mut file.out, &common.out);
    over(&mut file.provider.canned, &common.canned);
    file.round_decimals = common.round_decimals.or(file.round_decimals);
    file.step_cap = common.step_cap.or(file.step_cap);
    file.localization_threshold = common.threshold.or(file.localization_threshold);
    file.cardinality_cap = common.cardinality_cap.or(file.cardinality_cap);
    if common.sequential {
        file.sequential = Some(true);
    }
    file.provider.kind = common.provider.or(file.provider.kind);
    if common.endpoint.is_some() {
        file.provider.endpoint.clone_from(&common.endpoint);
    }
    RunConfig::from_parts(file, token)
}

fn dispatch(cli: &Cli, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<String, CliError> {
    let mut warn = |m: String| {
        let _ = writeln!(err, "warning: {m}");
    };
    match &cli.command {
        Command::Simulate { traces } => commands::simulate(cfg, *traces, &mut warn),
        Command::Entropy { kpis } => commands::entropy(cfg, kpis.as_deref(), &mut |l| {
            let _ = writeln!(out, "{l}");
        }),
        Command::Diagnose { model_a, model_b, kpis } => {
            let pair = match (model_a, model_b) {
                (Some(a), Some(b)) => Some((a.as_str(), b.as_str())),
                (None, None) => None,
                _ => return Err(CliError::Usage("diagnose takes two models or none".into())),
            };
            commands::diagnose(cfg, pair, kpis.as_deref(), &mut warn)
        }
        Command::Report => commands::report(cfg),
        Command::Repair => commands::repair(cfg, &mut warn),
        Command::Verify { before, after } => commands::verify(cfg, before, after),
        Command::Validate { paths } => commands::validate(cfg, paths, &mut |l| {
            let _ = writeln!(out, "{l}");
        }),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let result = resolve(&cli.common, std::env::var(TOKEN_ENV).ok()).and_then(|cfg| dispatch(&cli, &cfg, out, err));
    match result {
        Ok(line) => {
            let _ = writeln!(out, "{line}");
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
