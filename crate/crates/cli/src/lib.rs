//! Command-line driver for the RRN toolkit: configuration, the analysis
//! pipelines behind each subcommand, and artifact bookkeeping.

pub mod battery;
pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rrn::RrnError;
use thiserror::Error;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ARTIFACT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Rrn(#[from] RrnError),
    /// Training went non-finite; partial artifacts were written.
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Diverged(_) => EXIT_NUMERIC,
            CliError::Rrn(e) => match e {
                RrnError::Argument(_) | RrnError::Render(_) => EXIT_CONFIG,
                RrnError::Io { .. }
                | RrnError::Format { .. }
                | RrnError::Consistency(_)
                | RrnError::Shape(_)
                | RrnError::CorruptHeader(_)
                | RrnError::PayloadLength { .. } => EXIT_ARTIFACT,
                RrnError::Numeric { .. }
                | RrnError::UndefinedCentroid
                | RrnError::Stratification(_)
                | RrnError::Completeness(_) => EXIT_NUMERIC,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rrn", version, about = "Train and analyze recognition-reconstruction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from scratch, tracking development at snapshot steps.
    Train(CommandArgs),
    /// Property, identity, similarity and embedding reports for a checkpoint.
    Analyze(CommandArgs),
    /// Modulation sweep and lesions of one encoding unit.
    Perturb(CommandArgs),
    /// Novel-structure learning followed by digit recovery, with a control phase.
    Curriculum(CommandArgs),
    /// Preview rendered stimuli.
    Render(CommandArgs),
}

#[derive(Debug, clap::Args)]
struct CommandArgs {
    /// INI configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key as `--key value` or `--key=value`; flags win over the file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

/// Pair up `--key value` / `--key=value` tokens.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("expected a `--key` flag, found `{tok}`")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let value = it
                .next()
                .ok_or_else(|| CliError::Config(format!("flag `--{key}` needs a value")))?;
            out.push((key.to_string(), value.clone()));
        }
    }
    Ok(out)
}

/// Parse arguments, run one subcommand, return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, args) = match &cli.command {
        Command::Train(a) => ("train", a),
        Command::Analyze(a) => ("analyze", a),
        Command::Perturb(a) => ("perturb", a),
        Command::Curriculum(a) => ("curriculum", a),
        Command::Render(a) => ("render", a),
    };
    let result = parse_overrides(&args.overrides)
        .and_then(|ov| RunConfig::load(args.config.as_deref(), &ov))
        .and_then(|cfg| match name {
            "train" => commands::train(&cfg).map(|o| commands::print_train(&o)),
            "analyze" => commands::analyze(&cfg).map(|o| commands::print_analysis(&o)),
            "perturb" => commands::perturb(&cfg).map(|o| commands::print_perturb(&o)),
            "curriculum" => commands::curriculum(&cfg).map(|o| commands::print_curriculum(&o)),
            _ => commands::render(&cfg),
        });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("rrn {name}: {e}");
            e.exit_code()
        }
    }
}
