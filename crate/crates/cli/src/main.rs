//! `vmb`: predict, synthesize and analyse vacuum magnetic birefringence runs.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "vmb", version, about = "Vacuum magnetic birefringence polarimeter toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected birefringence, ellipticity and time to unit SNR.
    Predict {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Synthetic detector record.
    Synth {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides synthesis.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectral lines, Ψ and sensitivity from a record.
    Demod {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Rayleigh noise floor and the limits it implies.
    Floor {
        #[arg(short, long)]
        config: PathBuf,
        /// Time series or ellipticity spectrum CSV.
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Coupling or charge bound versus particle mass.
    Exclude {
        #[arg(short, long)]
        config: PathBuf,
        /// Bound on |Δn| (or |Δκ| for dichroism).
        #[arg(long, conflicts_with = "limit_from", required_unless_present = "limit_from")]
        limit: Option<f64>,
        /// Take the Δn bound from a floor report.
        #[arg(long)]
        limit_from: Option<PathBuf>,
    },
    /// Per-source noise versus modulation depth.
    Budget {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Figures of merit for a set of experiments.
    Compare {
        /// TOML with [[experiment]] entries; the built-in table otherwise.
        #[arg(short, long)]
        params: Option<PathBuf>,
        /// Print the built-in table as a params file and exit.
        #[arg(long)]
        emit_params: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Core(vmb_core::Error),
    /// Malformed TOML, unknown key or wrong type.
    Schema(String),
    Io { path: PathBuf, message: String },
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Schema(_) => "schema",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    fn code(&self) -> u8 {
        match self.kind() {
            "usage" => 2,
            "schema" => 3,
            "validation" => 4,
            "domain" => 5,
            "resolution" => 6,
            "io" => 7,
            "parse" => 8,
            "modulation_absent" => 9,
            "degenerate" => 10,
            "singular" => 11,
            "two_resonance" => 12,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Schema(m) => write!(f, "config schema: {m}"),
            CliError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<vmb_core::Error> for CliError {
    fn from(e: vmb_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    code: u8,
    message: String,
}

/// One JSON line on stderr, always the last thing written there.
fn report(e: &CliError) -> ExitCode {
    let rec = ErrorRecord { kind: e.kind(), code: e.code(), message: e.to_string() };
    eprintln!("{}", serde_json::json!({ "error": rec }));
    ExitCode::from(e.code())
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    use commands::*;
    match cli.command {
        Command::Predict { config } => predict(&load_config(&config)?).map(|r| r.1),
        Command::Synth { config, seed } => synth(&load_config(&config)?, seed),
        Command::Demod { config, input } => demod(&load_config(&config)?, &input).map(|r| r.1),
        Command::Floor { config, input } => floor(&load_config(&config)?, &input).map(|r| r.1),
        Command::Exclude { config, limit, limit_from } => {
            let l = load_config(&config)?;
            let limit = match (limit, limit_from) {
                (Some(x), _) => x,
                (None, Some(p)) => limit_from_floor(&p)?,
                (None, None) => return Err(CliError::Usage("give --limit or --limit-from".into())),
            };
            exclude(&l, limit).map(|r| r.1)
        }
        Command::Budget { config } => budget(&load_config(&config)?),
        Command::Compare { params, emit_params } => {
            if emit_params {
                let text = experiments_toml(vmb_core::analysis::published_experiments());
                return Ok(Outcome { files: Vec::new(), summary: text.trim_end().to_string() });
            }
            let dir = match std::env::var_os(config::OUTPUT_DIR_ENV) {
                Some(d) if !d.is_empty() => PathBuf::from(d),
                _ => PathBuf::from("."),
            };
            compare(params.as_deref(), &dir).map(|r| r.1)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return report(&CliError::Usage(e.kind().to_string()));
        }
    };
    match run(cli) {
        Ok(o) => {
            if !o.summary.is_empty() {
                println!("{}", o.summary);
            }
            for f in o.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}
