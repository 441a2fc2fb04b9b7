//! The `eve` command line.
//!
//! Configuration is layered: built-in defaults, then the `--config` TOML
//! file, then flags. The merged configuration is what gets embedded in
//! reports. Exit status is 0 on success, 1 on a fatal error and 2 on a
//! usage error.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{BackendKind, ConfigError, PipelineConfig};
use crate::theory::TieRule;

pub use commands::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "eve", version, about = "Extract / validate / enumerate pipeline for STPA hazard analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model backend: http, mock or replay.
    #[arg(long, global = true)]
    pub backend: Option<BackendKind>,
    /// Extraction queries per component kind.
    #[arg(long = "m-e", global = true, value_parser = clap::value_parser!(u32).range(1..=4))]
    pub m_e: Option<u32>,
    /// Validation votes per candidate; 0 skips validation.
    #[arg(long = "m-v", global = true, value_parser = clap::value_parser!(u32).range(0..=4))]
    pub m_v: Option<u32>,
    /// Seed for template selection.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cassette file for replay or recording.
    #[arg(long, global = true, value_name = "FILE")]
    pub cassette: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Generate a causal scenario for every UCA.
    #[arg(long, global = true)]
    pub scenarios: bool,
    /// Reply script for the mock backend.
    #[arg(long = "mock-script", global = true, value_name = "FILE")]
    pub mock_script: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long = "base-url", global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Maximum concurrent model requests.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Full pipeline on one document: report JSON plus a Markdown rendering.
    Analyze { document: PathBuf },
    /// Extraction stage only; writes the candidate sets.
    Extract { document: PathBuf },
    /// Validation stage only, on candidate sets written by `extract`.
    Validate {
        document: PathBuf,
        #[arg(long, value_name = "FILE")]
        candidates: PathBuf,
    },
    /// Enumerate UCAs from a control structure (or a report containing one).
    Enumerate { structure: PathBuf },
    /// Score a grid of (m_e, m_v) settings over an annotated dataset; CSV out.
    Eval(EvalArgs),
    /// Closed-form and simulated reliability figures.
    Simulate(SimulateArgs),
    /// Run another command while appending every model reply to --cassette.
    Record {
        #[command(subcommand)]
        command: RecordedCommand,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum RecordedCommand {
    Analyze { document: PathBuf },
    Extract { document: PathBuf },
    Validate {
        document: PathBuf,
        #[arg(long, value_name = "FILE")]
        candidates: PathBuf,
    },
    Eval(EvalArgs),
}

impl From<RecordedCommand> for Command {
    fn from(c: RecordedCommand) -> Self {
        match c {
            RecordedCommand::Analyze { document } => Command::Analyze { document },
            RecordedCommand::Extract { document } => Command::Extract { document },
            RecordedCommand::Validate { document, candidates } => Command::Validate { document, candidates },
            RecordedCommand::Eval(a) => Command::Eval(a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Dataset manifest (JSON).
    pub manifest: PathBuf,
    #[arg(long = "m-e-values", value_delimiter = ',', default_values_t = vec![1usize, 2, 3, 4])]
    pub m_e_values: Vec<usize>,
    #[arg(long = "m-v-values", value_delimiter = ',', default_values_t = vec![0usize, 1, 2, 3, 4])]
    pub m_v_values: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Per-attempt extraction success probability (repeat or comma-separate
    /// for heterogeneous attempts).
    #[arg(long = "p-e", value_delimiter = ',', default_values_t = vec![0.6])]
    pub p_e: Vec<f64>,
    #[arg(long = "p-v", default_value_t = 0.8)]
    pub p_v: f64,
    #[arg(long, default_value = "half_tie")]
    pub tie: TieRule,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Longest point of the discovery curve.
    #[arg(long = "m-max", default_value_t = 8)]
    pub m_max: u32,
}

impl GlobalArgs {
    /// Defaults, then the config file, then flags.
    pub fn effective_config(&self) -> Result<PipelineConfig, ConfigError> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(b) = self.backend {
            c.backend = b;
        }
        if let Some(m) = self.m_e {
            c.m_e = m as usize;
        }
        if let Some(m) = self.m_v {
            c.m_v = m as usize;
        }
        if let Some(s) = self.seed {
            c.selection_seed = s;
        }
        if let Some(p) = &self.cassette {
            c.cassette_path = Some(p.clone());
        }
        if self.scenarios {
            c.scenario_generation = true;
        }
        if let Some(p) = &self.mock_script {
            c.mock_script = Some(p.clone());
        }
        if let Some(m) = &self.model {
            c.model_name = m.clone();
        }
        if let Some(u) = &self.base_url {
            c.base_url = u.clone();
        }
        if let Some(t) = self.temperature {
            c.temperature = t;
        }
        if let Some(n) = self.concurrency {
            c.concurrency_limit = n;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `args` and runs the command, returning the exit status.
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
    match commands::execute(&cli.global, cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("eve: {e}");
            e.exit_code()
        }
    }
}
