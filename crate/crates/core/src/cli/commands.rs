use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use thiserror::Error;

use super::{Command, EvalArgs, GlobalArgs, SimulateArgs, EXIT_FATAL, EXIT_USAGE};
use crate::config::{PipelineConfig, PoolSet};
use crate::corpus::{load_document, load_manifest};
use crate::enumerate::{enumerate_paths, number_ucas, render_markdown, Uca};
use crate::evaluate::{sweep, write_csv};
use crate::extract::CandidateSet;
use crate::gateway::{LanguageModel, Session};
use crate::pipeline::{analyze, build_model, extract_all, validate_all};
use crate::theory::{combined_success, discovery_curve, monte_carlo, TheoryParams};
use crate::validate::{assemble_control_structure, ControlStructure, KindValidation};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Fatal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Fatal(_) => EXIT_FATAL,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub(super) fn execute(global: &GlobalArgs, command: Command) -> Result<(), CliError> {
    match command {
        Command::Record { command } => {
            if global.cassette.is_none() {
                return Err(usage("record needs --cassette"));
            }
            run_pipeline_command(global, command.into(), true)
        }
        Command::Enumerate { structure } => cmd_enumerate(global, &structure),
        Command::Simulate(args) => cmd_simulate(global, &args),
        other => run_pipeline_command(global, other, false),
    }
}

/// Shared setup for the commands that talk to a model.
struct Setup {
    config: PipelineConfig,
    pools: PoolSet,
    model: Box<dyn LanguageModel>,
}

impl Setup {
    fn new(global: &GlobalArgs, record: bool) -> Result<Self, CliError> {
        let config = global.effective_config().map_err(usage)?;
        let pools = PoolSet::load(&config).map_err(usage)?;
        let model = build_model(&config, record).context("cannot set up the model backend")?;
        Ok(Setup { config, pools, model })
    }
}

fn run_pipeline_command(global: &GlobalArgs, command: Command, record: bool) -> Result<(), CliError> {
    let ctx = Setup::new(global, record)?;
    let settings = ctx.config.request_settings();
    let session = Session::new(ctx.model.as_ref(), &settings).with_concurrency(ctx.config.concurrency_limit);
    match command {
        Command::Analyze { document } => {
            let doc = load_document(&document)?;
            let report = analyze(&doc, &ctx.config, &ctx.pools, session)?;
            log::info!("{}: {} UCAs", doc.id, report.ucas.len());
            emit(global.out.as_deref(), &report.to_json())?;
            if let Some(out) = &global.out {
                write_file(&out.with_extension("md"), &render_markdown(&report))?;
            }
        }
        Command::Extract { document } => {
            let doc = load_document(&document)?;
            let sets = extract_all(&doc, &ctx.config, &ctx.pools, session)?;
            emit(global.out.as_deref(), &to_json(&sets))?;
        }
        Command::Validate { document, candidates } => {
            let doc = load_document(&document)?;
            let text = fs::read_to_string(&candidates)
                .with_context(|| format!("cannot read {}", candidates.display()))?;
            let sets: Vec<CandidateSet> = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a candidate-set list", candidates.display()))?;
            let validations = validate_all(&doc, &sets, &ctx.config, &ctx.pools, session)?;
            let control_structure =
                assemble_control_structure(validations.iter().flat_map(|v| v.entities.iter().cloned()));
            let dump = ValidationDump {
                doc_id: doc.id.clone(),
                stage_label: ctx.config.stage_label(),
                validations,
                control_structure,
            };
            emit(global.out.as_deref(), &to_json(&dump))?;
        }
        Command::Eval(args) => cmd_eval(global, &args, &ctx, session)?,
        Command::Enumerate { .. } | Command::Simulate(_) | Command::Record { .. } => {
            unreachable!("dispatched in execute")
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationDump {
    doc_id: String,
    stage_label: String,
    validations: Vec<KindValidation>,
    control_structure: ControlStructure,
}

#[derive(Serialize)]
struct EnumerationDump {
    uca_count: usize,
    ucas: Vec<Uca>,
}

fn cmd_enumerate(global: &GlobalArgs, path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    if let Some(inner) = value.get_mut("control_structure") {
        value = inner.take();
    }
    let structure: ControlStructure = serde_json::from_value(value)
        .with_context(|| format!("{} holds no control structure", path.display()))?;
    let ucas = number_ucas(enumerate_paths(&structure));
    emit(
        global.out.as_deref(),
        &to_json(&EnumerationDump {
            uca_count: ucas.len(),
            ucas,
        }),
    )
}

fn cmd_eval(global: &GlobalArgs, args: &EvalArgs, ctx: &Setup, session: Session<'_>) -> Result<(), CliError> {
    if args.m_e_values.is_empty() || args.m_v_values.is_empty() {
        return Err(usage("eval needs at least one m_e and one m_v value"));
    }
    let dataset = load_manifest(&args.manifest)?;
    let rows = sweep(&dataset, &args.m_e_values, &args.m_v_values, &ctx.config, &ctx.pools, session)?;
    for row in &rows {
        for (doc, err) in &row.failures {
            eprintln!("eve: {} failed on {doc}: {err}", row.stage_label);
        }
    }
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).context("cannot format metrics")?;
    emit(global.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
}

fn cmd_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<(), CliError> {
    let m_e = global.m_e.unwrap_or(4);
    let m_v = global.m_v.unwrap_or(4);
    if m_v == 0 {
        return Err(usage("simulate needs at least one validator (--m-v >= 1)"));
    }
    let p_extract = match args.p_e.len() {
        1 => vec![args.p_e[0]; m_e as usize],
        n if n == m_e as usize => args.p_e.clone(),
        n => return Err(usage(format!("{n} values for --p-e but --m-e is {m_e}"))),
    };
    let params = TheoryParams {
        m_e,
        m_v,
        p_extract,
        p_validate: args.p_v,
        tie_rule: args.tie,
    };
    let seed = global.seed.unwrap_or(0);
    let mut report = combined_success(&params).map_err(usage)?;
    report.monte_carlo = Some(monte_carlo(&params, args.trials, seed).map_err(usage)?);
    let json = to_json(&report);
    match &global.out {
        Some(out) => {
            let curve = discovery_curve(params.p_extract[0], args.m_max, args.trials, seed).map_err(usage)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["m", "closed_form", "monte_carlo", "stderr"]).context("csv")?;
            for p in &curve {
                w.write_record([
                    p.m.to_string(),
                    format!("{:.10}", p.closed_form),
                    format!("{:.10}", p.monte_carlo),
                    format!("{:.10}", p.stderr),
                ])
                .context("csv")?;
            }
            let csv = String::from_utf8(w.into_inner().context("csv")?).expect("csv is utf-8");
            write_file(out, &csv)?;
            write_file(&out.with_extension("json"), &json)?;
        }
        None => emit(None, &json)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .context("cannot write to stdout")?;
            Ok(())
        }
    }
}

impl From<crate::corpus::CorpusError> for CliError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        CliError::Fatal(e.into())
    }
}

impl From<crate::pipeline::PipelineError> for CliError {
    fn from(e: crate::pipeline::PipelineError) -> Self {
        CliError::Fatal(e.into())
    }
}

impl From<crate::evaluate::EvalError> for CliError {
    fn from(e: crate::evaluate::EvalError) -> Self {
        CliError::Fatal(e.into())
    }
}
