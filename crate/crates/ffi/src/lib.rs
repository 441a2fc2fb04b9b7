//! C ABI over `eve-core`.
//!
//! Every fallible function returns an [`EveStatus`]; on failure a message
//! is available from [`eve_last_error_message`] on the same thread.
//! Strings returned through `char **` out-parameters are owned by the
//! caller and must be released with [`eve_string_free`]. Structured results
//! (reports, candidate lists, metrics) cross the boundary as JSON text.
//!
//! The header `include/eve.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eve_core::config::{PipelineConfig, PoolSet};
use eve_core::corpus::{Document, GoldEntity};
use eve_core::enumerate::{enumerate_paths, number_ucas};
use eve_core::evaluate::{match_predictions, Metrics};
use eve_core::extract::ExtractError;
use eve_core::gateway::{parse_boolean_answer, parse_component_answer, LanguageModel, Session};
use eve_core::kind::ComponentKind;
use eve_core::pipeline::{analyze, build_model, PipelineError};
use eve_core::theory::{self, TheoryParams, TieRule};
use eve_core::validate::{ControlStructure, ValidateError, ValidatedEntity};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EveStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 3,
    /// Input text (JSON, TOML, model reply) could not be parsed.
    Parse = 4,
    /// The model backend failed: credentials, transport, cassette miss.
    Gateway = 5,
    /// A pipeline stage failed for another reason.
    Pipeline = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EveTieRule {
    AcceptTie = 0,
    HalfTie = 1,
    RejectTie = 2,
}

impl From<EveTieRule> for TieRule {
    fn from(t: EveTieRule) -> Self {
        match t {
            EveTieRule::AcceptTie => TieRule::AcceptTie,
            EveTieRule::HalfTie => TieRule::HalfTie,
            EveTieRule::RejectTie => TieRule::RejectTie,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EveComponentKind {
    Sensor = 0,
    Controller = 1,
    Actuator = 2,
}

impl From<EveComponentKind> for ComponentKind {
    fn from(k: EveComponentKind) -> Self {
        match k {
            EveComponentKind::Sensor => ComponentKind::Sensor,
            EveComponentKind::Controller => ComponentKind::Controller,
            EveComponentKind::Actuator => ComponentKind::Actuator,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl From<Metrics> for EveMetrics {
    fn from(m: Metrics) -> Self {
        EveMetrics {
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
        }
    }
}

/// Opaque pipeline: configuration, prompt pools and model backend.
pub struct EvePipeline {
    config: PipelineConfig,
    pools: PoolSet,
    model: Box<dyn LanguageModel>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EveStatus, String);

impl Failure {
    fn new(status: EveStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating failures and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EveStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EveStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            EveStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(EveStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(EveStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(EveStatus::NullArgument, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let c = CString::new(text).map_err(|e| Failure::new(EveStatus::Pipeline, e))?;
    write_out(out, c.into_raw(), "out")
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(EveStatus::Parse, format!("{what}: {e}")))
}

fn classify(e: &PipelineError) -> EveStatus {
    match e {
        PipelineError::Config(_) => EveStatus::InvalidArgument,
        PipelineError::Gateway(_)
        | PipelineError::Extract {
            source: ExtractError::Gateway { .. } | ExtractError::Fatal(_),
            ..
        }
        | PipelineError::Validate {
            source: ValidateError::Gateway { .. } | ValidateError::Fatal(_),
            ..
        } => EveStatus::Gateway,
        _ => EveStatus::Pipeline,
    }
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn eve_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eve_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eve_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a pipeline from TOML configuration text (null or empty for the
/// defaults). Relative paths in the configuration resolve against
/// `base_dir`, or the working directory when `base_dir` is null.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eve_pipeline_new(
    config_toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut EvePipeline,
) -> EveStatus {
    guard(|| {
        let text = if config_toml.is_null() { "" } else { read_str(config_toml, "config_toml")? };
        let origin = Path::new("<ffi>");
        let mut config = PipelineConfig::from_toml(text, origin).map_err(|e| Failure::new(EveStatus::Parse, e))?;
        if !base_dir.is_null() {
            let base = Path::new(read_str(base_dir, "base_dir")?);
            let fix = |p: &mut std::path::PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            config.prompt_pool_paths.values_mut().for_each(fix);
            config.validator_pool_paths.values_mut().for_each(fix);
            if let Some(p) = config.cassette_path.as_mut() {
                fix(p);
            }
            if let Some(p) = config.mock_script.as_mut() {
                fix(p);
            }
        }
        config.validate().map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        let pools = PoolSet::load(&config).map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        let model = build_model(&config, false).map_err(|e| Failure::new(classify(&e), e))?;
        write_out(out, Box::into_raw(Box::new(EvePipeline { config, pools, model })), "out")
    })
}

/// Destroys a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must come from [`eve_pipeline_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eve_pipeline_free(pipeline: *mut EvePipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs the full pipeline on a document and returns the report as JSON.
///
/// # Safety
/// `pipeline` must be live; strings NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_pipeline_analyze(
    pipeline: *const EvePipeline,
    doc_id: *const c_char,
    document_text: *const c_char,
    out_json: *mut *mut c_char,
) -> EveStatus {
    guard(|| {
        let p = pipeline
            .as_ref()
            .ok_or_else(|| Failure::new(EveStatus::NullArgument, "pipeline is null"))?;
        let id = read_str(doc_id, "doc_id")?;
        let text = read_str(document_text, "document_text")?;
        if text.trim().is_empty() {
            return Err(Failure::new(EveStatus::InvalidArgument, "document is empty"));
        }
        let doc = Document::from_text(id, "", text);
        let settings = p.config.request_settings();
        let session = Session::new(p.model.as_ref(), &settings).with_concurrency(p.config.concurrency_limit);
        let report = analyze(&doc, &p.config, &p.pools, session).map_err(|e| Failure::new(classify(&e), e))?;
        write_string(out_json, report.to_json())
    })
}

/// `f * (n_a + n_c*n_a + n_s*n_c*n_a)`, saturating at `UINT64_MAX`.
#[no_mangle]
pub extern "C" fn eve_count_ucas(n_s: u64, n_c: u64, n_a: u64, f: u64) -> u64 {
    let ca = n_c.checked_mul(n_a);
    let paths = ca.and_then(|ca| n_a.checked_add(ca)?.checked_add(n_s.checked_mul(ca)?));
    paths.and_then(|p| p.checked_mul(f)).unwrap_or(u64::MAX)
}

/// Enumerates UCAs for a control-structure JSON (or a report containing
/// one) and returns `{"uca_count": n, "ucas": [...]}`.
///
/// # Safety
/// `structure_json` must be NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_enumerate_json(structure_json: *const c_char, out_json: *mut *mut c_char) -> EveStatus {
    guard(|| {
        let mut value: serde_json::Value = parse_json(read_str(structure_json, "structure_json")?, "structure")?;
        if let Some(inner) = value.get_mut("control_structure") {
            value = inner.take();
        }
        let structure: ControlStructure = serde_json::from_value(value)
            .map_err(|e| Failure::new(EveStatus::Parse, format!("structure: {e}")))?;
        let ucas = number_ucas(enumerate_paths(&structure));
        write_string(out_json, to_json(&serde_json::json!({"uca_count": ucas.len(), "ucas": ucas})))
    })
}

/// `1 - prod(1 - p_i)` over `len` probabilities.
///
/// # Safety
/// `p` must point to `len` doubles (or be null with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn eve_discovery_probability(p: *const f64, len: usize, out: *mut f64) -> EveStatus {
    guard(|| {
        let probs: &[f64] = match (p.is_null(), len) {
            (_, 0) => &[],
            (true, _) => return Err(Failure::new(EveStatus::NullArgument, "p is null")),
            (false, n) => std::slice::from_raw_parts(p, n),
        };
        let v = theory::discovery_probability(probs).map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_out(out, v, "out")
    })
}

/// Probability that `m` voters of accuracy `p` reach the right majority.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eve_vote_accept_probability(p: f64, m: u32, tie: EveTieRule, out: *mut f64) -> EveStatus {
    guard(|| {
        let v = theory::vote_accept_probability(p, m, tie.into())
            .map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_out(out, v, "out")
    })
}

/// Exponential bound on the majority-vote error; requires `p > 0.5`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eve_chernoff_error_bound(p: f64, m: u32, out: *mut f64) -> EveStatus {
    guard(|| {
        let v = theory::chernoff_error_bound(p, m).map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_out(out, v, "out")
    })
}

/// Full reliability report as JSON. `params_json` may be null for the
/// defaults (four attempts at 0.6, four voters at 0.8, half-weighted ties).
///
/// # Safety
/// `params_json` null or NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_combined_success_json(params_json: *const c_char, out_json: *mut *mut c_char) -> EveStatus {
    guard(|| {
        let params: TheoryParams = if params_json.is_null() {
            TheoryParams::default()
        } else {
            parse_json(read_str(params_json, "params_json")?, "theory parameters")?
        };
        let report = theory::combined_success(&params).map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_string(out_json, to_json(&report))
    })
}

/// Seeded Monte Carlo estimate of the combined success probability.
///
/// # Safety
/// `params_json` null or NUL-terminated; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn eve_monte_carlo(
    params_json: *const c_char,
    trials: u64,
    seed: u64,
    out_estimate: *mut f64,
    out_stderr: *mut f64,
) -> EveStatus {
    guard(|| {
        let params: TheoryParams = if params_json.is_null() {
            TheoryParams::default()
        } else {
            parse_json(read_str(params_json, "params_json")?, "theory parameters")?
        };
        let mc = theory::monte_carlo(&params, trials, seed).map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_out(out_estimate, mc.estimate, "out_estimate")?;
        write_out(out_stderr, mc.stderr, "out_stderr")
    })
}

/// Parses a raw extraction reply into `{"entries": [...], "truncated": b}`.
///
/// # Safety
/// `raw` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_parse_component_answer(raw: *const c_char, out_json: *mut *mut c_char) -> EveStatus {
    guard(|| {
        let answer =
            parse_component_answer(read_str(raw, "raw")?).map_err(|e| Failure::new(EveStatus::Parse, e))?;
        write_string(out_json, to_json(&answer))
    })
}

/// Reads a yes/no verdict from a raw validator reply.
///
/// # Safety
/// `raw` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_parse_boolean_answer(raw: *const c_char, out: *mut bool) -> EveStatus {
    guard(|| {
        let v = parse_boolean_answer(read_str(raw, "raw")?).map_err(|e| Failure::new(EveStatus::Parse, e))?;
        write_out(out, v, "out")
    })
}

/// Recall, precision and F1 from raw counts.
#[no_mangle]
pub extern "C" fn eve_metrics_from_counts(tp: usize, fp: usize, fn_: usize) -> EveMetrics {
    Metrics::from_counts(tp, fp, fn_).into()
}

/// Scores predicted entities against gold annotations of one kind. Both
/// arguments are JSON arrays: predictions as `{"canonical_name", "aliases",
/// "kind", "function", "support_count"}`, gold as `{"canonical",
/// "aliases"}`.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eve_match_predictions(
    predicted_json: *const c_char,
    gold_json: *const c_char,
    kind: EveComponentKind,
    out: *mut EveMetrics,
) -> EveStatus {
    guard(|| {
        let predicted: Vec<ValidatedEntity> = parse_json(read_str(predicted_json, "predicted_json")?, "predictions")?;
        let gold: Vec<GoldEntity> = parse_json(read_str(gold_json, "gold_json")?, "gold entities")?;
        let m = match_predictions(&predicted, &gold, kind.into())
            .map_err(|e| Failure::new(EveStatus::InvalidArgument, e))?;
        write_out(out, m.into(), "out")
    })
}
