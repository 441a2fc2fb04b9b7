//! End-to-end orchestration: extract, validate, enumerate, report.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, PipelineConfig, PoolSet};
use crate::corpus::Document;
use crate::enumerate::{
    assemble_report, attach_scenarios, enumerate_paths, number_ucas, KindCounts, Report,
    ReportError, RunMetadata, Timestamps,
};
use crate::extract::{run_extraction_round, union_candidates, CandidateSet, ExtractError};
use crate::gateway::{
    GatewayError, HttpBackend, LanguageModel, MockBackend, Recorder, ReplayBackend, Session,
    BASE_URL_ENV,
};
use crate::kind::ComponentKind;
use crate::sampling::derive_seed;
use crate::validate::{assemble_control_structure, validate_candidates, ControlStructure, KindValidation, ValidateError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("extraction of {kind}s failed: {source}")]
    Extract {
        kind: ComponentKind,
        #[source]
        source: ExtractError,
    },
    #[error("validation of {kind}s failed: {source}")]
    Validate {
        kind: ComponentKind,
        #[source]
        source: ValidateError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// Builds the configured backend. With `record` set, replies are appended
/// to the configured cassette.
pub fn build_model(config: &PipelineConfig, record: bool) -> Result<Box<dyn LanguageModel>, PipelineError> {
    config.validate()?;
    let base: Box<dyn LanguageModel> = match config.backend {
        BackendKind::Http => {
            let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| config.base_url.clone());
            Box::new(HttpBackend::from_env(&base_url, config.concurrency_limit)?)
        }
        BackendKind::Mock => {
            let script = config.mock_script.as_ref().expect("validated");
            Box::new(MockBackend::from_file(script)?)
        }
        BackendKind::Replay => {
            if record {
                return Err(ConfigError::Invalid("cannot record while replaying".into()).into());
            }
            let cassette = config.cassette_path.as_ref().expect("validated");
            Box::new(ReplayBackend::open(cassette)?)
        }
    };
    if record {
        let cassette = config
            .cassette_path
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("recording needs a cassette path (--cassette)".into()))?;
        return Ok(Box::new(Recorder::new(base, cassette)?));
    }
    Ok(base)
}

/// Candidate sets and validation outcomes for all three kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentAnalysis {
    pub doc_id: String,
    pub candidates: Vec<CandidateSet>,
    pub validations: Vec<KindValidation>,
    pub control_structure: ControlStructure,
}

impl ComponentAnalysis {
    pub fn counts(&self) -> Vec<KindCounts> {
        self.candidates
            .iter()
            .zip(&self.validations)
            .map(|(c, v)| KindCounts {
                kind: c.kind,
                candidates: c.len(),
                accepted: if v.votes.is_empty() {
                    c.len()
                } else {
                    v.votes.iter().filter(|r| r.accepted).count()
                },
                validated: v.entities.len(),
            })
            .collect()
    }
}

/// Seed used for one document's template selection.
pub fn document_seed(config: &PipelineConfig, doc: &Document) -> u64 {
    derive_seed(config.selection_seed, &doc.id)
}

/// Recall stage for every kind.
pub fn extract_all(
    doc: &Document,
    config: &PipelineConfig,
    pools: &PoolSet,
    session: Session<'_>,
) -> Result<Vec<CandidateSet>, PipelineError> {
    let seed = document_seed(config, doc);
    ComponentKind::ALL
        .into_iter()
        .map(|kind| {
            let answers = run_extraction_round(doc, pools.extraction(kind), config.m_e, seed, session)
                .map_err(|source| PipelineError::Extract { kind, source })?;
            Ok(union_candidates(&doc.id, &answers, kind))
        })
        .collect()
}

/// Precision stage for every kind, given the candidate sets.
pub fn validate_all(
    doc: &Document,
    candidates: &[CandidateSet],
    config: &PipelineConfig,
    pools: &PoolSet,
    session: Session<'_>,
) -> Result<Vec<KindValidation>, PipelineError> {
    let seed = document_seed(config, doc);
    candidates
        .iter()
        .map(|set| {
            validate_candidates(set, doc, pools.validator(set.kind), config.m_v, seed, session)
                .map_err(|source| PipelineError::Validate { kind: set.kind, source })
        })
        .collect()
}

pub fn analyze_components(
    doc: &Document,
    config: &PipelineConfig,
    pools: &PoolSet,
    session: Session<'_>,
) -> Result<ComponentAnalysis, PipelineError> {
    let candidates = extract_all(doc, config, pools, session)?;
    let validations = validate_all(doc, &candidates, config, pools, session)?;
    let control_structure =
        assemble_control_structure(validations.iter().flat_map(|v| v.entities.iter().cloned()));
    Ok(ComponentAnalysis {
        doc_id: doc.id.clone(),
        candidates,
        validations,
        control_structure,
    })
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs the whole pipeline on one document and returns the report.
/// Replayed runs carry no timestamps so their reports are reproducible.
pub fn analyze(
    doc: &Document,
    config: &PipelineConfig,
    pools: &PoolSet,
    session: Session<'_>,
) -> Result<Report, PipelineError> {
    let started = now_ms();
    let analysis = analyze_components(doc, config, pools, session)?;
    let mut ucas = number_ucas(enumerate_paths(&analysis.control_structure));
    if config.scenario_generation {
        attach_scenarios(&mut ucas, doc, session);
    }
    let timestamps = (session.model.backend_id() != "replay").then(|| Timestamps {
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    });
    let metadata = RunMetadata {
        stage_label: config.stage_label(),
        config: config.clone(),
        counts: analysis.counts(),
        uca_count: ucas.len(),
        scenarios_failed: 0,
        timestamps,
    };
    Ok(assemble_report(doc, analysis.control_structure, ucas, metadata)?)
}
