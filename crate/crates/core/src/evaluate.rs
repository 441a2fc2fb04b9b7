//! Scoring against ground truth: per-kind recall/precision/F1, macro
//! averages over documents, and (m_e, m_v) sweeps.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{stage_label, PipelineConfig, PoolSet};
use crate::corpus::{Dataset, GoldEntity};
use crate::gateway::Session;
use crate::kind::ComponentKind;
use crate::pipeline::analyze_components;
use crate::text::normalize_name;
use crate::validate::ValidatedEntity;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction {name:?} is a {found}, gold list is {expected}")]
    KindMismatch {
        name: String,
        found: ComponentKind,
        expected: ComponentKind,
    },
    #[error("nothing to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let recall = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        let f1 = if recall + precision > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            recall,
            precision,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Greedy one-to-one matching on normalized aliases. Predictions are
/// visited in canonical order; each gold entity can be consumed once, and a
/// second prediction hitting a consumed gold entity is a false positive.
pub fn match_predictions(
    predicted: &[ValidatedEntity],
    gold: &[GoldEntity],
    gold_kind: ComponentKind,
) -> Result<Metrics, EvalError> {
    if let Some(p) = predicted.iter().find(|p| p.kind != gold_kind) {
        return Err(EvalError::KindMismatch {
            name: p.canonical_name.clone(),
            found: p.kind,
            expected: gold_kind,
        });
    }
    let gold_aliases: Vec<HashSet<String>> = gold.iter().map(GoldEntity::normalized_aliases).collect();
    let mut order: Vec<&ValidatedEntity> = predicted.iter().collect();
    order.sort_by_key(|p| (normalize_name(&p.canonical_name), p.canonical_name.clone(), p.aliases.clone()));

    let mut consumed = vec![false; gold.len()];
    let (mut tp, mut fp) = (0, 0);
    for p in order {
        let names: HashSet<String> = std::iter::once(&p.canonical_name)
            .chain(p.aliases.iter())
            .map(|a| normalize_name(a))
            .collect();
        let hits: Vec<usize> = gold_aliases
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.is_disjoint(&names))
            .map(|(i, _)| i)
            .collect();
        match hits.iter().find(|&&i| !consumed[i]) {
            Some(&i) => {
                consumed[i] = true;
                tp += 1;
            }
            None => fp += 1,
        }
    }
    let fn_ = gold.len() - tp;
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Macro average: the mean of per-document recall, precision and F1 (F1
/// averaged directly). Counts are summed.
pub fn aggregate(rows: &[Metrics]) -> Result<Metrics, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(Metrics {
        recall: mean(|m| m.recall),
        precision: mean(|m| m.precision),
        f1: mean(|m| m.f1),
        tp: rows.iter().map(|m| m.tp).sum(),
        fp: rows.iter().map(|m| m.fp).sum(),
        fn_: rows.iter().map(|m| m.fn_).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub stage_label: String,
    pub m_e: usize,
    pub m_v: usize,
    pub per_kind: BTreeMap<ComponentKind, Metrics>,
    /// Mean over kinds of the per-kind averages.
    pub macro_metrics: Metrics,
    pub n_docs: usize,
    /// Documents whose pipeline run failed, with the error; excluded from
    /// the averages.
    pub failures: Vec<(String, String)>,
}

/// Runs the pipeline for every (m_e, m_v) cell on every annotated document
/// and scores the resulting control structures.
pub fn sweep(
    dataset: &Dataset,
    m_e_values: &[usize],
    m_v_values: &[usize],
    config: &PipelineConfig,
    pools: &PoolSet,
    session: Session<'_>,
) -> Result<Vec<EvalRow>, EvalError> {
    let items: Vec<_> = dataset.items.iter().filter(|i| i.ground_truth.is_some()).collect();
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut rows = Vec::new();
    for &m_e in m_e_values {
        for &m_v in m_v_values {
            let cell = PipelineConfig {
                m_e,
                m_v,
                ..config.clone()
            };
            let mut per_doc: BTreeMap<ComponentKind, Vec<Metrics>> = BTreeMap::new();
            let mut failures = Vec::new();
            let mut n_docs = 0;
            for item in &items {
                let gold = item.ground_truth.as_ref().expect("filtered");
                let outcome = pools
                    .check(m_e, m_v)
                    .map_err(|e| e.to_string())
                    .and_then(|_| analyze_components(&item.document, &cell, pools, session).map_err(|e| e.to_string()));
                match outcome {
                    Ok(analysis) => {
                        n_docs += 1;
                        for kind in ComponentKind::ALL {
                            let m = match_predictions(
                                analysis.control_structure.entities(kind),
                                gold.entities(kind),
                                kind,
                            )?;
                            per_doc.entry(kind).or_default().push(m);
                        }
                    }
                    Err(e) => {
                        log::warn!("cell {} on {}: {e}", stage_label(m_e, m_v), item.document.id);
                        failures.push((item.document.id.clone(), e));
                    }
                }
            }
            let mut per_kind = BTreeMap::new();
            for (kind, ms) in &per_doc {
                per_kind.insert(*kind, aggregate(ms)?);
            }
            let kind_rows: Vec<Metrics> = per_kind.values().copied().collect();
            let macro_metrics = aggregate(&kind_rows).unwrap_or_default();
            rows.push(EvalRow {
                stage_label: stage_label(m_e, m_v),
                m_e,
                m_v,
                per_kind,
                macro_metrics,
                n_docs,
                failures,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 9] = ["stage_label", "kind", "recall", "precision", "f1", "tp", "fp", "fn", "n_docs"];

/// Metrics CSV: one line per (row, kind) plus a `macro` line per row.
pub fn write_csv<W: Write>(rows: &[EvalRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let lines = row
            .per_kind
            .iter()
            .map(|(k, m)| (k.as_str(), m))
            .chain(std::iter::once(("macro", &row.macro_metrics)));
        for (kind, m) in lines {
            w.write_record([
                row.stage_label.clone(),
                kind.to_string(),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.f1),
                m.tp.to_string(),
                m.fp.to_string(),
                m.fn_.to_string(),
                row.n_docs.to_string(),
            ])?;
        }
    }
    w.flush()
}
