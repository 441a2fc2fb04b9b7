//! Recall stage: independent extraction queries merged by union.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::gateway::{
    parse_component_answer, ComponentAnswer, GatewayError, LanguageModel, Prompt,
    RequestSettings, Session,
};
use crate::kind::ComponentKind;
use crate::pools::{PromptPool, Template, DOCUMENT_PLACEHOLDER};
use crate::sampling::{choose_indices, derive_seed, par_map};
use crate::text::normalize_name;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("m_e = {m_e} is outside 1..={pool_size}")]
    InvalidCount { m_e: usize, pool_size: usize },
    #[error("template {0} is not in the pool")]
    UnknownTemplate(u32),
    #[error("document {0:?} has an empty body")]
    EmptyDocument(String),
    #[error("all {attempts} extraction queries failed: {last}")]
    Gateway { attempts: usize, last: GatewayError },
    #[error(transparent)]
    Fatal(GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntity {
    pub name: String,
    pub normalized_name: String,
    pub function: String,
    pub kind: ComponentKind,
    pub source_queries: BTreeSet<u32>,
}

impl CandidateEntity {
    /// Lowest template id that produced this candidate.
    pub fn earliest_source(&self) -> u32 {
        self.source_queries.iter().next().copied().unwrap_or(u32::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub doc_id: String,
    pub kind: ComponentKind,
    pub candidates: Vec<CandidateEntity>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Appended to every extraction prompt.
pub fn format_instruction(kind: ComponentKind) -> String {
    format!(
        "Output only JSON with exactly these keys, one list element per {kind}:\n\
         {{\n  \"component_name\": [...],\n  \"component function\": [...]\n}}\n\
         Use an empty list if the document contains no {plural}.",
        plural = kind.plural()
    )
}

pub fn build_extraction_prompt(
    pool: &PromptPool,
    template: &Template,
    doc: &Document,
    settings: &RequestSettings,
) -> Result<Prompt, ExtractError> {
    if doc.body.trim().is_empty() {
        return Err(ExtractError::EmptyDocument(doc.id.clone()));
    }
    let user = format!(
        "{}\n\n{}",
        template.text.replacen(DOCUMENT_PLACEHOLDER, &doc.body, 1),
        format_instruction(pool.kind)
    );
    Ok(settings.prompt(pool.system_text(), user))
}

/// Template ids chosen for a round of `m_e` queries.
pub fn select_templates(pool: &PromptPool, m_e: usize, seed: u64) -> Result<Vec<u32>, ExtractError> {
    if m_e == 0 || m_e > pool.len() {
        return Err(ExtractError::InvalidCount {
            m_e,
            pool_size: pool.len(),
        });
    }
    let label = format!("extract/{}", pool.kind);
    Ok(choose_indices(pool.len(), m_e, derive_seed(seed, &label))
        .into_iter()
        .map(|i| pool.templates[i].id)
        .collect())
}

/// Runs the given templates against `doc`, one query each. A reply that
/// cannot be parsed contributes an empty answer; the round fails when every
/// query fails at the transport level, or on any fatal gateway error.
pub fn run_templates(
    doc: &Document,
    pool: &PromptPool,
    template_ids: &[u32],
    session: Session<'_>,
) -> Result<Vec<(u32, ComponentAnswer)>, ExtractError> {
    let templates: Vec<&Template> = template_ids
        .iter()
        .map(|id| {
            pool.templates
                .iter()
                .find(|t| t.id == *id)
                .ok_or(ExtractError::UnknownTemplate(*id))
        })
        .collect::<Result<_, _>>()?;
    let prompts: Vec<(u32, Prompt)> = templates
        .iter()
        .map(|t| Ok((t.id, build_extraction_prompt(pool, t, doc, session.settings)?)))
        .collect::<Result<_, ExtractError>>()?;

    let model: &dyn LanguageModel = session.model;
    let replies = par_map(&prompts, session.concurrency, |(_, p)| model.send(p));

    let mut answers = Vec::with_capacity(prompts.len());
    let mut transport_failures = 0;
    let mut last_error = None;
    for ((id, _), reply) in prompts.iter().zip(replies) {
        let answer = match reply {
            Ok(reply) => match parse_component_answer(&reply.raw_text) {
                Ok(a) => {
                    if a.truncated {
                        log::warn!("{} template {id} on {}: unequal name/function lists truncated", pool.kind, doc.id);
                    }
                    a
                }
                Err(e) => {
                    log::warn!("{} template {id} on {}: unparsable reply ({e})", pool.kind, doc.id);
                    ComponentAnswer::default()
                }
            },
            Err(e) if e.is_fatal() => return Err(ExtractError::Fatal(e)),
            Err(e) => {
                log::warn!("{} template {id} on {}: {e}", pool.kind, doc.id);
                transport_failures += 1;
                last_error = Some(e);
                ComponentAnswer::default()
            }
        };
        answers.push((*id, answer));
    }
    if transport_failures == prompts.len() {
        if let Some(last) = last_error {
            return Err(ExtractError::Gateway {
                attempts: prompts.len(),
                last,
            });
        }
    }
    Ok(answers)
}

/// One extraction round: selects `m_e` templates with the seed and queries
/// each once.
pub fn run_extraction_round(
    doc: &Document,
    pool: &PromptPool,
    m_e: usize,
    selection_seed: u64,
    session: Session<'_>,
) -> Result<Vec<(u32, ComponentAnswer)>, ExtractError> {
    let ids = select_templates(pool, m_e, selection_seed)?;
    run_templates(doc, pool, &ids, session)
}

/// Merges answers into one candidate per normalized name. The function
/// text comes from the lowest template id that produced the name.
pub fn union_candidates(
    doc_id: &str,
    answers: &[(u32, ComponentAnswer)],
    kind: ComponentKind,
) -> CandidateSet {
    let mut merged: BTreeMap<String, (CandidateEntity, u32)> = BTreeMap::new();
    for (template_id, answer) in answers {
        for entry in &answer.entries {
            let name = entry.name.trim();
            let key = normalize_name(name);
            if key.is_empty() {
                continue;
            }
            let slot = merged.entry(key.clone()).or_insert_with(|| {
                (
                    CandidateEntity {
                        name: name.to_string(),
                        normalized_name: key,
                        function: entry.function.trim().to_string(),
                        kind,
                        source_queries: BTreeSet::new(),
                    },
                    *template_id,
                )
            });
            slot.0.source_queries.insert(*template_id);
            // Lowest id wins; equal ids keep the lexicographically smaller spelling.
            let replace = *template_id < slot.1
                || (*template_id == slot.1
                    && (name, entry.function.trim()) < (slot.0.name.as_str(), slot.0.function.as_str()));
            if replace {
                slot.0.name = name.to_string();
                slot.0.function = entry.function.trim().to_string();
                slot.1 = *template_id;
            }
        }
    }
    CandidateSet {
        doc_id: doc_id.to_string(),
        kind,
        candidates: merged.into_values().map(|(c, _)| c).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ComponentEntry, MockBackend};
    use proptest::prelude::*;

    fn answer(names: &[&str]) -> ComponentAnswer {
        ComponentAnswer {
            entries: names
                .iter()
                .map(|n| ComponentEntry {
                    name: n.to_string(),
                    function: format!("does {n}"),
                })
                .collect(),
            truncated: false,
        }
    }

    fn doc() -> Document {
        Document::from_text("d", "Brakes", "A front radar feeds the ECU, which commands the brake.")
    }

    #[test]
    fn fatal_errors_abort_the_round() {
        let settings = RequestSettings::default();
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let mock = MockBackend::with_responder(move |_| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Err(GatewayError::Auth("no key".into()))
            } else {
                Ok("[]".into())
            }
        });
        let err = run_extraction_round(&doc(), &pool, 4, 0, Session::new(&mock, &settings).with_concurrency(1));
        assert!(matches!(err, Err(ExtractError::Fatal(GatewayError::Auth(_)))));
    }

    #[test]
    fn prompt_embeds_template_and_document() {
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        let t = &pool.templates[1];
        assert_eq!(t.label, "interface-based inference");
        let p = build_extraction_prompt(&pool, t, &doc(), &RequestSettings::default()).unwrap();
        assert!(p.user_text.contains("List all input interfaces"));
        assert!(p.user_text.contains(&doc().body));
        assert!(p.user_text.contains("\"component_name\""));
        assert!(!p.user_text.contains(DOCUMENT_PLACEHOLDER));
        assert!(p.system_text.contains("safety certification engineer"));
        let again = build_extraction_prompt(&pool, t, &doc(), &RequestSettings::default()).unwrap();
        assert_eq!(p.fingerprint(), again.fingerprint());
    }

    #[test]
    fn empty_body_is_rejected() {
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        let empty = Document::from_text("e", "", "  ");
        assert!(matches!(
            build_extraction_prompt(&pool, &pool.templates[0], &empty, &RequestSettings::default()),
            Err(ExtractError::EmptyDocument(_))
        ));
    }

    #[test]
    fn union_merges_sources() {
        let set = union_candidates("d", &[(1, answer(&["radar"])), (2, answer(&["radar", "lidar"]))], ComponentKind::Sensor);
        assert_eq!(set.len(), 2);
        let radar = set.candidates.iter().find(|c| c.normalized_name == "radar").unwrap();
        assert_eq!(radar.source_queries, BTreeSet::from([1, 2]));
        assert_eq!(set.candidates[0].normalized_name, "lidar");
    }

    #[test]
    fn union_normalizes_spelling() {
        let set = union_candidates("d", &[(2, answer(&["radar."])), (1, answer(&["Radar"]))], ComponentKind::Sensor);
        assert_eq!(set.len(), 1);
        let c = &set.candidates[0];
        assert_eq!(c.normalized_name, "radar");
        assert_eq!(c.name, "Radar");
        assert_eq!(c.function, "does Radar");
    }

    #[test]
    fn union_of_nothing_is_empty() {
        assert!(union_candidates("d", &[], ComponentKind::Actuator).is_empty());
        assert!(union_candidates("d", &[(1, ComponentAnswer::default())], ComponentKind::Actuator).is_empty());
    }

    #[test]
    fn full_pool_uses_every_template() {
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        assert_eq!(select_templates(&pool, 4, 123).unwrap(), vec![1, 2, 3, 4]);
        let one = select_templates(&pool, 1, 5).unwrap();
        assert_eq!(one, select_templates(&pool, 1, 5).unwrap());
        assert!(select_templates(&pool, 0, 5).is_err());
        assert!(select_templates(&pool, 5, 5).is_err());
    }

    #[test]
    fn unparsable_reply_contributes_nothing() {
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|p| {
            Ok(if p.user_text.contains("Trace each control loop") {
                "Sorry, I cannot help with that.".into()
            } else {
                r#"{"component_name":["front radar"],"component function":["ranging"]}"#.into()
            })
        });
        let settings = RequestSettings::default();
        let answers = run_extraction_round(&doc(), &pool, 4, 0, Session::new(&mock, &settings)).unwrap();
        assert_eq!(answers.len(), 4);
        let sizes: Vec<_> = answers.iter().map(|(_, a)| a.entries.len()).collect();
        assert_eq!(sizes, [1, 1, 1, 0]);
        let set = union_candidates("d", &answers, ComponentKind::Sensor);
        assert_eq!(set.candidates[0].source_queries, BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn total_transport_failure_is_an_error() {
        let pool = PromptPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|_| Err(GatewayError::Transport("down".into())));
        let settings = RequestSettings::default();
        let r = run_extraction_round(&doc(), &pool, 3, 0, Session::new(&mock, &settings));
        assert!(matches!(r, Err(ExtractError::Gateway { attempts: 3, .. })));

        // a single transport failure is tolerated
        let mock = MockBackend::with_responder(|p| {
            if p.user_text.contains("Trace each control loop") {
                Err(GatewayError::Transport("down".into()))
            } else {
                Ok("[]".into())
            }
        });
        assert!(run_extraction_round(&doc(), &pool, 4, 0, Session::new(&mock, &settings)).is_ok());
    }

    fn answers_strategy() -> impl Strategy<Value = Vec<(u32, ComponentAnswer)>> {
        prop::collection::vec(
            (1u32..6, prop::collection::vec(prop::sample::select(vec!["Radar", "radar.", "lidar", "Wheel-speed sensor", "camera", "ECU"]), 0..5)),
            0..6,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(id, names)| (id, answer(&names)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn union_is_monotone(all in answers_strategy(), cut in 0usize..6) {
            let cut = cut.min(all.len());
            let small = union_candidates("d", &all[..cut], ComponentKind::Sensor);
            let big = union_candidates("d", &all, ComponentKind::Sensor);
            let big_keys: BTreeSet<_> = big.candidates.iter().map(|c| c.normalized_name.clone()).collect();
            for c in &small.candidates {
                prop_assert!(big_keys.contains(&c.normalized_name));
            }
        }

        #[test]
        fn union_is_order_independent(all in answers_strategy(), rot in 0usize..6) {
            let mut rotated = all.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
            }
            rotated.reverse();
            prop_assert_eq!(
                union_candidates("d", &all, ComponentKind::Sensor),
                union_candidates("d", &rotated, ComponentKind::Sensor)
            );
        }
    }
}
