//! Precision stage: majority-vote validation of candidates followed by
//! document-grounded alias consolidation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::extract::{CandidateEntity, CandidateSet};
use crate::gateway::{parse_boolean_answer, GatewayError, LanguageModel, Prompt, Session};
use crate::kind::ComponentKind;
use crate::pools::{
    Template, ValidatorPool, CANDIDATE_A_PLACEHOLDER, CANDIDATE_B_PLACEHOLDER,
    CANDIDATE_PLACEHOLDER, DOCUMENT_PLACEHOLDER,
};
use crate::sampling::{choose_indices, derive_seed, par_map};
use crate::text::normalize_name;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("m_v = {m_v} exceeds the {pool_size} available {what} templates")]
    InvalidCount {
        m_v: usize,
        pool_size: usize,
        what: &'static str,
    },
    #[error("no vote record for candidate {0:?}")]
    MissingRecord(String),
    #[error("all {attempts} validation queries for {subject:?} failed: {last}")]
    Gateway {
        subject: String,
        attempts: usize,
        last: GatewayError,
    },
    #[error("candidate {name:?} is a {found}, expected {expected}")]
    KindMismatch {
        name: String,
        found: ComponentKind,
        expected: ComponentKind,
    },
    #[error(transparent)]
    Fatal(GatewayError),
}

const VERDICT_INSTRUCTION: &str = "End your answer with a single word: yes or no.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub validator_id: u32,
    pub verdict: bool,
    pub parse_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub candidate_key: String,
    pub votes: Vec<Vote>,
    pub accepted: bool,
}

/// Majority threshold: at least half of `m_v` votes, so an even split
/// accepts.
pub fn majority_accepts(true_votes: usize, m_v: usize) -> bool {
    2 * true_votes >= m_v
}

impl VoteRecord {
    pub fn from_votes(candidate_key: impl Into<String>, votes: Vec<Vote>) -> Self {
        let yes = votes.iter().filter(|v| v.verdict).count();
        let accepted = majority_accepts(yes, votes.len());
        VoteRecord {
            candidate_key: candidate_key.into(),
            votes,
            accepted,
        }
    }

    pub fn true_votes(&self) -> usize {
        self.votes.iter().filter(|v| v.verdict).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedEntity {
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
    pub kind: ComponentKind,
    pub function: String,
    pub support_count: usize,
}

impl ValidatedEntity {
    fn sort_key(&self) -> (String, String) {
        (normalize_name(&self.canonical_name), self.canonical_name.clone())
    }
}

/// A candidate accepted as-is, without consolidation.
impl From<&CandidateEntity> for ValidatedEntity {
    fn from(c: &CandidateEntity) -> Self {
        ValidatedEntity {
            canonical_name: c.name.clone(),
            aliases: BTreeSet::from([c.name.clone()]),
            kind: c.kind,
            function: c.function.clone(),
            support_count: c.source_queries.len().max(1),
        }
    }
}

/// One pairwise coreference decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub first: String,
    pub second: String,
    pub record: VoteRecord,
}

fn select(templates: &[Template], m_v: usize, seed: u64, label: &str, what: &'static str) -> Result<Vec<Template>, ValidateError> {
    if m_v > templates.len() {
        return Err(ValidateError::InvalidCount {
            m_v,
            pool_size: templates.len(),
            what,
        });
    }
    Ok(choose_indices(templates.len(), m_v, derive_seed(seed, label))
        .into_iter()
        .map(|i| templates[i].clone())
        .collect())
}

fn fill(template: &str, pairs: &[(&str, &str)], doc: &Document) -> String {
    let mut text = template.to_string();
    for (token, value) in pairs {
        text = text.replace(token, value);
    }
    // document last, so document text is never re-scanned for placeholders
    format!(
        "{}\n\n{VERDICT_INSTRUCTION}",
        text.replacen(DOCUMENT_PLACEHOLDER, &doc.body, 1)
    )
}

pub fn build_validation_prompt(
    pool: &ValidatorPool,
    template: &Template,
    candidate: &CandidateEntity,
    doc: &Document,
    session: &Session<'_>,
) -> Prompt {
    let user = fill(&template.text, &[(CANDIDATE_PLACEHOLDER, &candidate.name)], doc);
    session.settings.prompt(pool.system_text(), user)
}

pub fn build_coreference_prompt(
    pool: &ValidatorPool,
    template: &Template,
    first: &CandidateEntity,
    second: &CandidateEntity,
    doc: &Document,
    session: &Session<'_>,
) -> Prompt {
    let user = fill(
        &template.text,
        &[
            (CANDIDATE_A_PLACEHOLDER, &first.name),
            (CANDIDATE_B_PLACEHOLDER, &second.name),
        ],
        doc,
    );
    session.settings.prompt(pool.system_text(), user)
}

/// Sends one prompt per validator and tallies the verdicts. Unparsable
/// replies and transport failures count as "no" with `parse_ok = false`;
/// fatal gateway errors abort.
fn tally(
    subject: &str,
    prompts: Vec<(u32, Prompt)>,
    model: &dyn LanguageModel,
    concurrency: usize,
) -> Result<VoteRecord, ValidateError> {
    let replies = par_map(&prompts, concurrency, |(_, p)| model.send(p));
    let mut votes = Vec::with_capacity(prompts.len());
    let mut transport_failures = 0;
    let mut last = None;
    for ((validator_id, _), reply) in prompts.iter().zip(replies) {
        let verdict = match reply {
            Ok(r) => parse_boolean_answer(&r.raw_text).map_err(|e| {
                log::warn!("validator {validator_id} on {subject:?}: {e}");
            }),
            Err(e) if e.is_fatal() => return Err(ValidateError::Fatal(e)),
            Err(e) => {
                log::warn!("validator {validator_id} on {subject:?}: {e}");
                transport_failures += 1;
                last = Some(e);
                Err(())
            }
        };
        votes.push(Vote {
            validator_id: *validator_id,
            verdict: verdict.unwrap_or(false),
            parse_ok: verdict.is_ok(),
        });
    }
    if !prompts.is_empty() && transport_failures == prompts.len() {
        return Err(ValidateError::Gateway {
            subject: subject.to_string(),
            attempts: prompts.len(),
            last: last.expect("at least one failure"),
        });
    }
    Ok(VoteRecord::from_votes(subject, votes))
}

/// Runs `m_v` validators on one candidate and applies the majority rule.
pub fn run_votes(
    candidate: &CandidateEntity,
    doc: &Document,
    pool: &ValidatorPool,
    m_v: usize,
    selection_seed: u64,
    session: Session<'_>,
) -> Result<VoteRecord, ValidateError> {
    let label = format!("validate/{}/{}", candidate.kind, candidate.normalized_name);
    let templates = select(&pool.templates, m_v, selection_seed, &label, "validation")?;
    let prompts = templates
        .iter()
        .map(|t| (t.id, build_validation_prompt(pool, t, candidate, doc, &session)))
        .collect();
    tally(&candidate.normalized_name, prompts, session.model, session.concurrency)
}

/// Keeps the accepted candidates, in their original order.
pub fn filter_by_vote(
    candidates: &CandidateSet,
    records: &[VoteRecord],
) -> Result<Vec<CandidateEntity>, ValidateError> {
    let by_key: BTreeMap<&str, &VoteRecord> = records
        .iter()
        .map(|r| (r.candidate_key.as_str(), r))
        .collect();
    let mut kept = Vec::new();
    for c in &candidates.candidates {
        let record = by_key
            .get(c.normalized_name.as_str())
            .ok_or_else(|| ValidateError::MissingRecord(c.normalized_name.clone()))?;
        if record.accepted {
            kept.push(c.clone());
        }
    }
    Ok(kept)
}

/// Union-find over indices, with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Builds entities from the connected components of the accepted-pair
/// graph. Each component's canonical member is the one first produced by
/// the lowest template id, ties broken by name.
pub fn cluster_from_pairs(survivors: &[CandidateEntity], accepted_pairs: &[(usize, usize)]) -> Vec<ValidatedEntity> {
    let mut sets = DisjointSet::new(survivors.len());
    for &(a, b) in accepted_pairs {
        sets.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<&CandidateEntity>> = BTreeMap::new();
    for (i, c) in survivors.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push(c);
    }
    let mut entities: Vec<ValidatedEntity> = groups
        .into_values()
        .map(|members| {
            let canonical = members
                .iter()
                .min_by(|x, y| {
                    (x.earliest_source(), &x.name, &x.normalized_name)
                        .cmp(&(y.earliest_source(), &y.name, &y.normalized_name))
                })
                .expect("component is non-empty");
            let support: BTreeSet<u32> = members
                .iter()
                .flat_map(|m| m.source_queries.iter().copied())
                .collect();
            ValidatedEntity {
                canonical_name: canonical.name.clone(),
                aliases: members.iter().map(|m| m.name.clone()).collect(),
                kind: canonical.kind,
                function: canonical.function.clone(),
                support_count: support.len().max(1),
            }
        })
        .collect();
    entities.sort_by_key(ValidatedEntity::sort_key);
    entities
}

/// Consolidates aliases among survivors of one kind by asking, for every
/// pair, whether both names denote the same physical component.
pub fn coreference_cluster(
    survivors: &[CandidateEntity],
    doc: &Document,
    pool: &ValidatorPool,
    m_v: usize,
    selection_seed: u64,
    session: Session<'_>,
) -> Result<(Vec<ValidatedEntity>, Vec<PairRecord>), ValidateError> {
    for s in survivors {
        if s.kind != pool.kind {
            return Err(ValidateError::KindMismatch {
                name: s.name.clone(),
                found: s.kind,
                expected: pool.kind,
            });
        }
    }
    if survivors.len() < 2 || m_v == 0 || pool.coreference_templates.is_empty() {
        if survivors.len() >= 2 && m_v > 0 {
            log::warn!("{} pool has no coreference templates; aliases are not merged", pool.kind);
        }
        return Ok((cluster_from_pairs(survivors, &[]), Vec::new()));
    }
    let mut order: Vec<usize> = (0..survivors.len()).collect();
    order.sort_by(|&a, &b| survivors[a].normalized_name.cmp(&survivors[b].normalized_name));
    let mut pairs = Vec::new();
    for (x, &a) in order.iter().enumerate() {
        for &b in &order[x + 1..] {
            pairs.push((a, b));
        }
    }
    // Pairs run one after another; each pair's validators run concurrently.
    let mut records = Vec::with_capacity(pairs.len());
    let mut accepted = Vec::new();
    for &(a, b) in &pairs {
        let (first, second) = (&survivors[a], &survivors[b]);
        let subject = format!("{} = {}", first.normalized_name, second.normalized_name);
        let label = format!("coreference/{}/{subject}", pool.kind);
        let templates = select(&pool.coreference_templates, m_v, selection_seed, &label, "coreference")?;
        let prompts = templates
            .iter()
            .map(|t| (t.id, build_coreference_prompt(pool, t, first, second, doc, &session)))
            .collect();
        let record = tally(&subject, prompts, session.model, session.concurrency)?;
        if record.accepted {
            accepted.push((a, b));
        }
        records.push(PairRecord {
            first: first.normalized_name.clone(),
            second: second.normalized_name.clone(),
            record,
        });
    }
    Ok((cluster_from_pairs(survivors, &accepted), records))
}

/// Full precision stage for one kind: votes, filtering, consolidation.
/// With `m_v = 0` every candidate passes unconsolidated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindValidation {
    pub kind: ComponentKind,
    pub votes: Vec<VoteRecord>,
    pub pairs: Vec<PairRecord>,
    pub entities: Vec<ValidatedEntity>,
}

pub fn validate_candidates(
    candidates: &CandidateSet,
    doc: &Document,
    pool: &ValidatorPool,
    m_v: usize,
    selection_seed: u64,
    session: Session<'_>,
) -> Result<KindValidation, ValidateError> {
    if m_v == 0 {
        let mut entities: Vec<ValidatedEntity> = candidates.candidates.iter().map(ValidatedEntity::from).collect();
        entities.sort_by_key(ValidatedEntity::sort_key);
        return Ok(KindValidation {
            kind: candidates.kind,
            votes: Vec::new(),
            pairs: Vec::new(),
            entities,
        });
    }
    if m_v > pool.templates.len() {
        return Err(ValidateError::InvalidCount {
            m_v,
            pool_size: pool.templates.len(),
            what: "validation",
        });
    }
    let votes = candidates
        .candidates
        .iter()
        .map(|c| run_votes(c, doc, pool, m_v, selection_seed, session))
        .collect::<Result<Vec<_>, _>>()?;
    let survivors = filter_by_vote(candidates, &votes)?;
    let (entities, pairs) = coreference_cluster(&survivors, doc, pool, m_v, selection_seed, session)?;
    Ok(KindValidation {
        kind: candidates.kind,
        votes,
        pairs,
        entities,
    })
}

/// Validated sensors, controllers and actuators of one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ControlStructureRepr", from = "ControlStructureRepr")]
pub struct ControlStructure {
    pub sensors: Vec<ValidatedEntity>,
    pub controllers: Vec<ValidatedEntity>,
    pub actuators: Vec<ValidatedEntity>,
}

impl ControlStructure {
    pub fn entities(&self, kind: ComponentKind) -> &[ValidatedEntity] {
        match kind {
            ComponentKind::Sensor => &self.sensors,
            ComponentKind::Controller => &self.controllers,
            ComponentKind::Actuator => &self.actuators,
        }
    }

    /// (N_S, N_C, N_A)
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.sensors.len(), self.controllers.len(), self.actuators.len())
    }
}

/// Groups entities by kind and sorts each list canonically. Kinds are
/// separate namespaces, so one name may appear under several kinds.
pub fn assemble_control_structure(validated: impl IntoIterator<Item = ValidatedEntity>) -> ControlStructure {
    let mut s = ControlStructure::default();
    for e in validated {
        match e.kind {
            ComponentKind::Sensor => s.sensors.push(e),
            ComponentKind::Controller => s.controllers.push(e),
            ComponentKind::Actuator => s.actuators.push(e),
        }
    }
    for list in [&mut s.sensors, &mut s.controllers, &mut s.actuators] {
        list.sort_by_key(ValidatedEntity::sort_key);
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntityRepr {
    canonical: String,
    #[serde(default)]
    aliases: BTreeSet<String>,
    #[serde(default)]
    function: String,
    #[serde(default = "one")]
    support_count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ControlStructureRepr {
    #[serde(default)]
    sensors: Vec<EntityRepr>,
    #[serde(default)]
    controllers: Vec<EntityRepr>,
    #[serde(default)]
    actuators: Vec<EntityRepr>,
}

impl From<ControlStructure> for ControlStructureRepr {
    fn from(s: ControlStructure) -> Self {
        let conv = |v: Vec<ValidatedEntity>| {
            v.into_iter()
                .map(|e| EntityRepr {
                    canonical: e.canonical_name,
                    aliases: e.aliases,
                    function: e.function,
                    support_count: e.support_count,
                })
                .collect()
        };
        ControlStructureRepr {
            sensors: conv(s.sensors),
            controllers: conv(s.controllers),
            actuators: conv(s.actuators),
        }
    }
}

impl From<ControlStructureRepr> for ControlStructure {
    fn from(r: ControlStructureRepr) -> Self {
        let conv = |v: Vec<EntityRepr>, kind| {
            v.into_iter().map(move |e| {
                let mut aliases = e.aliases;
                aliases.insert(e.canonical.clone());
                ValidatedEntity {
                    canonical_name: e.canonical,
                    aliases,
                    kind,
                    function: e.function,
                    support_count: e.support_count.max(1),
                }
            })
        };
        assemble_control_structure(
            conv(r.sensors, ComponentKind::Sensor)
                .chain(conv(r.controllers, ComponentKind::Controller))
                .chain(conv(r.actuators, ComponentKind::Actuator)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, RequestSettings};
    use proptest::prelude::*;

    fn cand(name: &str, kind: ComponentKind, sources: &[u32]) -> CandidateEntity {
        CandidateEntity {
            name: name.into(),
            normalized_name: normalize_name(name),
            function: format!("{name} function"),
            kind,
            source_queries: sources.iter().copied().collect(),
        }
    }

    fn doc() -> Document {
        Document::from_text("car", "Car", "The front radar, also called the obstacle detection sensor, feeds the ECU.")
    }

    fn votes(verdicts: &[bool]) -> Vec<Vote> {
        verdicts
            .iter()
            .enumerate()
            .map(|(i, &v)| Vote {
                validator_id: i as u32 + 1,
                verdict: v,
                parse_ok: true,
            })
            .collect()
    }

    #[test]
    fn replay_misses_abort_instead_of_voting_no() {
        let mock = MockBackend::with_responder(|_| Err(GatewayError::CassetteMiss { fingerprint: "f".into() }));
        let settings = RequestSettings::default();
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let c = cand("front radar", ComponentKind::Sensor, &[1]);
        let err = run_votes(&c, &doc(), &pool, 3, 0, Session::new(&mock, &settings)).unwrap_err();
        assert!(matches!(err, ValidateError::Fatal(GatewayError::CassetteMiss { .. })));
    }

    #[test]
    fn threshold_accepts_ties() {
        assert!(VoteRecord::from_votes("x", votes(&[true, true, false, false])).accepted);
        assert!(!VoteRecord::from_votes("x", votes(&[true, false, false, false])).accepted);
        assert!(VoteRecord::from_votes("x", votes(&[true, false, true])).accepted);
        assert!(!VoteRecord::from_votes("x", votes(&[true, false, false])).accepted);
    }

    proptest! {
        #[test]
        fn vote_order_is_irrelevant(v in prop::collection::vec(any::<bool>(), 1..8), seed in any::<u64>()) {
            let mut shuffled = v.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            prop_assert_eq!(
                VoteRecord::from_votes("x", votes(&v)).accepted,
                VoteRecord::from_votes("x", votes(&shuffled)).accepted
            );
        }
    }

    #[test]
    fn unparsable_vote_counts_as_no() {
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|p| {
            Ok(if p.user_text.contains("Quote the passage") {
                "I am not sure.".into()
            } else if p.user_text.contains("Consider whether") {
                "No.".into()
            } else {
                "Yes.".into()
            })
        });
        let settings = RequestSettings::default();
        let c = cand("front radar", ComponentKind::Sensor, &[1]);
        let r = run_votes(&c, &doc(), &pool, 4, 0, Session::new(&mock, &settings)).unwrap();
        assert_eq!(r.votes.len(), 4);
        assert_eq!(r.true_votes(), 2);
        assert_eq!(r.votes.iter().filter(|v| !v.parse_ok).count(), 1);
        assert!(r.accepted);
    }

    #[test]
    fn filter_keeps_accepted_in_order() {
        let set = CandidateSet {
            doc_id: "d".into(),
            kind: ComponentKind::Sensor,
            candidates: vec![
                cand("a", ComponentKind::Sensor, &[1]),
                cand("b", ComponentKind::Sensor, &[1]),
                cand("c", ComponentKind::Sensor, &[1]),
            ],
        };
        let records = vec![
            VoteRecord::from_votes("c", votes(&[true])),
            VoteRecord::from_votes("a", votes(&[true])),
            VoteRecord::from_votes("b", votes(&[false])),
        ];
        let kept: Vec<_> = filter_by_vote(&set, &records).unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(kept, ["a", "c"]);

        let none: Vec<_> = records.iter().map(|r| VoteRecord::from_votes(r.candidate_key.clone(), votes(&[false]))).collect();
        assert!(filter_by_vote(&set, &none).unwrap().is_empty());

        assert!(matches!(filter_by_vote(&set, &records[..2]), Err(ValidateError::MissingRecord(k)) if k == "b"));
    }

    #[test]
    fn coreference_merges_aliases() {
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|_| Ok("yes".into()));
        let settings = RequestSettings::default();
        let survivors = vec![
            cand("obstacle detection sensor", ComponentKind::Sensor, &[2, 3]),
            cand("front radar", ComponentKind::Sensor, &[1]),
        ];
        let (entities, pairs) = coreference_cluster(&survivors, &doc(), &pool, 4, 0, Session::new(&mock, &settings)).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(entities.len(), 1);
        let e = &entities[0];
        assert_eq!(e.canonical_name, "front radar");
        assert_eq!(e.aliases.len(), 2);
        assert_eq!(e.function, "front radar function");
        assert_eq!(e.support_count, 3);
    }

    #[test]
    fn single_survivor_issues_no_queries() {
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|_| Ok("yes".into()));
        let settings = RequestSettings::default();
        let survivors = vec![cand("radar", ComponentKind::Sensor, &[1])];
        let (entities, pairs) = coreference_cluster(&survivors, &doc(), &pool, 4, 0, Session::new(&mock, &settings)).unwrap();
        assert!(pairs.is_empty());
        assert_eq!(mock.call_count(), 0);
        assert_eq!(entities[0].aliases, BTreeSet::from(["radar".to_string()]));
    }

    #[test]
    fn coreference_prompt_names_both_candidates() {
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let settings = RequestSettings::default();
        let mock = MockBackend::with_responder(|_| Ok("no".into()));
        let session = Session::new(&mock, &settings);
        let a = cand("front radar", ComponentKind::Sensor, &[1]);
        let b = cand("obstacle detection sensor", ComponentKind::Sensor, &[1]);
        let p = build_coreference_prompt(&pool, &pool.coreference_templates[0], &a, &b, &doc(), &session);
        assert!(p.user_text.contains("do \"front radar\" and \"obstacle detection sensor\" denote the same physical component"));
        assert!(p.user_text.contains(&doc().body));
    }

    #[test]
    fn transitive_pairs_form_one_entity() {
        let survivors = vec![
            cand("A", ComponentKind::Actuator, &[2]),
            cand("B", ComponentKind::Actuator, &[1]),
            cand("C", ComponentKind::Actuator, &[3]),
        ];
        let e = cluster_from_pairs(&survivors, &[(0, 1), (1, 2)]);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].canonical_name, "B");
        assert_eq!(e[0].support_count, 3);
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let pool = ValidatorPool::builtin(ComponentKind::Sensor);
        let mock = MockBackend::with_responder(|_| Ok("yes".into()));
        let settings = RequestSettings::default();
        let survivors = vec![cand("ECU", ComponentKind::Controller, &[1])];
        assert!(matches!(
            coreference_cluster(&survivors, &doc(), &pool, 1, 0, Session::new(&mock, &settings)),
            Err(ValidateError::KindMismatch { .. })
        ));
    }

    fn pairs_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..8).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..12)))
    }

    proptest! {
        #[test]
        fn clustering_is_a_partition((n, pairs) in pairs_strategy()) {
            let survivors: Vec<_> = (0..n).map(|i| cand(&format!("c{i}"), ComponentKind::Sensor, &[(i % 4) as u32 + 1])).collect();
            let entities = cluster_from_pairs(&survivors, &pairs);
            let mut seen = BTreeSet::new();
            for e in &entities {
                prop_assert!(e.aliases.contains(&e.canonical_name));
                prop_assert!(e.support_count >= 1);
                for a in &e.aliases {
                    prop_assert!(seen.insert(a.clone()), "alias {} in two entities", a);
                }
            }
            prop_assert_eq!(seen.len(), n);

            // members joined by a pair share an entity
            for &(a, b) in &pairs {
                let ea = entities.iter().position(|e| e.aliases.contains(&survivors[a].name));
                let eb = entities.iter().position(|e| e.aliases.contains(&survivors[b].name));
                prop_assert_eq!(ea, eb);
            }

            let mut reversed = pairs.clone();
            reversed.reverse();
            let swapped: Vec<_> = reversed.iter().map(|&(a, b)| (b, a)).collect();
            prop_assert_eq!(&entities, &cluster_from_pairs(&survivors, &swapped));
        }
    }

    #[test]
    fn worked_example_counts() {
        let e = |name: &str, kind| ValidatedEntity::from(&cand(name, kind, &[1]));
        let s = assemble_control_structure(vec![
            e("camera", ComponentKind::Sensor),
            e("radar", ComponentKind::Sensor),
            e("lidar", ComponentKind::Sensor),
            e("ECU", ComponentKind::Controller),
            e("steering motor", ComponentKind::Actuator),
            e("brake", ComponentKind::Actuator),
            e("throttle", ComponentKind::Actuator),
        ]);
        assert_eq!(s.counts(), (3, 1, 3));
        let names: Vec<_> = s.sensors.iter().map(|e| e.canonical_name.as_str()).collect();
        assert_eq!(names, ["camera", "lidar", "radar"]);
        assert_eq!(assemble_control_structure(Vec::new()).counts(), (0, 0, 0));
    }

    #[test]
    fn same_name_under_two_kinds_is_kept() {
        let s = assemble_control_structure(vec![
            ValidatedEntity::from(&cand("PLC", ComponentKind::Controller, &[1])),
            ValidatedEntity::from(&cand("PLC", ComponentKind::Actuator, &[1])),
        ]);
        assert_eq!(s.counts(), (0, 1, 1));
    }

    #[test]
    fn control_structure_json_round_trip() {
        let text = r#"{"sensors":[{"canonical":"radar","aliases":["front radar"],"function":"ranging"}],"actuators":[{"canonical":"brake"}]}"#;
        let s: ControlStructure = serde_json::from_str(text).unwrap();
        assert_eq!(s.counts(), (1, 0, 1));
        assert!(s.sensors[0].aliases.contains("radar"));
        assert_eq!(s.actuators[0].kind, ComponentKind::Actuator);
        let back: ControlStructure = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }
}
