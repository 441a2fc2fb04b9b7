//! Skeleton-driven enumeration of unsafe control actions (UCAs) over a
//! validated control structure, plus report assembly.
//!
//! A UCA of one of four types originates at an actuator, at a controller
//! (propagating to one actuator) or at a sensor (propagating through one
//! controller to one actuator). Its type never changes along the path and
//! paths never branch, so the number of UCAs is
//! `F * (N_A + N_C * N_A + N_S * N_C * N_A)` with `F = 4`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::corpus::Document;
use crate::gateway::Session;
use crate::kind::ComponentKind;
use crate::sampling::par_map;
use crate::validate::ControlStructure;

pub const SCENARIO_FAILED: &str = "[scenario generation failed]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UcaType {
    /// Not provided when needed.
    NP,
    /// Wrongly provided when not needed.
    WP,
    /// Incorrect magnitude.
    IM,
    /// Incorrect timing.
    IT,
}

impl UcaType {
    pub const ALL: [UcaType; 4] = [UcaType::NP, UcaType::WP, UcaType::IM, UcaType::IT];

    pub fn code(self) -> &'static str {
        match self {
            UcaType::NP => "NP",
            UcaType::WP => "WP",
            UcaType::IM => "IM",
            UcaType::IT => "IT",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            UcaType::NP => "not provided when needed",
            UcaType::WP => "wrongly provided when not needed",
            UcaType::IM => "provided with incorrect magnitude",
            UcaType::IT => "provided with incorrect timing",
        }
    }
}

/// Number of UCA types per component.
pub const UCA_TYPES: u64 = UcaType::ALL.len() as u64;

impl fmt::Display for UcaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for UcaType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UcaType::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown UCA type {s:?}"))
    }
}

/// A single non-branching chain along which one UCA propagates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "PathRepr", try_from = "PathRepr")]
pub enum PropagationPath {
    ActuatorOrigin {
        actuator: String,
    },
    ControllerOrigin {
        controller: String,
        actuator: String,
    },
    SensorOrigin {
        sensor: String,
        controller: String,
        actuator: String,
    },
}

impl PropagationPath {
    pub fn origin(&self) -> ComponentKind {
        match self {
            PropagationPath::ActuatorOrigin { .. } => ComponentKind::Actuator,
            PropagationPath::ControllerOrigin { .. } => ComponentKind::Controller,
            PropagationPath::SensorOrigin { .. } => ComponentKind::Sensor,
        }
    }

    /// Path members from origin to actuator.
    pub fn members(&self) -> Vec<(ComponentKind, &str)> {
        match self {
            PropagationPath::ActuatorOrigin { actuator } => vec![(ComponentKind::Actuator, actuator)],
            PropagationPath::ControllerOrigin { controller, actuator } => vec![
                (ComponentKind::Controller, controller),
                (ComponentKind::Actuator, actuator),
            ],
            PropagationPath::SensorOrigin {
                sensor,
                controller,
                actuator,
            } => vec![
                (ComponentKind::Sensor, sensor),
                (ComponentKind::Controller, controller),
                (ComponentKind::Actuator, actuator),
            ],
        }
    }
}

impl fmt::Display for PropagationPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.members().into_iter().map(|(_, n)| n).collect();
        f.write_str(&names.join(" -> "))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathRepr {
    level: ComponentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    controller: Option<String>,
    actuator: String,
}

impl From<PropagationPath> for PathRepr {
    fn from(p: PropagationPath) -> Self {
        match p {
            PropagationPath::ActuatorOrigin { actuator } => PathRepr {
                level: ComponentKind::Actuator,
                sensor: None,
                controller: None,
                actuator,
            },
            PropagationPath::ControllerOrigin { controller, actuator } => PathRepr {
                level: ComponentKind::Controller,
                sensor: None,
                controller: Some(controller),
                actuator,
            },
            PropagationPath::SensorOrigin {
                sensor,
                controller,
                actuator,
            } => PathRepr {
                level: ComponentKind::Sensor,
                sensor: Some(sensor),
                controller: Some(controller),
                actuator,
            },
        }
    }
}

impl TryFrom<PathRepr> for PropagationPath {
    type Error = String;

    fn try_from(r: PathRepr) -> Result<Self, Self::Error> {
        match (r.level, r.sensor, r.controller) {
            (ComponentKind::Actuator, None, None) => Ok(PropagationPath::ActuatorOrigin { actuator: r.actuator }),
            (ComponentKind::Controller, None, Some(controller)) => Ok(PropagationPath::ControllerOrigin {
                controller,
                actuator: r.actuator,
            }),
            (ComponentKind::Sensor, Some(sensor), Some(controller)) => Ok(PropagationPath::SensorOrigin {
                sensor,
                controller,
                actuator: r.actuator,
            }),
            (level, ..) => Err(format!("path fields do not match level {level}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uca {
    pub index: usize,
    #[serde(rename = "type")]
    pub uca_type: UcaType,
    pub path: PropagationPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

pub fn count_ucas(n_s: u64, n_c: u64, n_a: u64, f: u64) -> u64 {
    f * (n_a + n_c * n_a + n_s * n_c * n_a)
}

/// Every (path, type) pair in canonical order: actuator-origin paths, then
/// controller-origin, then sensor-origin; within a block, members in list
/// order and types in NP, WP, IM, IT order.
pub fn enumerate_paths(structure: &ControlStructure) -> Vec<(PropagationPath, UcaType)> {
    let names = |kind| -> Vec<&str> {
        structure
            .entities(kind)
            .iter()
            .map(|e| e.canonical_name.as_str())
            .collect()
    };
    let (sensors, controllers, actuators) = (
        names(ComponentKind::Sensor),
        names(ComponentKind::Controller),
        names(ComponentKind::Actuator),
    );

    let mut paths = Vec::new();
    for a in &actuators {
        paths.push(PropagationPath::ActuatorOrigin { actuator: a.to_string() });
    }
    for c in &controllers {
        for a in &actuators {
            paths.push(PropagationPath::ControllerOrigin {
                controller: c.to_string(),
                actuator: a.to_string(),
            });
        }
    }
    for s in &sensors {
        for c in &controllers {
            for a in &actuators {
                paths.push(PropagationPath::SensorOrigin {
                    sensor: s.to_string(),
                    controller: c.to_string(),
                    actuator: a.to_string(),
                });
            }
        }
    }
    paths
        .into_iter()
        .flat_map(|p| UcaType::ALL.into_iter().map(move |t| (p.clone(), t)))
        .collect()
}

/// Numbers enumerated tuples 1..n, without scenarios.
pub fn number_ucas(tuples: Vec<(PropagationPath, UcaType)>) -> Vec<Uca> {
    tuples
        .into_iter()
        .enumerate()
        .map(|(i, (path, uca_type))| Uca {
            index: i + 1,
            uca_type,
            path,
            scenario: None,
        })
        .collect()
}

const SCENARIO_SYSTEM: &str = "You are a safety certification engineer conducting a formal STPA hazard \
analysis. Your output must reflect regulatory-grade rigor and must be grounded in the document you are given.";

pub fn build_scenario_prompt(uca: &Uca, doc: &Document, session: &Session<'_>) -> crate::gateway::Prompt {
    let chain: Vec<String> = uca
        .path
        .members()
        .into_iter()
        .map(|(kind, name)| format!("{kind} \"{name}\""))
        .collect();
    let user = format!(
        "Document:\n{body}\n\n\
         Unsafe control action {index}: type {code} ({desc}).\n\
         Origin: {origin}. Propagation path: {chain}.\n\n\
         Decide whether a plausible real-world situation exists in which this unsafe control action occurs \
         and propagates along exactly this path. Fill in the template:\n\
         <error type {code}> at <origin component>, impacting <downstream components>, resulting in \
         <consequence>, which is dangerous because <hazard>.\n\
         Then state whether the scenario is feasible for this system. Use only components named in the document.",
        body = doc.body,
        index = uca.index,
        code = uca.uca_type.code(),
        desc = uca.uca_type.description(),
        origin = uca.path.origin(),
        chain = chain.join(" -> "),
    );
    session.settings.prompt(SCENARIO_SYSTEM, user)
}

/// Asks the model for a causal scenario. Failures degrade to
/// [`SCENARIO_FAILED`].
pub fn generate_scenario(uca: &Uca, doc: &Document, session: Session<'_>) -> String {
    let prompt = build_scenario_prompt(uca, doc, &session);
    match session.model.send(&prompt) {
        Ok(reply) if !reply.raw_text.trim().is_empty() => reply.raw_text.trim().to_string(),
        Ok(_) => SCENARIO_FAILED.to_string(),
        Err(e) => {
            log::warn!("scenario for UCA {} failed: {e}", uca.index);
            SCENARIO_FAILED.to_string()
        }
    }
}

/// Fills in scenarios for every UCA, concurrently; order is preserved.
pub fn attach_scenarios(ucas: &mut [Uca], doc: &Document, session: Session<'_>) {
    let scenarios = par_map(ucas, session.concurrency, |u| generate_scenario(u, doc, session));
    for (u, s) in ucas.iter_mut().zip(scenarios) {
        u.scenario = Some(s);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub kind: ComponentKind,
    pub candidates: usize,
    pub accepted: usize,
    pub validated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub stage_label: String,
    pub config: PipelineConfig,
    pub counts: Vec<KindCounts>,
    pub uca_count: usize,
    pub scenarios_failed: usize,
    /// Absent for replayed runs so their reports are byte-stable.
    pub timestamps: Option<Timestamps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub doc_id: String,
    pub control_structure: ControlStructure,
    pub ucas: Vec<Uca>,
    pub run_metadata: RunMetadata,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("expected {expected} UCAs for this control structure, got {actual}")]
    CountMismatch { expected: u64, actual: usize },
    #[error("UCA indices must run 1..n; found {found} at position {position}")]
    BadIndex { position: usize, found: usize },
}

pub fn expected_uca_count(structure: &ControlStructure) -> u64 {
    let (s, c, a) = structure.counts();
    count_ucas(s as u64, c as u64, a as u64, UCA_TYPES)
}

pub fn assemble_report(
    doc: &Document,
    structure: ControlStructure,
    ucas: Vec<Uca>,
    mut metadata: RunMetadata,
) -> Result<Report, ReportError> {
    let expected = expected_uca_count(&structure);
    if ucas.len() as u64 != expected {
        return Err(ReportError::CountMismatch {
            expected,
            actual: ucas.len(),
        });
    }
    if let Some((position, u)) = ucas.iter().enumerate().find(|(i, u)| u.index != i + 1) {
        return Err(ReportError::BadIndex {
            position: position + 1,
            found: u.index,
        });
    }
    metadata.uca_count = ucas.len();
    metadata.scenarios_failed = ucas
        .iter()
        .filter(|u| u.scenario.as_deref() == Some(SCENARIO_FAILED))
        .count();
    Ok(Report {
        doc_id: doc.id.clone(),
        control_structure: structure,
        ucas,
        run_metadata: metadata,
    })
}

impl Report {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn md_cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', "<br>")
}

/// Human-readable rendering of a report.
pub fn render_markdown(report: &Report) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let cs = &report.control_structure;
    let (s, c, a) = cs.counts();
    writeln!(out, "# STPA report: {}\n", report.doc_id).unwrap();
    writeln!(out, "Stage: {}  ", report.run_metadata.stage_label).unwrap();
    writeln!(out, "Sensors: {s}, controllers: {c}, actuators: {a}, UCAs: {}\n", report.ucas.len()).unwrap();
    writeln!(out, "## Control structure\n").unwrap();
    writeln!(out, "| Kind | Component | Aliases | Function | Support |").unwrap();
    writeln!(out, "|---|---|---|---|---|").unwrap();
    for kind in ComponentKind::ALL {
        for e in cs.entities(kind) {
            let aliases: Vec<&str> = e
                .aliases
                .iter()
                .filter(|x| **x != e.canonical_name)
                .map(String::as_str)
                .collect();
            writeln!(
                out,
                "| {kind} | {} | {} | {} | {} |",
                md_cell(&e.canonical_name),
                md_cell(&aliases.join(", ")),
                md_cell(&e.function),
                e.support_count
            )
            .unwrap();
        }
    }
    writeln!(out, "\n## Unsafe control actions\n").unwrap();
    let with_scenarios = report.ucas.iter().any(|u| u.scenario.is_some());
    if with_scenarios {
        writeln!(out, "| # | Type | Origin | Path | Scenario |").unwrap();
        writeln!(out, "|---|---|---|---|---|").unwrap();
    } else {
        writeln!(out, "| # | Type | Origin | Path |").unwrap();
        writeln!(out, "|---|---|---|---|").unwrap();
    }
    for u in &report.ucas {
        write!(
            out,
            "| {} | {} | {} | {} |",
            u.index,
            u.uca_type,
            u.path.origin(),
            md_cell(&u.path.to_string())
        )
        .unwrap();
        if with_scenarios {
            write!(out, " {} |", md_cell(u.scenario.as_deref().unwrap_or(""))).unwrap();
        }
        out.push('\n');
    }
    out
}
