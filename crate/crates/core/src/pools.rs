//! Prompt pools: editable question templates for extraction, validation
//! and coreference, one pool per component kind.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kind::ComponentKind;

pub const DOCUMENT_PLACEHOLDER: &str = "{document}";
pub const CANDIDATE_PLACEHOLDER: &str = "{candidate}";
pub const CANDIDATE_A_PLACEHOLDER: &str = "{candidate_a}";
pub const CANDIDATE_B_PLACEHOLDER: &str = "{candidate_b}";

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot read pool {path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot parse pool {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid pool: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub id: u32,
    pub label: String,
    pub text: String,
}

/// Extraction questions for one component kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPool {
    pub kind: ComponentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub templates: Vec<Template>,
}

/// Yes/no validation questions, plus pairwise coreference questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorPool {
    pub kind: ComponentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub templates: Vec<Template>,
    #[serde(default)]
    pub coreference_templates: Vec<Template>,
}

fn check_ids(templates: &[Template], what: &str) -> Result<(), PoolError> {
    if templates.is_empty() {
        return Err(PoolError::Invalid(format!("{what} has no templates")));
    }
    for (i, t) in templates.iter().enumerate() {
        if t.id as usize != i + 1 {
            return Err(PoolError::Invalid(format!(
                "{what}: template ids must be 1..n in order, found {} at position {}",
                t.id,
                i + 1
            )));
        }
    }
    Ok(())
}

fn check_placeholder(t: &Template, token: &str, exactly_once: bool, what: &str) -> Result<(), PoolError> {
    let n = t.text.matches(token).count();
    let ok = if exactly_once { n == 1 } else { n >= 1 };
    if ok {
        Ok(())
    } else {
        Err(PoolError::Invalid(format!(
            "{what} template {} must contain {token} {}, found {n}",
            t.id,
            if exactly_once { "exactly once" } else { "at least once" }
        )))
    }
}

impl PromptPool {
    pub fn validate(&self) -> Result<(), PoolError> {
        let what = format!("{} extraction pool", self.kind);
        check_ids(&self.templates, &what)?;
        for t in &self.templates {
            check_placeholder(t, DOCUMENT_PLACEHOLDER, true, &what)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, PoolError> {
        let pool: Self = serde_json::from_str(text).map_err(|e| PoolError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PoolError> {
        let path = path.as_ref();
        Self::from_json(&read(path)?, &path.display().to_string())
    }

    /// The pool shipped with the crate.
    pub fn builtin(kind: ComponentKind) -> Self {
        let text = match kind {
            ComponentKind::Sensor => include_str!("../data/pools/sensor_extract.json"),
            ComponentKind::Controller => include_str!("../data/pools/controller_extract.json"),
            ComponentKind::Actuator => include_str!("../data/pools/actuator_extract.json"),
        };
        Self::from_json(text, "builtin").expect("builtin pool is valid")
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn system_text(&self) -> String {
        self.system.clone().unwrap_or_else(|| default_system(self.kind))
    }
}

impl ValidatorPool {
    pub fn validate(&self) -> Result<(), PoolError> {
        let what = format!("{} validator pool", self.kind);
        check_ids(&self.templates, &what)?;
        for t in &self.templates {
            check_placeholder(t, DOCUMENT_PLACEHOLDER, true, &what)?;
            check_placeholder(t, CANDIDATE_PLACEHOLDER, false, &what)?;
        }
        if !self.coreference_templates.is_empty() {
            let what = format!("{} coreference pool", self.kind);
            check_ids(&self.coreference_templates, &what)?;
            for t in &self.coreference_templates {
                check_placeholder(t, DOCUMENT_PLACEHOLDER, true, &what)?;
                check_placeholder(t, CANDIDATE_A_PLACEHOLDER, false, &what)?;
                check_placeholder(t, CANDIDATE_B_PLACEHOLDER, false, &what)?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, PoolError> {
        let pool: Self = serde_json::from_str(text).map_err(|e| PoolError::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PoolError> {
        let path = path.as_ref();
        Self::from_json(&read(path)?, &path.display().to_string())
    }

    pub fn builtin(kind: ComponentKind) -> Self {
        let text = match kind {
            ComponentKind::Sensor => include_str!("../data/pools/sensor_validate.json"),
            ComponentKind::Controller => include_str!("../data/pools/controller_validate.json"),
            ComponentKind::Actuator => include_str!("../data/pools/actuator_validate.json"),
        };
        Self::from_json(text, "builtin").expect("builtin pool is valid")
    }

    pub fn system_text(&self) -> String {
        self.system.clone().unwrap_or_else(|| default_system(self.kind))
    }
}

fn read(path: &Path) -> Result<String, PoolError> {
    fs::read_to_string(path).map_err(|e| PoolError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn default_system(kind: ComponentKind) -> String {
    format!(
        "You are a safety certification engineer performing a formal STPA hazard analysis. \
         You identify {} in technical system descriptions with regulatory-grade rigor and \
         rely only on the document you are given.",
        kind.plural()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_pools_are_valid_and_have_four_questions() {
        for kind in ComponentKind::ALL {
            let p = PromptPool::builtin(kind);
            assert_eq!(p.kind, kind);
            assert_eq!(p.len(), 4);
            let v = ValidatorPool::builtin(kind);
            assert_eq!(v.kind, kind);
            assert_eq!(v.templates.len(), 4);
            assert_eq!(v.coreference_templates.len(), 4);
        }
    }

    #[test]
    fn labels_are_distinct_within_a_pool() {
        for kind in ComponentKind::ALL {
            let p = PromptPool::builtin(kind);
            let mut labels: Vec<_> = p.templates.iter().map(|t| &t.label).collect();
            labels.sort();
            labels.dedup();
            assert_eq!(labels.len(), p.len());
        }
    }

    #[test]
    fn rejects_gapped_ids_and_bad_placeholders() {
        let gapped = r#"{"kind":"sensor","templates":[{"id":1,"label":"a","text":"{document}"},{"id":3,"label":"b","text":"{document}"}]}"#;
        assert!(matches!(PromptPool::from_json(gapped, "t"), Err(PoolError::Invalid(_))));
        let twice = r#"{"kind":"sensor","templates":[{"id":1,"label":"a","text":"{document} {document}"}]}"#;
        assert!(matches!(PromptPool::from_json(twice, "t"), Err(PoolError::Invalid(_))));
        let empty = r#"{"kind":"sensor","templates":[]}"#;
        assert!(matches!(PromptPool::from_json(empty, "t"), Err(PoolError::Invalid(_))));
        let no_candidate = r#"{"kind":"sensor","templates":[{"id":1,"label":"a","text":"{document}"}]}"#;
        assert!(matches!(ValidatorPool::from_json(no_candidate, "t"), Err(PoolError::Invalid(_))));
    }
}
