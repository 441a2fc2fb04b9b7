//! Documents, dataset manifests and ground-truth annotations.
//!
//! Every on-disk input the pipeline reads is defined here. Values are
//! immutable after load and can be shared freely across worker threads.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kind::ComponentKind;
use crate::text::normalize_name;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },
    #[error("{path} is empty")]
    EmptyDocument { path: PathBuf },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invariant violated in {path}: {message}")]
    InvariantViolation { path: PathBuf, message: String },
}

/// A system description under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source_path: PathBuf,
}

impl Document {
    /// Builds a document from in-memory text. The body is newline-normalized.
    pub fn from_text(id: impl Into<String>, title: impl Into<String>, body: &str) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            body: normalize_newlines(body),
            source_path: PathBuf::new(),
        }
    }
}

/// Converts CRLF and lone CR line endings to LF.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|_| CorpusError::Encoding {
        path: path.to_path_buf(),
    })
}

/// Loads a plain-text document. The id defaults to the file stem and the
/// title to the first non-empty line.
pub fn load_document(path: impl AsRef<Path>) -> Result<Document, CorpusError> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_document_with_id(path, &id)
}

pub fn load_document_with_id(path: impl AsRef<Path>, id: &str) -> Result<Document, CorpusError> {
    let path = path.as_ref();
    let body = normalize_newlines(&read_text(path)?);
    if body.trim().is_empty() {
        return Err(CorpusError::EmptyDocument {
            path: path.to_path_buf(),
        });
    }
    if id.is_empty() {
        return Err(CorpusError::InvariantViolation {
            path: path.to_path_buf(),
            message: "document id is empty".into(),
        });
    }
    let title = body
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or_default()
        .to_string();
    Ok(Document {
        id: id.to_string(),
        title,
        body,
        source_path: path.to_path_buf(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub canonical: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl GoldEntity {
    /// Normalized alias set, always including the canonical name.
    pub fn normalized_aliases(&self) -> HashSet<String> {
        std::iter::once(&self.canonical)
            .chain(self.aliases.iter())
            .map(|a| normalize_name(a))
            .filter(|a| !a.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub doc_id: String,
    #[serde(default)]
    pub sensors: Vec<GoldEntity>,
    #[serde(default)]
    pub controllers: Vec<GoldEntity>,
    #[serde(default)]
    pub actuators: Vec<GoldEntity>,
}

impl GroundTruth {
    pub fn entities(&self, kind: ComponentKind) -> &[GoldEntity] {
        match kind {
            ComponentKind::Sensor => &self.sensors,
            ComponentKind::Controller => &self.controllers,
            ComponentKind::Actuator => &self.actuators,
        }
    }

    fn check(&mut self, path: &Path) -> Result<(), CorpusError> {
        for kind in ComponentKind::ALL {
            let entities = match kind {
                ComponentKind::Sensor => &mut self.sensors,
                ComponentKind::Controller => &mut self.controllers,
                ComponentKind::Actuator => &mut self.actuators,
            };
            let mut owner: BTreeMap<String, String> = BTreeMap::new();
            for entity in entities.iter_mut() {
                if normalize_name(&entity.canonical).is_empty() {
                    return Err(CorpusError::InvariantViolation {
                        path: path.to_path_buf(),
                        message: format!("{kind} with empty canonical name"),
                    });
                }
                let canonical_norm = normalize_name(&entity.canonical);
                if !entity
                    .aliases
                    .iter()
                    .any(|a| normalize_name(a) == canonical_norm)
                {
                    entity.aliases.insert(0, entity.canonical.clone());
                }
                for alias in entity.normalized_aliases() {
                    if let Some(prev) = owner.insert(alias.clone(), entity.canonical.clone()) {
                        return Err(CorpusError::InvariantViolation {
                            path: path.to_path_buf(),
                            message: format!(
                                "alias {alias:?} belongs to both {prev:?} and {:?}",
                                entity.canonical
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses ground truth from JSON text. Missing kinds default to empty.
pub fn parse_ground_truth(text: &str, path: &Path) -> Result<GroundTruth, CorpusError> {
    let mut gt: GroundTruth = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    gt.check(path)?;
    Ok(gt)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth, CorpusError> {
    let path = path.as_ref();
    parse_ground_truth(&read_text(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub document: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub entries: Vec<ManifestEntry>,
}

/// A loaded dataset entry: the document and its annotations, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub document: Document,
    pub ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub items: Vec<DatasetItem>,
}

/// Loads a manifest and everything it references. Relative paths resolve
/// against the manifest's directory; entries keep file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let manifest: DatasetManifest =
        serde_json::from_str(&read_text(path)?).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        if !seen.insert(entry.doc_id.clone()) {
            return Err(CorpusError::InvariantViolation {
                path: path.to_path_buf(),
                message: format!("duplicate doc_id {:?}", entry.doc_id),
            });
        }
        let document = load_document_with_id(resolve(&entry.document), &entry.doc_id)?;
        let ground_truth = match &entry.ground_truth {
            Some(gt_path) => {
                let gt_path = resolve(gt_path);
                let gt = load_ground_truth(&gt_path)?;
                if gt.doc_id != entry.doc_id {
                    return Err(CorpusError::InvariantViolation {
                        path: gt_path,
                        message: format!(
                            "ground truth doc_id {:?} does not match manifest entry {:?}",
                            gt.doc_id, entry.doc_id
                        ),
                    });
                }
                Some(gt)
            }
            None => None,
        };
        items.push(DatasetItem {
            document,
            ground_truth,
        });
    }
    Ok(Dataset {
        name: manifest.dataset_name,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn loads_plain_document() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "pump.txt",
            b"Pump system.\nA pressure sensor feeds a PLC.",
        );
        let doc = load_document(&p).unwrap();
        assert_eq!(doc.id, "pump");
        assert_eq!(doc.title, "Pump system.");
        assert!(doc.body.contains("Pump system."));
        assert!(doc.body.contains("A pressure sensor feeds a PLC."));
    }

    #[test]
    fn empty_document_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "empty.txt", b"");
        assert!(matches!(
            load_document(&p),
            Err(CorpusError::EmptyDocument { .. })
        ));
    }

    #[test]
    fn crlf_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "crlf.txt", b"line one\r\nline two\r\nthree\rfour");
        let doc = load_document(&p).unwrap();
        assert!(!doc.body.contains('\r'));
        assert_eq!(doc.body, "line one\nline two\nthree\nfour");
    }

    #[test]
    fn invalid_utf8_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.txt", &[0xff, 0xfe, 0x41]);
        assert!(matches!(load_document(&p), Err(CorpusError::Encoding { .. })));
        assert!(matches!(
            load_document(dir.path().join("nope.txt")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn ground_truth_parses_aliases() {
        let text = r#"{"doc_id":"d","sensors":[{"canonical":"pressure sensor","aliases":["pressure sensor","PT-101"]}],"controllers":[],"actuators":[]}"#;
        let gt = parse_ground_truth(text, Path::new("gt.json")).unwrap();
        assert_eq!(gt.sensors.len(), 1);
        assert_eq!(gt.sensors[0].aliases.len(), 2);
    }

    #[test]
    fn canonical_is_added_to_aliases() {
        let text = r#"{"doc_id":"d","actuators":[{"canonical":"Valve","aliases":["XV-1"]}]}"#;
        let gt = parse_ground_truth(text, Path::new("gt.json")).unwrap();
        assert!(gt.actuators[0].normalized_aliases().contains("valve"));
        assert_eq!(gt.actuators[0].aliases, vec!["Valve", "XV-1"]);
    }

    #[test]
    fn shared_alias_is_an_invariant_violation() {
        let text = r#"{"doc_id":"d","sensors":[
            {"canonical":"pressure sensor","aliases":["PT-101"]},
            {"canonical":"flow sensor","aliases":["PT-101"]}]}"#;
        assert!(matches!(
            parse_ground_truth(text, Path::new("gt.json")),
            Err(CorpusError::InvariantViolation { .. })
        ));
    }

    #[test]
    fn absent_kinds_default_to_empty() {
        let text = r#"{"doc_id":"d","sensors":[{"canonical":"radar","aliases":[]}],"actuators":[]}"#;
        let gt = parse_ground_truth(text, Path::new("gt.json")).unwrap();
        assert!(gt.controllers.is_empty());
    }

    #[test]
    fn manifest_load_is_ordered_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.txt", b"Second doc body.");
        write(dir.path(), "a.txt", b"First doc body.");
        write(
            dir.path(),
            "a.gt.json",
            br#"{"doc_id":"zeta","sensors":[{"canonical":"s","aliases":[]}]}"#,
        );
        let m = write(
            dir.path(),
            "manifest.json",
            br#"{"dataset_name":"t","entries":[
                {"doc_id":"zeta","document":"a.txt","ground_truth":"a.gt.json"},
                {"doc_id":"alpha","document":"b.txt"}]}"#,
        );
        let first = load_manifest(&m).unwrap();
        let ids: Vec<_> = first.items.iter().map(|i| i.document.id.as_str()).collect();
        assert_eq!(ids, ["zeta", "alpha"]);
        assert!(first.items[0].ground_truth.is_some());
        assert!(first.items[1].ground_truth.is_none());
        assert_eq!(first, load_manifest(&m).unwrap());
    }

    #[test]
    fn manifest_rejects_duplicate_ids_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.txt", b"body");
        let dup = write(
            dir.path(),
            "dup.json",
            br#"{"dataset_name":"t","entries":[{"doc_id":"x","document":"a.txt"},{"doc_id":"x","document":"a.txt"}]}"#,
        );
        assert!(matches!(
            load_manifest(&dup),
            Err(CorpusError::InvariantViolation { .. })
        ));
        let missing = write(
            dir.path(),
            "missing.json",
            br#"{"dataset_name":"t","entries":[{"doc_id":"x","document":"nope.txt"}]}"#,
        );
        assert!(matches!(load_manifest(&missing), Err(CorpusError::Io { .. })));
    }
}
