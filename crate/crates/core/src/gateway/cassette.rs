//! Record/replay of model traffic as JSON Lines cassettes.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{GatewayError, LanguageModel, ModelReply, Prompt};

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub fingerprint: String,
    pub prompt: Prompt,
    pub raw_text: String,
    pub backend_id: String,
}

/// Reads every record of a cassette. Blank lines are ignored.
pub fn read_cassette(path: impl AsRef<Path>) -> Result<Vec<CassetteRecord>, GatewayError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CassetteRecord = serde_json::from_str(&line).map_err(|e| {
            GatewayError::Cassette(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serves recorded replies by prompt fingerprint; never touches the network.
#[derive(Debug)]
pub struct ReplayBackend {
    replies: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::from_records(read_cassette(path)?))
    }

    /// The first record for a fingerprint wins.
    pub fn from_records(records: impl IntoIterator<Item = CassetteRecord>) -> Self {
        let mut replies = HashMap::new();
        for r in records {
            replies.entry(r.fingerprint).or_insert(r.raw_text);
        }
        ReplayBackend { replies }
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl LanguageModel for ReplayBackend {
    fn backend_id(&self) -> &str {
        "replay"
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        prompt.validate()?;
        let fingerprint = prompt.fingerprint();
        match self.replies.get(&fingerprint) {
            Some(raw) => Ok(ModelReply {
                raw_text: raw.clone(),
                backend_id: self.backend_id().to_string(),
                latency_ms: 0,
                request_fingerprint: fingerprint,
            }),
            None => Err(GatewayError::CassetteMiss { fingerprint }),
        }
    }
}

struct RecorderState {
    file: File,
    seen: HashSet<String>,
}

/// Wraps a backend and appends every successful exchange to a cassette.
/// A fingerprint already present in the file is not written twice.
pub struct Recorder<M> {
    inner: M,
    path: PathBuf,
    state: Mutex<RecorderState>,
}

impl<M: LanguageModel> Recorder<M> {
    pub fn new(inner: M, path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let seen = if path.exists() {
            read_cassette(&path)?
                .into_iter()
                .map(|r| r.fingerprint)
                .collect()
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Recorder {
            inner,
            path,
            state: Mutex::new(RecorderState { file, seen }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: LanguageModel> LanguageModel for Recorder<M> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn send(&self, prompt: &Prompt) -> Result<ModelReply, GatewayError> {
        let started = Instant::now();
        let mut reply = self.inner.send(prompt)?;
        let record = CassetteRecord {
            fingerprint: reply.request_fingerprint.clone(),
            prompt: prompt.clone(),
            raw_text: reply.raw_text.clone(),
            backend_id: reply.backend_id.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut state = self.state.lock().expect("recorder poisoned");
        if state.seen.insert(record.fingerprint) {
            state
                .file
                .write_all(line.as_bytes())
                .and_then(|_| state.file.flush())
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", self.path.display())))?;
        }
        reply.latency_ms = reply.latency_ms.max(started.elapsed().as_millis() as u64);
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, RequestSettings};

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mock = MockBackend::with_responder(|p| Ok(format!("echo: {}\n\"quoted\" ✓", p.user_text)));
        let recorder = Recorder::new(mock, &path).unwrap();
        let s = RequestSettings::default();
        let prompts: Vec<_> = (0..5).map(|i| s.prompt("sys", format!("q{i}"))).collect();
        let recorded: Vec<_> = prompts.iter().map(|p| recorder.send(p).unwrap().raw_text).collect();
        // repeat request is not re-appended
        recorder.send(&prompts[0]).unwrap();
        drop(recorder);
        assert_eq!(read_cassette(&path).unwrap().len(), 5);

        let replay = ReplayBackend::open(&path).unwrap();
        for (p, want) in prompts.iter().zip(&recorded) {
            assert_eq!(&replay.send(p).unwrap().raw_text, want);
            assert_eq!(&replay.send(p).unwrap().raw_text, want);
        }
    }

    #[test]
    fn unknown_prompt_is_a_cassette_miss() {
        let replay = ReplayBackend::from_records(Vec::new());
        let err = replay.send(&RequestSettings::default().prompt("", "never")).unwrap_err();
        assert!(matches!(err, GatewayError::CassetteMiss { .. }));
    }

    #[test]
    fn recorder_appends_to_existing_cassette() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let s = RequestSettings::default();
        for q in ["a", "b"] {
            let rec = Recorder::new(MockBackend::with_responder(|_| Ok("ok".into())), &path).unwrap();
            rec.send(&s.prompt("", q)).unwrap();
            rec.send(&s.prompt("", "shared")).unwrap();
        }
        let records = read_cassette(&path).unwrap();
        let users: Vec<_> = records.iter().map(|r| r.prompt.user_text.as_str()).collect();
        assert_eq!(users, ["a", "shared", "b"]);
    }

    #[test]
    fn malformed_cassette_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(ReplayBackend::open(&path), Err(GatewayError::Cassette(_))));
    }
}
