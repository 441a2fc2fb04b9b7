//! Pipeline configuration: a TOML file overlaid with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::RequestSettings;
use crate::kind::ComponentKind;
use crate::pools::{PoolError, PromptPool, ValidatorPool};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
    Replay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
            BackendKind::Replay => "replay",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            other => Err(format!("unknown backend {other:?} (expected http, mock or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendKind,
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub m_e: usize,
    /// 0 skips validation.
    pub m_v: usize,
    pub selection_seed: u64,
    pub concurrency_limit: usize,
    pub scenario_generation: bool,
    pub prompt_pool_paths: BTreeMap<ComponentKind, PathBuf>,
    pub validator_pool_paths: BTreeMap<ComponentKind, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cassette_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let request = RequestSettings::default();
        PipelineConfig {
            backend: BackendKind::Http,
            base_url: "https://openrouter.ai/api/v1".into(),
            model_name: request.model_name,
            temperature: request.temperature,
            max_output_tokens: request.max_output_tokens,
            m_e: 4,
            m_v: 4,
            selection_seed: 0,
            concurrency_limit: 4,
            scenario_generation: false,
            prompt_pool_paths: BTreeMap::new(),
            validator_pool_paths: BTreeMap::new(),
            cassette_path: None,
            mock_script: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        cfg.prompt_pool_paths.values_mut().for_each(fix);
        cfg.validator_pool_paths.values_mut().for_each(fix);
        if let Some(p) = cfg.cassette_path.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.mock_script.as_mut() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn request_settings(&self) -> RequestSettings {
        RequestSettings {
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    /// `q{m_e}v{m_v}`, mirroring the extraction/validation table rows.
    pub fn stage_label(&self) -> String {
        stage_label(self.m_e, self.m_v)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.m_e == 0 {
            return bad("m_e must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        if self.concurrency_limit == 0 {
            return bad("concurrency_limit must be positive".into());
        }
        if self.backend == BackendKind::Replay && self.cassette_path.is_none() {
            return bad("the replay backend needs a cassette path".into());
        }
        if self.backend == BackendKind::Mock && self.mock_script.is_none() {
            return bad("the mock backend needs a mock script".into());
        }
        Ok(())
    }
}

pub fn stage_label(m_e: usize, m_v: usize) -> String {
    format!("q{m_e}v{m_v}")
}

/// Extraction and validator pools for all three kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSet {
    pub extract: BTreeMap<ComponentKind, PromptPool>,
    pub validate: BTreeMap<ComponentKind, ValidatorPool>,
}

impl PoolSet {
    pub fn builtin() -> Self {
        PoolSet {
            extract: ComponentKind::ALL.into_iter().map(|k| (k, PromptPool::builtin(k))).collect(),
            validate: ComponentKind::ALL.into_iter().map(|k| (k, ValidatorPool::builtin(k))).collect(),
        }
    }

    /// Builtin pools, replaced per kind by any configured file.
    pub fn load(config: &PipelineConfig) -> Result<Self, ConfigError> {
        let mut set = Self::builtin();
        for (kind, path) in &config.prompt_pool_paths {
            let pool = PromptPool::load(path)?;
            if pool.kind != *kind {
                return Err(ConfigError::Invalid(format!(
                    "{} holds a {} pool, configured as {kind}",
                    path.display(),
                    pool.kind
                )));
            }
            set.extract.insert(*kind, pool);
        }
        for (kind, path) in &config.validator_pool_paths {
            let pool = ValidatorPool::load(path)?;
            if pool.kind != *kind {
                return Err(ConfigError::Invalid(format!(
                    "{} holds a {} pool, configured as {kind}",
                    path.display(),
                    pool.kind
                )));
            }
            set.validate.insert(*kind, pool);
        }
        set.check(config.m_e, config.m_v)?;
        Ok(set)
    }

    pub fn check(&self, m_e: usize, m_v: usize) -> Result<(), ConfigError> {
        for (kind, pool) in &self.extract {
            if m_e == 0 || m_e > pool.len() {
                return Err(ConfigError::Invalid(format!(
                    "m_e = {m_e} but the {kind} extraction pool has {} templates",
                    pool.len()
                )));
            }
        }
        if m_v > 0 {
            for (kind, pool) in &self.validate {
                if m_v > pool.templates.len() {
                    return Err(ConfigError::Invalid(format!(
                        "m_v = {m_v} but the {kind} validator pool has {} templates",
                        pool.templates.len()
                    )));
                }
                if !pool.coreference_templates.is_empty() && m_v > pool.coreference_templates.len() {
                    return Err(ConfigError::Invalid(format!(
                        "m_v = {m_v} but the {kind} coreference pool has {} templates",
                        pool.coreference_templates.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn extraction(&self, kind: ComponentKind) -> &PromptPool {
        &self.extract[&kind]
    }

    pub fn validator(&self, kind: ComponentKind) -> &ValidatorPool {
        &self.validate[&kind]
    }
}
