//! Service configuration: a TOML file, then `CXR_*` environment overrides.
//!
//! | variable | field |
//! |---|---|
//! | `CXR_LISTEN` | `listen` |
//! | `CXR_DATA_DIR` | `data_dir` |
//! | `CXR_WORKERS` | `workers` |
//! | `CXR_MAX_UPLOAD_BYTES` | `max_upload_bytes` |
//! | `CXR_SNAPSHOT_EVERY` | `snapshot_every` |
//! | `CXR_DECISION_THRESHOLD` | `pipeline.decision_threshold` |
//! | `CXR_CRITICAL` | `pipeline.critical`, comma separated |
//! | `CXR_BACKEND` | `tiny` or `fixture` |
//! | `CXR_BACKEND_SEED` | seed of the tiny backend |
//! | `CXR_FIXTURE_PATH` | fixture file of the fixture backend |

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use cxr_core::backends::BackendDescriptor;
use cxr_core::labels::PathologyLabel;
use cxr_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "CXR_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Holds `blobs/`, `events.ndjson` and `snapshot.json`.
    pub data_dir: PathBuf,
    /// Concurrent pipeline runs.
    pub workers: usize,
    pub max_upload_bytes: usize,
    /// Compact the log after this many events.
    pub snapshot_every: u64,
    /// Attempts per study when the backend fails transiently.
    pub max_attempts: u32,
    pub backend: BackendDescriptor,
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("cxr-data"),
            workers: 2,
            max_upload_bytes: 64 << 20,
            snapshot_every: 1000,
            max_attempts: 3,
            backend: BackendDescriptor::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), applies overrides from `env`
    /// and validates.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        let mut backend_kind = None;
        let mut seed = None;
        let mut fixture = None;
        for (key, value) in env {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match name {
                "LISTEN" => self.listen = parse_num(&key, &value)?,
                "DATA_DIR" => self.data_dir = PathBuf::from(value),
                "WORKERS" => self.workers = parse_num(&key, &value)?,
                "MAX_UPLOAD_BYTES" => self.max_upload_bytes = parse_num(&key, &value)?,
                "SNAPSHOT_EVERY" => self.snapshot_every = parse_num(&key, &value)?,
                "MAX_ATTEMPTS" => self.max_attempts = parse_num(&key, &value)?,
                "DECISION_THRESHOLD" => self.pipeline.decision_threshold = parse_num(&key, &value)?,
                "CRITICAL" => {
                    self.pipeline.critical = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| PathologyLabel::resolve(s.trim()).map_err(|e| invalid(&key, e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "BACKEND" => backend_kind = Some(value),
                "BACKEND_SEED" => seed = Some(parse_num::<u64>(&key, &value)?),
                "FIXTURE_PATH" => fixture = Some(PathBuf::from(value)),
                _ => tracing::warn!(%key, "ignoring unknown configuration variable"),
            }
        }
        let kind = backend_kind.map(|k| k.trim().to_ascii_lowercase());
        match kind.as_deref() {
            None => {}
            Some("tiny") => {
                self.backend = BackendDescriptor::TinyReference {
                    name: "tiny".into(),
                    seed: 42,
                }
            }
            Some("fixture") => {
                self.backend = BackendDescriptor::Fixture {
                    name: "fixture".into(),
                    fixture_path: PathBuf::new(),
                }
            }
            Some(other) => return Err(invalid("CXR_BACKEND", format!("unknown backend {other:?}"))),
        }
        match &mut self.backend {
            BackendDescriptor::TinyReference { seed: s, .. } => {
                if let Some(v) = seed {
                    *s = v;
                }
            }
            BackendDescriptor::Fixture { fixture_path, .. } => {
                if let Some(p) = fixture {
                    *fixture_path = p;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.max_upload_bytes == 0 {
            return Err(invalid("max_upload_bytes", "must be positive"));
        }
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every", "must be positive"));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts", "must be at least 1"));
        }
        if let BackendDescriptor::Fixture { fixture_path, .. } = &self.backend {
            if fixture_path.as_os_str().is_empty() {
                return Err(invalid("backend.fixture_path", "required for the fixture backend"));
            }
        }
        self.pipeline.validate().map_err(|r| invalid("pipeline", r))
    }
}
