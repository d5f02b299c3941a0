//! Gateway configuration.
//!
//! The file holds one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored. Keys: `listen`, `data_dir`, `key_bits`,
//! `session_ttl_secs`. The environment variables `ROLEGATE_LISTEN` and
//! `ROLEGATE_DATA_DIR` override the corresponding keys.

use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

pub const ENV_LISTEN: &str = "ROLEGATE_LISTEN";
pub const ENV_DATA_DIR: &str = "ROLEGATE_DATA_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewayConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Paillier modulus size for newly created tenants.
    pub key_bits: u64,
    pub session_ttl_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            data_dir: PathBuf::from("rolegate-data"),
            key_bits: 2048,
            session_ttl_secs: 60,
        }
    }
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Parse { line: i + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "listen" => cfg.listen = v.to_string(),
                "data_dir" => cfg.data_dir = PathBuf::from(v),
                "key_bits" => cfg.key_bits = v.parse().map_err(|_| err(format!("bad key_bits `{v}`")))?,
                "session_ttl_secs" => {
                    cfg.session_ttl_secs = v.parse().map_err(|_| err(format!("bad session_ttl_secs `{v}`")))?
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Applies `ROLEGATE_LISTEN` / `ROLEGATE_DATA_DIR` if set.
    pub fn with_env_overrides(mut self) -> Self {
        self.apply_overrides(std::env::var(ENV_LISTEN).ok(), std::env::var(ENV_DATA_DIR).ok());
        self
    }

    fn apply_overrides(&mut self, listen: Option<String>, data_dir: Option<String>) {
        if let Some(l) = listen.filter(|s| !s.is_empty()) {
            self.listen = l;
        }
        if let Some(d) = data_dir.filter(|s| !s.is_empty()) {
            self.data_dir = PathBuf::from(d);
        }
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
