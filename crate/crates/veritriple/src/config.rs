//! Layered runtime settings: defaults < config file < flags < environment.
//!
//! The config file is flat `key = value` text whose keys mirror the long
//! flag names (`sim-timeout = 20`). Environment overrides use the same keys
//! uppercased with a `VERITRIPLE_` prefix and `_` for `-`
//! (`VERITRIPLE_SIM_TIMEOUT=20`).

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::sim::{default_failure_patterns, ToolchainConfig};
use crate::teacher::TeacherConfig;

pub const ENV_PREFIX: &str = "VERITRIPLE_";

/// Every tunable key, in one place so the file parser, the env reader and
/// the manifest agree.
pub const KEYS: &[&str] = &[
    "compile-cmd",
    "run-cmd",
    "sim-timeout",
    "workspace-root",
    "keep-workspaces",
    "failure-patterns",
    "max-attempts",
    "workers",
    "endpoint",
    "model",
    "temperature",
    "max-reply-tokens",
    "request-timeout",
    "max-retries",
    "retry-backoff",
    "max-concurrent-requests",
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected \"key = value\"")]
    Malformed { path: PathBuf, line: usize },
    #[error("{path}:{line}: unknown key \"{key}\"")]
    UnknownKey {
        path: PathBuf,
        line: usize,
        key: String,
    },
    #[error("invalid value for {key}: \"{value}\" ({message})")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Resolved settings snapshot. Serializes into the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub compile_cmd: String,
    pub run_cmd: String,
    pub sim_timeout_secs: f64,
    pub workspace_root: PathBuf,
    pub keep_workspaces: bool,
    pub failure_patterns: Vec<String>,
    pub max_attempts: u32,
    pub workers: usize,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub retry_backoff_secs: f64,
    pub max_concurrent_requests: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let sim = ToolchainConfig::default();
        let teacher = TeacherConfig::default();
        Settings {
            compile_cmd: sim.compile_cmd,
            run_cmd: sim.run_cmd,
            sim_timeout_secs: sim.sim_timeout.as_secs_f64(),
            workspace_root: sim.workspace_root,
            keep_workspaces: false,
            failure_patterns: default_failure_patterns(),
            max_attempts: 5,
            workers: default_workers(),
            endpoint: teacher.endpoint_url,
            model: teacher.model_name,
            temperature: teacher.temperature,
            max_reply_tokens: teacher.max_reply_tokens,
            request_timeout_secs: teacher.request_timeout.as_secs_f64(),
            max_retries: teacher.max_retries,
            retry_backoff_secs: teacher.retry_backoff.as_secs_f64(),
            max_concurrent_requests: teacher.max_concurrent_requests,
        }
    }
}

/// Half the logical CPUs: every in-flight example owns a simulator process.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| (n.get() / 2).max(1))
        .unwrap_or(1)
}

impl Settings {
    /// Defaults, then the optional config file, then `flags`, then the
    /// environment. Later layers win.
    pub fn resolve(
        config_file: Option<&Path>,
        flags: &[(&str, String)],
    ) -> Result<Settings, ConfigError> {
        let mut settings = Settings::default();
        if let Some(path) = config_file {
            for (line_no, key, value) in parse_config_file(path)? {
                settings.set(&key, &value).map_err(|mut e| {
                    if let ConfigError::BadValue { key, .. } = &mut e {
                        *key = format!("{} (at {}:{line_no})", key, path.display());
                    }
                    e
                })?;
            }
        }
        for (key, value) in flags {
            settings.set(key, value)?;
        }
        for key in KEYS {
            let env_name = format!("{ENV_PREFIX}{}", key.replace('-', "_").to_uppercase());
            if let Ok(value) = std::env::var(&env_name) {
                settings.set(key, &value)?;
            }
        }
        Ok(settings)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |message: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            message: message.to_string(),
        };
        match key {
            "compile-cmd" => self.compile_cmd = value.to_string(),
            "run-cmd" => self.run_cmd = value.to_string(),
            "sim-timeout" => {
                self.sim_timeout_secs = value.parse().map_err(|_| bad("want seconds"))?
            }
            "workspace-root" => self.workspace_root = PathBuf::from(value),
            "keep-workspaces" => {
                self.keep_workspaces = value.parse().map_err(|_| bad("want true/false"))?
            }
            "failure-patterns" => {
                self.failure_patterns = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            }
            "max-attempts" => {
                self.max_attempts = value.parse().map_err(|_| bad("want a positive integer"))?;
                if self.max_attempts == 0 {
                    return Err(bad("must be at least 1"));
                }
            }
            "workers" => {
                self.workers = value.parse().map_err(|_| bad("want a positive integer"))?;
                if self.workers == 0 {
                    return Err(bad("must be at least 1"));
                }
            }
            "endpoint" => self.endpoint = value.to_string(),
            "model" => self.model = value.to_string(),
            "temperature" => {
                self.temperature = value.parse().map_err(|_| bad("want a number"))?;
                if self.temperature < 0.0 {
                    return Err(bad("must be >= 0"));
                }
            }
            "max-reply-tokens" => {
                self.max_reply_tokens = value.parse().map_err(|_| bad("want an integer"))?
            }
            "request-timeout" => {
                self.request_timeout_secs = value.parse().map_err(|_| bad("want seconds"))?
            }
            "max-retries" => {
                self.max_retries = value.parse().map_err(|_| bad("want an integer"))?
            }
            "retry-backoff" => {
                self.retry_backoff_secs = value.parse().map_err(|_| bad("want seconds"))?
            }
            "max-concurrent-requests" => {
                self.max_concurrent_requests =
                    value.parse().map_err(|_| bad("want a positive integer"))?;
                if self.max_concurrent_requests == 0 {
                    return Err(bad("must be at least 1"));
                }
            }
            other => {
                return Err(ConfigError::BadValue {
                    key: other.to_string(),
                    value: value.to_string(),
                    message: "unknown key".to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn toolchain(&self) -> ToolchainConfig {
        ToolchainConfig {
            compile_cmd: self.compile_cmd.clone(),
            run_cmd: self.run_cmd.clone(),
            sim_timeout: Duration::from_secs_f64(self.sim_timeout_secs),
            workspace_root: self.workspace_root.clone(),
            keep_workspaces: self.keep_workspaces,
            failure_patterns: self.failure_patterns.clone(),
        }
    }

    pub fn teacher(&self) -> TeacherConfig {
        TeacherConfig {
            endpoint_url: self.endpoint.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_reply_tokens: self.max_reply_tokens,
            request_timeout: Duration::from_secs_f64(self.request_timeout_secs),
            max_retries: self.max_retries,
            retry_backoff: Duration::from_secs_f64(self.retry_backoff_secs),
            max_concurrent_requests: self.max_concurrent_requests,
        }
    }
}

fn parse_config_file(path: &Path) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let contents = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut entries = Vec::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
            });
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                path: path.to_path_buf(),
                line: idx + 1,
                key,
            });
        }
        entries.push((idx + 1, key, value.trim().to_string()));
    }
    Ok(entries)
}
