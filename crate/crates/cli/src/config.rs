//! Layered configuration: built-in defaults, then an optional TOML file,
//! then environment variables, then command-line flags.
//!
//! The API key is only ever read from the environment.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use spatialprompt_core::backend::{BackendConfig, BackendKind, ENV_API_KEY, ENV_BACKEND_URL};
use spatialprompt_core::{CompileParams, ValidatorParams};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBackend {
    kind: Option<BackendKind>,
    endpoint: Option<String>,
    poll_initial_secs: Option<f64>,
    poll_multiplier: Option<f64>,
    poll_cap_secs: Option<f64>,
    overall_timeout_secs: Option<f64>,
    max_retries: Option<u32>,
    retry_delay_secs: Option<f64>,
    request_timeout_secs: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCompile {
    resample_spacing: Option<f64>,
    epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileServe {
    listen: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    backend: FileBackend,
    #[serde(default)]
    compile: FileCompile,
    validator: Option<ValidatorParams>,
    #[serde(default)]
    serve: FileServe,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub backend: BackendConfig,
    pub compile: CompileParams,
    pub validator: ValidatorParams,
    pub listen: String,
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8787";

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::mock(),
            compile: CompileParams::default(),
            validator: ValidatorParams::default(),
            listen: DEFAULT_LISTEN.to_string(),
        }
    }
}

fn secs(v: f64, what: &str) -> Result<Duration, ConfigError> {
    Duration::try_from_secs_f64(v).map_err(|_| ConfigError::Invalid(format!("{what} must be a non-negative number of seconds")))
}

impl CliConfig {
    /// Defaults overlaid with `path` (if given) and the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = CliConfig::default();
        if let Some(path) = path {
            let shown = path.display().to_string();
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: shown.clone(), source })?;
            let file: FileConfig =
                toml::from_str(&text).map_err(|e| ConfigError::Parse { path: shown, message: e.to_string() })?;
            cfg.apply_file(file)?;
        }
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    fn apply_file(&mut self, f: FileConfig) -> Result<(), ConfigError> {
        let b = &mut self.backend;
        if let Some(k) = f.backend.kind {
            b.kind = k;
        }
        if f.backend.endpoint.is_some() {
            b.endpoint = f.backend.endpoint;
        }
        if let Some(v) = f.backend.poll_initial_secs {
            b.poll_initial = secs(v, "poll_initial_secs")?;
        }
        if let Some(v) = f.backend.poll_multiplier {
            b.poll_multiplier = v;
        }
        if let Some(v) = f.backend.poll_cap_secs {
            b.poll_cap = secs(v, "poll_cap_secs")?;
        }
        if let Some(v) = f.backend.overall_timeout_secs {
            b.overall_timeout = secs(v, "overall_timeout_secs")?;
        }
        if let Some(v) = f.backend.max_retries {
            b.max_retries = v;
        }
        if let Some(v) = f.backend.retry_delay_secs {
            b.retry_delay = secs(v, "retry_delay_secs")?;
        }
        if let Some(v) = f.backend.request_timeout_secs {
            b.request_timeout = secs(v, "request_timeout_secs")?;
        }
        if let Some(v) = f.compile.resample_spacing {
            self.compile.resample_spacing = v;
        }
        if f.compile.epsilon.is_some() {
            self.compile.epsilon = f.compile.epsilon;
        }
        if let Some(v) = f.validator {
            self.validator = v;
        }
        if let Some(v) = f.serve.listen {
            self.listen = v;
        }
        Ok(())
    }

    fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_BACKEND_URL).filter(|v| !v.is_empty()) {
            self.backend.endpoint = Some(url);
        }
        if let Some(key) = get(ENV_API_KEY).filter(|v| !v.is_empty()) {
            self.backend.api_key = Some(key);
        }
    }

    /// Checks that hold for every command.
    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.compile.resample_spacing > 0.0) || !self.compile.resample_spacing.is_finite() {
            return Err(ConfigError::Invalid("resample_spacing must be positive".into()));
        }
        if let Some(e) = self.compile.epsilon {
            if !(e > 0.0) || !e.is_finite() {
                return Err(ConfigError::Invalid("epsilon must be positive".into()));
            }
        }
        Ok(())
    }

    /// Checks for commands that talk to a backend.
    pub fn check_backend(&self) -> Result<(), ConfigError> {
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_file() {
        let mut cfg = CliConfig::default();
        let file: FileConfig = toml::from_str(
            r#"
            [backend]
            kind = "remote"
            endpoint = "http://file.example"
            overall_timeout_secs = 2.5
            [compile]
            epsilon = 0.02
            [validator]
            proportion_tolerance = 0.3
            "#,
        )
        .unwrap();
        cfg.apply_file(file).unwrap();
        assert_eq!(cfg.backend.endpoint.as_deref(), Some("http://file.example"));
        cfg.apply_env(|k| match k {
            ENV_BACKEND_URL => Some("http://env.example".into()),
            ENV_API_KEY => Some("k".into()),
            _ => None,
        });
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert_eq!(cfg.backend.endpoint.as_deref(), Some("http://env.example"));
        assert_eq!(cfg.backend.api_key.as_deref(), Some("k"));
        assert_eq!(cfg.backend.overall_timeout, Duration::from_millis(2500));
        assert_eq!(cfg.compile.epsilon, Some(0.02));
        assert_eq!(cfg.validator.proportion_tolerance, 0.3);
        assert_eq!(cfg.validator.containment_min_fraction, ValidatorParams::default().containment_min_fraction);
        assert!(cfg.check().is_ok());
        assert!(cfg.check_backend().is_ok());
    }

    #[test]
    fn api_key_cannot_come_from_file() {
        let r: Result<FileConfig, _> = toml::from_str("[backend]\napi_key = \"nope\"\n");
        assert!(r.is_err());
    }

    #[test]
    fn remote_without_key_is_invalid() {
        let mut cfg = CliConfig::default();
        cfg.backend.kind = BackendKind::Remote;
        cfg.backend.endpoint = Some("http://x".into());
        assert!(cfg.check().is_ok());
        assert!(cfg.check_backend().is_err());
    }
}
