//! Generation backends: a deterministic procedural mock and a remote
//! text-to-3D adapter whose output is similarity-fitted into the sketch bounds.

mod clock;
mod fit;
pub mod mock;
pub mod remote;
pub mod stub;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use clock::{Clock, FakeClock, SystemClock};
pub use fit::{enforce_fit, FitOutcome, FitReport};
pub use mock::{mock_generate, MockBackend};
pub use remote::{HttpResponse, HttpTransport, RemoteBackend, ReqwestTransport, TransportError};

use crate::mesh::TriangleMesh;
use crate::prompt::GenerationRequest;

pub const ENV_API_KEY: &str = "SPATIALPROMPT_API_KEY";
pub const ENV_BACKEND_URL: &str = "SPATIALPROMPT_BACKEND_URL";
pub const MAX_ASSET_BYTES: usize = 10 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("Timeout: task did not finish within {0:?}")]
    Timeout(Duration),
    #[error("BackendRejected: HTTP {status}: {message}")]
    BackendRejected { status: u16, message: String },
    #[error("NetworkError: {0}")]
    NetworkError(String),
    #[error("MalformedResponse: {0}")]
    MalformedResponse(String),
    #[error("MalformedAsset: {0}")]
    MalformedAsset(String),
    #[error("AssetTooLarge: asset exceeds {limit} bytes")]
    AssetTooLarge { limit: usize },
    #[error("TaskFailed: {0}")]
    TaskFailed(String),
    #[error("UnknownTask: {0}")]
    UnknownTask(String),
    #[error("EmptyConstraintSet: nothing to generate")]
    EmptyConstraintSet,
    #[error("DegenerateMesh: {0}")]
    DegenerateMesh(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Config(_) => "ConfigError",
            BackendError::Timeout(_) => "Timeout",
            BackendError::BackendRejected { .. } => "BackendRejected",
            BackendError::NetworkError(_) => "NetworkError",
            BackendError::MalformedResponse(_) => "MalformedResponse",
            BackendError::MalformedAsset(_) => "MalformedAsset",
            BackendError::AssetTooLarge { .. } => "AssetTooLarge",
            BackendError::TaskFailed(_) => "TaskFailed",
            BackendError::UnknownTask(_) => "UnknownTask",
            BackendError::EmptyConstraintSet => "EmptyConstraintSet",
            BackendError::DegenerateMesh(_) => "DegenerateMesh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    #[serde(alias = "PENDING")]
    Pending,
    #[serde(alias = "IN_PROGRESS", alias = "RUNNING")]
    Running,
    #[serde(alias = "SUCCEEDED")]
    Succeeded,
    #[serde(alias = "FAILED")]
    Failed,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Succeeded | TaskState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStatus {
    pub state: TaskState,
    pub progress: Option<u8>,
    pub failure_reason: Option<String>,
    /// Present exactly when `state` is `Succeeded`.
    pub asset: Option<TriangleMesh>,
}

impl TaskStatus {
    pub fn failed(reason: impl Into<String>) -> Self {
        Self { state: TaskState::Failed, progress: None, failure_reason: Some(reason.into()), asset: None }
    }
}

pub const TIMEOUT_REASON: &str = "Timeout";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub poll_initial: Duration,
    pub poll_multiplier: f64,
    pub poll_cap: Duration,
    pub overall_timeout: Duration,
    /// Extra attempts after a transport failure or 5xx response.
    pub max_retries: u32,
    pub retry_delay: Duration,
    pub request_timeout: Duration,
    pub max_asset_bytes: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            api_key: None,
            poll_initial: Duration::from_secs(2),
            poll_multiplier: 1.5,
            poll_cap: Duration::from_secs(15),
            overall_timeout: Duration::from_secs(300),
            max_retries: 3,
            retry_delay: Duration::from_millis(500),
            request_timeout: Duration::from_secs(30),
            max_asset_bytes: MAX_ASSET_BYTES,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn remote(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self { kind: BackendKind::Remote, endpoint: Some(endpoint.into()), api_key: Some(api_key.into()), ..Self::default() }
    }

    /// Fill `endpoint` and `api_key` from the environment where unset.
    pub fn with_env(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        }
        if self.endpoint.is_none() {
            self.endpoint = std::env::var(ENV_BACKEND_URL).ok().filter(|k| !k.is_empty());
        }
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::Config(m.into()));
        if self.poll_initial.is_zero() || self.poll_cap.is_zero() || self.overall_timeout.is_zero() {
            return bad("poll intervals and timeout must be positive");
        }
        if !(self.poll_multiplier > 1.0) {
            return bad("poll multiplier must exceed 1");
        }
        if self.kind == BackendKind::Remote {
            if self.api_key.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::Config(format!("remote backend needs an API key ({ENV_API_KEY})")));
            }
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::Config(format!("remote backend needs an endpoint ({ENV_BACKEND_URL})")));
            }
        }
        Ok(())
    }

    /// Successive poll waits: initial, then ×multiplier, capped.
    pub fn poll_intervals(&self) -> impl Iterator<Item = Duration> + '_ {
        std::iter::successors(Some(self.poll_initial), move |d| {
            Some(d.mul_f64(self.poll_multiplier).min(self.poll_cap))
        })
    }
}

pub trait GenerationBackend {
    fn kind(&self) -> &'static str;
    fn submit(&mut self, req: &GenerationRequest) -> Result<String, BackendError>;
    fn poll(&mut self, task_id: &str) -> Result<TaskStatus, BackendError>;
}

/// Poll `task_id` until it finishes, waiting per the backoff schedule.
///
/// Polls once immediately. Waits are clipped to the remaining budget; when
/// the budget runs out the result is `Failed` with reason [`TIMEOUT_REASON`].
pub fn poll_until_done(
    backend: &mut dyn GenerationBackend,
    task_id: &str,
    config: &BackendConfig,
    clock: &dyn Clock,
) -> Result<TaskStatus, BackendError> {
    let start = clock.elapsed();
    let mut intervals = config.poll_intervals();
    loop {
        let status = backend.poll(task_id)?;
        if status.state.is_terminal() {
            return Ok(status);
        }
        let spent = clock.elapsed().saturating_sub(start);
        if spent >= config.overall_timeout {
            return Ok(TaskStatus::failed(TIMEOUT_REASON));
        }
        let wait = intervals.next().unwrap_or(config.poll_cap);
        clock.sleep(wait.min(config.overall_timeout - spent));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub backend: String,
    pub elapsed_ms: u64,
    pub task_id: String,
    pub enforced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub mesh: TriangleMesh,
    pub metadata: GenerationMetadata,
}

/// Submit, poll to completion and, for remote backends, fit the asset into
/// the global box.
pub fn generate_with(
    req: &GenerationRequest,
    backend: &mut dyn GenerationBackend,
    config: &BackendConfig,
    clock: &dyn Clock,
) -> Result<GenerationOutput, BackendError> {
    config.validate()?;
    let started = Instant::now();
    let task_id = backend.submit(req)?;
    let status = poll_until_done(backend, &task_id, config, clock)?;
    let mesh = match status.state {
        TaskState::Succeeded => status.asset.ok_or_else(|| BackendError::MalformedAsset("no asset".into()))?,
        _ => {
            let reason = status.failure_reason.unwrap_or_else(|| "unspecified".into());
            return Err(if reason == TIMEOUT_REASON {
                BackendError::Timeout(config.overall_timeout)
            } else {
                BackendError::TaskFailed(reason)
            });
        }
    };
    let (mesh, fit) = if backend.kind() == "mock" {
        (mesh, None)
    } else {
        let out = enforce_fit(&mesh, &req.constraint_set.global_box)?;
        (out.mesh, Some(out.report))
    };
    Ok(GenerationOutput {
        mesh,
        metadata: GenerationMetadata {
            backend: backend.kind().to_string(),
            elapsed_ms: started.elapsed().as_millis() as u64,
            task_id,
            enforced: fit.is_some(),
            fit,
        },
    })
}

/// [`generate_with`] using the backend named by `config` and the system clock.
pub fn generate(req: &GenerationRequest, config: &BackendConfig) -> Result<GenerationOutput, BackendError> {
    config.validate()?;
    let clock = SystemClock::new();
    match config.kind {
        BackendKind::Mock => generate_with(req, &mut MockBackend::new(), config, &clock),
        BackendKind::Remote => {
            let transport = ReqwestTransport::new(config.request_timeout)?;
            let mut backend = RemoteBackend::new(config.clone(), Box::new(transport), Box::new(clock.clone()))?;
            generate_with(req, &mut backend, config, &clock)
        }
    }
}
