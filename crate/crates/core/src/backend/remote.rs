//! Adapter for a Meshy-like REST service.
//!
//! Wire shape: `POST {base}/tasks` with `{prompt, seed, face_count}` returns
//! `{task_id}`; `GET {base}/tasks/{id}` returns `{state, progress,
//! asset_url?}`; the asset URL (absolute or relative to the base) serves OBJ.

use std::io::Read;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{BackendConfig, BackendError, Clock, GenerationBackend, TaskState, TaskStatus};
use crate::mesh::load_mesh_obj;
use crate::prompt::GenerationRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("{0}")]
    Network(String),
    #[error("response body exceeds {0} bytes")]
    TooLarge(usize),
}

/// Minimal blocking HTTP client.
pub trait HttpTransport: Send + Sync {
    /// Send a request; bodies longer than `max_body` fail with `TooLarge`.
    fn send(
        &self,
        method: &str,
        url: &str,
        headers: &[(&str, String)],
        body: Option<Vec<u8>>,
        max_body: usize,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(
        &self,
        method: &str,
        url: &str,
        headers: &[(&str, String)],
        body: Option<Vec<u8>>,
        max_body: usize,
    ) -> Result<HttpResponse, TransportError> {
        let method = reqwest::Method::from_bytes(method.as_bytes()).map_err(|e| TransportError::Network(e.to_string()))?;
        let mut rb = self.client.request(method, url);
        for (k, v) in headers {
            rb = rb.header(*k, v);
        }
        if let Some(b) = body {
            rb = rb.body(b);
        }
        let resp = rb.send().map_err(|e| TransportError::Network(e.to_string()))?;
        if resp.content_length().is_some_and(|n| n > max_body as u64) {
            return Err(TransportError::TooLarge(max_body));
        }
        let status = resp.status().as_u16();
        let mut out = Vec::new();
        resp.take(max_body as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if out.len() > max_body {
            return Err(TransportError::TooLarge(max_body));
        }
        Ok(HttpResponse { status, body: out })
    }
}

#[derive(Debug, Serialize)]
struct CreateTask<'a> {
    prompt: &'a str,
    seed: u64,
    face_count: u32,
}

#[derive(Debug, Deserialize)]
struct Created {
    task_id: String,
}

#[derive(Debug, Deserialize)]
struct PollBody {
    state: TaskState,
    #[serde(default)]
    progress: Option<u8>,
    #[serde(default)]
    asset_url: Option<String>,
    #[serde(default)]
    failure_reason: Option<String>,
}

/// JSON error bodies of small control requests are capped at this size.
const CONTROL_BODY_LIMIT: usize = 1 << 20;

pub struct RemoteBackend {
    config: BackendConfig,
    base: Url,
    transport: Box<dyn HttpTransport>,
    clock: Box<dyn Clock>,
}

impl RemoteBackend {
    /// Fails with a configuration error, before any network activity, when
    /// the key or endpoint is missing.
    pub fn new(
        config: BackendConfig,
        transport: Box<dyn HttpTransport>,
        clock: Box<dyn Clock>,
    ) -> Result<Self, BackendError> {
        let config = BackendConfig { kind: super::BackendKind::Remote, ..config };
        config.validate()?;
        let mut endpoint = config.endpoint.clone().unwrap_or_default();
        if !endpoint.ends_with('/') {
            endpoint.push('/');
        }
        let base = Url::parse(&endpoint).map_err(|e| BackendError::Config(format!("endpoint {endpoint:?}: {e}")))?;
        Ok(Self { config, base, transport, clock })
    }

    fn url(&self, path: &str) -> Result<Url, BackendError> {
        self.base.join(path).map_err(|e| BackendError::MalformedResponse(format!("url {path:?}: {e}")))
    }

    fn headers(&self) -> Vec<(&'static str, String)> {
        vec![
            ("authorization", format!("Bearer {}", self.config.api_key.as_deref().unwrap_or_default())),
            ("content-type", "application/json".to_string()),
        ]
    }

    /// One logical request: transport failures and 5xx responses are retried
    /// `max_retries` times; other non-2xx responses are rejected at once.
    fn request(&self, method: &str, url: &Url, body: Option<Vec<u8>>, max_body: usize) -> Result<Vec<u8>, BackendError> {
        let headers = self.headers();
        let mut last = BackendError::NetworkError("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                self.clock.sleep(self.config.retry_delay);
            }
            match self.transport.send(method, url.as_str(), &headers, body.clone(), max_body) {
                Ok(r) if (200..300).contains(&r.status) => return Ok(r.body),
                Ok(r) => {
                    let err = BackendError::BackendRejected {
                        status: r.status,
                        message: String::from_utf8_lossy(&r.body).chars().take(500).collect(),
                    };
                    if r.status < 500 {
                        return Err(err);
                    }
                    last = err;
                }
                Err(TransportError::TooLarge(limit)) => return Err(BackendError::AssetTooLarge { limit }),
                Err(TransportError::Network(m)) => last = BackendError::NetworkError(m),
            }
        }
        Err(last)
    }
}

fn valid_task_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
}

impl GenerationBackend for RemoteBackend {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn submit(&mut self, req: &GenerationRequest) -> Result<String, BackendError> {
        let prompt = req.backend_prompt();
        let body = serde_json::to_vec(&CreateTask { prompt: &prompt, seed: req.seed, face_count: req.target_face_count })
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let bytes = self.request("POST", &self.url("tasks")?, Some(body), CONTROL_BODY_LIMIT)?;
        let created: Created =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::MalformedResponse(format!("create task: {e}")))?;
        if !valid_task_id(&created.task_id) {
            return Err(BackendError::MalformedResponse(format!("task id {:?}", created.task_id)));
        }
        Ok(created.task_id)
    }

    fn poll(&mut self, task_id: &str) -> Result<TaskStatus, BackendError> {
        if !valid_task_id(task_id) {
            return Err(BackendError::UnknownTask(task_id.to_string()));
        }
        let bytes = self.request("GET", &self.url(&format!("tasks/{task_id}"))?, None, CONTROL_BODY_LIMIT)?;
        let body: PollBody =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::MalformedResponse(format!("poll: {e}")))?;
        let progress = body.progress.map(|p| p.min(100));
        match body.state {
            TaskState::Succeeded => {
                let asset_url = body
                    .asset_url
                    .ok_or_else(|| BackendError::MalformedResponse("succeeded without asset_url".into()))?;
                let url = self.url(&asset_url)?;
                let obj = self.request("GET", &url, None, self.config.max_asset_bytes)?;
                let mesh = load_mesh_obj(&obj).map_err(|e| BackendError::MalformedAsset(e.to_string()))?;
                if mesh.is_empty() {
                    return Err(BackendError::MalformedAsset("asset has no faces".into()));
                }
                Ok(TaskStatus { state: TaskState::Succeeded, progress: Some(100), failure_reason: None, asset: Some(mesh) })
            }
            TaskState::Failed => Ok(TaskStatus::failed(body.failure_reason.unwrap_or_else(|| "backend reported failure".into()))),
            state => Ok(TaskStatus { state, progress, failure_reason: None, asset: None }),
        }
    }
}
