//! Local HTTP stub of the remote generation service, for tests and demos.
//!
//! Serves one request per connection on a loopback port from a background
//! thread. Shut down by dropping the [`StubServer`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubBehavior {
    /// Report `running` for `pending_polls` polls, then serve `obj`.
    Succeed { pending_polls: u32, obj: Vec<u8> },
    /// Answer every request with this status.
    AlwaysStatus(u16),
    /// Tasks stay `running` forever.
    NeverComplete,
    /// Succeed immediately with an asset of this many bytes.
    Oversized { bytes: usize },
    /// Tasks end in `failed` with this reason.
    Fail { reason: String },
}

struct Shared {
    behavior: StubBehavior,
    api_key: Option<String>,
    polls: Mutex<HashMap<String, u32>>,
    next_task: AtomicUsize,
    log: Mutex<Vec<String>>,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(behavior: StubBehavior) -> std::io::Result<Self> {
        Self::start_with_key(behavior, None)
    }

    /// Like [`StubServer::start`], answering 401 unless the bearer token matches.
    pub fn start_with_key(behavior: StubBehavior, api_key: Option<String>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            behavior,
            api_key,
            polls: Mutex::new(HashMap::new()),
            next_task: AtomicUsize::new(1),
            log: Mutex::new(Vec::new()),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let shared = shared.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = conn {
                        let shared = shared.clone();
                        std::thread::spawn(move || {
                            let _ = serve(stream, &shared);
                        });
                    }
                }
            })
        };
        Ok(Self { addr, shared, stop, thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// `"METHOD /path"` of every request received so far.
    pub fn requests(&self) -> Vec<String> {
        self.shared.log.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

struct Request {
    method: String,
    path: String,
    headers: HashMap<String, String>,
}

fn read_request(stream: &TcpStream) -> std::io::Result<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = HashMap::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok(Request { method, path, headers })
}

fn respond(mut stream: &TcpStream, status: u16, content_type: &str, body: &[u8]) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        _ => "Status",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\ncontent-type: {content_type}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn json(stream: &TcpStream, status: u16, value: serde_json::Value) -> std::io::Result<()> {
    respond(stream, status, "application/json", value.to_string().as_bytes())
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let req = read_request(&stream)?;
    shared.log.lock().unwrap().push(format!("{} {}", req.method, req.path));
    if let StubBehavior::AlwaysStatus(code) = shared.behavior {
        return json(&stream, code, serde_json::json!({"message": "stub failure"}));
    }
    if let Some(key) = &shared.api_key {
        if req.headers.get("authorization") != Some(&format!("Bearer {key}")) {
            return json(&stream, 401, serde_json::json!({"message": "bad credentials"}));
        }
    }
    let segments: Vec<&str> = req.path.trim_start_matches('/').split('/').collect();
    match (req.method.as_str(), segments.as_slice()) {
        ("POST", ["tasks"]) => {
            let id = format!("task-{}", shared.next_task.fetch_add(1, Ordering::SeqCst));
            shared.polls.lock().unwrap().insert(id.clone(), 0);
            json(&stream, 200, serde_json::json!({ "task_id": id }))
        }
        ("GET", ["tasks", id]) => {
            let polls = {
                let mut map = shared.polls.lock().unwrap();
                let Some(n) = map.get_mut(*id) else {
                    return json(&stream, 404, serde_json::json!({"message": "unknown task"}));
                };
                *n += 1;
                *n
            };
            let asset = format!("/assets/{id}.obj");
            let body = match &shared.behavior {
                StubBehavior::Succeed { pending_polls, .. } if polls <= *pending_polls => {
                    serde_json::json!({"state": "IN_PROGRESS", "progress": 100 * polls / (pending_polls + 1)})
                }
                StubBehavior::Succeed { .. } | StubBehavior::Oversized { .. } => {
                    serde_json::json!({"state": "SUCCEEDED", "progress": 100, "asset_url": asset})
                }
                StubBehavior::Fail { reason } => serde_json::json!({"state": "FAILED", "failure_reason": reason}),
                _ => serde_json::json!({"state": "IN_PROGRESS", "progress": 50}),
            };
            json(&stream, 200, body)
        }
        ("GET", ["assets", _]) => match &shared.behavior {
            StubBehavior::Succeed { obj, .. } => respond(&stream, 200, "text/plain", obj),
            StubBehavior::Oversized { bytes } => {
                let chunk = b"v 0 0 0\n";
                let mut body = chunk.repeat(bytes / chunk.len() + 1);
                body.truncate(*bytes);
                respond(&stream, 200, "text/plain", &body)
            }
            _ => json(&stream, 404, serde_json::json!({"message": "no asset"})),
        },
        _ => json(&stream, 404, serde_json::json!({"message": "not found"})),
    }
}
