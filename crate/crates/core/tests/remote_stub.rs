use std::time::Duration;

use spatialprompt_core::backend::stub::{StubBehavior, StubServer};
use spatialprompt_core::backend::{
    generate_with, poll_until_done, BackendConfig, BackendError, FakeClock, GenerationBackend, RemoteBackend,
    ReqwestTransport, TaskState, MAX_ASSET_BYTES,
};
use spatialprompt_core::corpus::{random_sketch, rng, SketchShape};
use spatialprompt_core::prompt::AssembleOptions;
use spatialprompt_core::{assemble, compile, CompileParams, GenerationRequest, SemanticPrompt};

const KEY: &str = "stub-key";
const TETRA: &[u8] = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";

fn request() -> GenerationRequest {
    let doc = random_sketch(&mut rng(11), &SketchShape::default());
    let cs = compile(&doc, &CompileParams::default()).unwrap();
    assemble(&cs, &SemanticPrompt::new("a stool"), 5, &AssembleOptions::default()).unwrap()
}

fn backend(stub: &StubServer, clock: &FakeClock) -> (RemoteBackend, BackendConfig) {
    let config = BackendConfig { retry_delay: Duration::from_millis(1), ..BackendConfig::remote(stub.base_url(), KEY) };
    let transport = ReqwestTransport::new(Duration::from_secs(5)).unwrap();
    (RemoteBackend::new(config.clone(), Box::new(transport), Box::new(clock.clone())).unwrap(), config)
}

#[test]
fn success_fits_asset_into_global_box() {
    let stub = StubServer::start_with_key(StubBehavior::Succeed { pending_polls: 2, obj: TETRA.to_vec() }, Some(KEY.into())).unwrap();
    let clock = FakeClock::new();
    let (mut b, config) = backend(&stub, &clock);
    let req = request();
    let out = generate_with(&req, &mut b, &config, &clock).unwrap();
    assert!(out.metadata.enforced);
    let gb = &req.constraint_set.global_box;
    assert!(out.mesh.vertices.iter().all(|v| gb.contains_with_slack(*v, 1e-9)));
    assert_eq!(clock.sleeps(), vec![Duration::from_secs(2), Duration::from_secs(3)]);
    let log = stub.requests();
    assert_eq!(log[0], "POST /tasks");
    assert_eq!(log.iter().filter(|r| r.starts_with("GET /tasks/")).count(), 3);
    assert!(log.last().unwrap().starts_with("GET /assets/"));
}

#[test]
fn server_errors_are_retried_three_times() {
    let stub = StubServer::start(StubBehavior::AlwaysStatus(500)).unwrap();
    let clock = FakeClock::new();
    let (mut b, _) = backend(&stub, &clock);
    let err = b.submit(&request()).unwrap_err();
    assert!(matches!(err, BackendError::BackendRejected { status: 500, .. }), "{err:?}");
    assert_eq!(stub.requests().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = StubServer::start_with_key(StubBehavior::NeverComplete, Some("other".into())).unwrap();
    let clock = FakeClock::new();
    let (mut b, _) = backend(&stub, &clock);
    let err = b.submit(&request()).unwrap_err();
    assert!(matches!(err, BackendError::BackendRejected { status: 401, .. }), "{err:?}");
    assert_eq!(stub.requests().len(), 1);
}

#[test]
fn never_completing_task_times_out_at_overall_timeout() {
    let stub = StubServer::start_with_key(StubBehavior::NeverComplete, Some(KEY.into())).unwrap();
    let clock = FakeClock::new();
    let (mut b, config) = backend(&stub, &clock);
    let task = b.submit(&request()).unwrap();
    let status = poll_until_done(&mut b, &task, &config, &clock).unwrap();
    assert_eq!(status.state, TaskState::Failed);
    assert_eq!(status.failure_reason.as_deref(), Some("Timeout"));
    assert_eq!(clock.sleeps().iter().sum::<Duration>(), Duration::from_secs(300));

    let clock = FakeClock::new();
    let (mut b, config) = backend(&stub, &clock);
    let err = generate_with(&request(), &mut b, &config, &clock).unwrap_err();
    assert_eq!(err, BackendError::Timeout(Duration::from_secs(300)));
}

#[test]
fn oversized_asset_rejected() {
    let stub = StubServer::start_with_key(StubBehavior::Oversized { bytes: MAX_ASSET_BYTES + 1 }, Some(KEY.into())).unwrap();
    let clock = FakeClock::new();
    let (mut b, config) = backend(&stub, &clock);
    let err = generate_with(&request(), &mut b, &config, &clock).unwrap_err();
    assert!(matches!(err, BackendError::AssetTooLarge { .. }), "{err:?}");
}

#[test]
fn failed_task_surfaces_reason() {
    let stub = StubServer::start_with_key(StubBehavior::Fail { reason: "nsfw prompt".into() }, Some(KEY.into())).unwrap();
    let clock = FakeClock::new();
    let (mut b, config) = backend(&stub, &clock);
    let err = generate_with(&request(), &mut b, &config, &clock).unwrap_err();
    assert_eq!(err, BackendError::TaskFailed("nsfw prompt".into()));
}
