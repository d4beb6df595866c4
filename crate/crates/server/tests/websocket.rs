use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use spatialprompt_core::geometry::Point3;
use spatialprompt_core::session::{ClientState, Envelope, Message};
use spatialprompt_core::sketch::{OpKind, SketchDocument, Stroke};
use spatialprompt_server::{spawn, ServerConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as Ws;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Peer {
    ws: Socket,
    state: ClientState,
}

impl Peer {
    async fn connect(addr: SocketAddr, session: &str, id: &str) -> Peer {
        let (ws, _) = connect_async(format!("ws://{addr}/session/{session}")).await.unwrap();
        Peer { ws, state: ClientState::new(session, id) }
    }

    async fn send(&mut self, env: Envelope) {
        self.ws.send(Ws::Text(env.to_json().into())).await.unwrap();
    }

    async fn send_raw(&mut self, text: &str) {
        self.ws.send(Ws::Text(text.to_string().into())).await.unwrap();
    }

    async fn recv(&mut self) -> Envelope {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("frame within 10 s")
                .unwrap()
                .unwrap();
            if let Ws::Text(text) = msg {
                let env = Envelope::from_json(&text).unwrap();
                for reply in self.state.receive(&env).unwrap() {
                    self.send(reply).await;
                }
                return env;
            }
        }
    }

    async fn recv_until(&mut self, pred: impl Fn(&Message) -> bool) -> Envelope {
        loop {
            let env = self.recv().await;
            if pred(&env.message) {
                return env;
            }
        }
    }

    async fn join(&mut self) -> Envelope {
        let env = self.state.join();
        self.send(env).await;
        self.recv_until(|m| matches!(m, Message::Welcome { .. })).await
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> (u16, String, Vec<u8>) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nhost: {addr}\r\nconnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&buf[..split]).to_string();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, head, buf[split + 4..].to_vec())
}

fn line(id: &str, who: &str, a: Point3, b: Point3) -> OpKind {
    let mut s = Stroke::new(id, who, vec![a, b]);
    s.color_index = 9;
    OpKind::AddStroke { stroke: s }
}

async fn start() -> SocketAddr {
    spawn("127.0.0.1:0".parse().unwrap(), ServerConfig::default()).await.unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn two_clients_edit_and_generate() {
    let addr = start().await;
    let mut a = Peer::connect(addr, "room", "alice").await;
    let mut b = Peer::connect(addr, "room", "bob").await;
    a.join().await;
    b.join().await;
    a.recv_until(|m| matches!(m, Message::PresenceUpdate { .. })).await;
    assert_eq!(a.state.color_index, Some(0));
    assert_eq!(b.state.color_index, Some(1));

    let op = a.state.submit(line("leg", "alice", Point3::ZERO, Point3::new(0.0, 0.0, 0.4)));
    a.send(op).await;
    let op = b.state.submit(line("top", "bob", Point3::new(0.0, 0.0, 0.4), Point3::new(0.5, 0.0, 0.4)));
    b.send(op).await;
    for p in [&mut a, &mut b] {
        while p.state.last_seq < 2 {
            p.recv().await;
        }
        assert!(p.state.pending.is_empty());
    }
    assert_eq!(a.state.digest().unwrap(), b.state.digest().unwrap());
    assert_eq!(a.state.confirmed.stroke("leg").unwrap().color_index, 0);
    assert_eq!(a.state.confirmed.stroke("top").unwrap().color_index, 1);

    let trigger = b.state.trigger("a small side table", 7);
    b.send(trigger).await;
    for p in [&mut a, &mut b] {
        let env = p.recv_until(|m| matches!(m, Message::AssetReady { .. })).await;
        let Message::AssetReady { report, obj_base64, .. } = env.message else { unreachable!() };
        assert!(report.overall_pass);
        assert!(!obj_base64.is_empty());
    }

    let (status, head, body) = http_get(addr, "/session/room/snapshot").await;
    assert_eq!(status, 200);
    assert!(head.to_ascii_lowercase().contains("x-last-seq: 2"), "{head}");
    let doc = SketchDocument::parse(&body).unwrap();
    assert_eq!(doc.digest().unwrap(), a.state.digest().unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn busy_and_rejections_reach_only_the_sender() {
    let addr = start().await;
    let mut a = Peer::connect(addr, "busy", "a").await;
    let mut b = Peer::connect(addr, "busy", "b").await;
    a.join().await;
    b.join().await;
    let op = a.state.submit(line("s", "a", Point3::ZERO, Point3::X));
    a.send(op).await;
    b.recv_until(|m| matches!(m, Message::OpApplied { .. })).await;

    let del = a.state.submit(OpKind::DeleteStroke { stroke_id: "s".into() });
    a.send(del).await;
    b.recv_until(|m| matches!(m, Message::OpApplied { .. })).await;
    let t = b.state.submit(OpKind::DeleteStroke { stroke_id: "s".into() });
    b.send(t).await;
    let env = b.recv_until(|m| matches!(m, Message::OpRejected { .. })).await;
    assert_eq!(env.message, Message::OpRejected { op_id: "b-1".into(), reason: "UnknownStroke".into() });
    assert_eq!(b.state.rejected.len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn protocol_errors_and_unknown_session() {
    let addr = start().await;
    let (status, _, body) = http_get(addr, "/session/nowhere/snapshot").await;
    assert_eq!(status, 404);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["code"], "UnknownSession");

    let mut p = Peer::connect(addr, "proto", "p").await;
    p.send_raw(r#"{"type":"Teleport","session_id":"proto","sender_id":"p","payload":{}}"#).await;
    let env = p.recv().await;
    assert!(matches!(env.message, Message::Error { ref code, .. } if code == "ProtocolError"));

    p.send_raw(r#"{"type":"Resync","session_id":"proto","sender_id":"p","payload":{}}"#).await;
    let env = p.recv().await;
    assert!(matches!(env.message, Message::Error { ref code, .. } if code == "NotAParticipant"));

    p.join().await;
    p.send_raw(r#"{"type":"Resync","session_id":"proto","sender_id":"someone-else","payload":{}}"#).await;
    let env = p.recv().await;
    assert!(matches!(env.message, Message::Error { ref code, .. } if code == "SenderMismatch"));

    let (status, _, body) = http_get(addr, "/session/proto/snapshot").await;
    assert_eq!(status, 200);
    assert!(SketchDocument::parse(&body).unwrap().is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn leaving_broadcasts_presence() {
    let addr = start().await;
    let mut a = Peer::connect(addr, "presence", "a").await;
    let mut b = Peer::connect(addr, "presence", "b").await;
    a.join().await;
    b.join().await;
    a.recv_until(|m| matches!(m, Message::PresenceUpdate { participants } if participants.len() == 2)).await;
    drop(b);
    let env = a.recv_until(|m| matches!(m, Message::PresenceUpdate { participants } if participants.len() == 1)).await;
    let Message::PresenceUpdate { participants } = env.message else { unreachable!() };
    assert_eq!(participants[0].participant_id, "a");
}
