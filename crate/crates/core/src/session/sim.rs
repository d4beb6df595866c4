//! In-process session driven over simulated transport.
//!
//! Each client has an upstream and a downstream FIFO. A seeded scheduler
//! interleaves local edits with single-frame deliveries, so concurrent
//! clients race on the same strokes. Downstream OpApplied frames can be
//! dropped to exercise resync. Frames are serialized to JSON and parsed
//! back on every hop, like a real socket.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::client::ClientState;
use super::protocol::{Envelope, Message};
use super::server::{Recipient, SessionState};
use crate::corpus::{self, point_in_cube, random_rotation, SketchShape};
use crate::sketch::{OpKind, Role, SketchDocument, Stroke};

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub seed: u64,
    pub clients: usize,
    /// Local edits per client.
    pub ops: usize,
    /// Probability that a downstream OpApplied frame is lost.
    pub drop_rate: f64,
    pub shape: SketchShape,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clients: 3,
            ops: 50,
            drop_rate: 0.0,
            shape: SketchShape { max_points: 6, ..SketchShape::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub server_digest: String,
    pub server_last_seq: u64,
    pub client_digests: Vec<String>,
    pub client_last_seqs: Vec<u64>,
    pub document: SketchDocument,
    /// Color of each participant, by id.
    pub colors: Vec<(String, u32)>,
    pub submitted: usize,
    pub rejected: usize,
    pub resyncs: usize,
    /// Every frame the server sent, as JSON text, in send order.
    pub transcript: Vec<String>,
}

fn hop(env: &Envelope) -> Envelope {
    Envelope::from_json(&env.to_json()).expect("frames round-trip")
}

fn random_edit(rng: &mut impl Rng, c: &ClientState, n: usize, shape: &SketchShape) -> OpKind {
    let view = c.overlay();
    // Ids come from the confirmed document too, so ops can target strokes a
    // concurrent client already removed.
    let mut ids: Vec<String> = view.strokes.keys().cloned().collect();
    ids.extend(c.confirmed.strokes.keys().cloned());
    let roll: f64 = rng.random();
    if ids.is_empty() || roll < 0.4 {
        let existing: Vec<&Stroke> = view.strokes.values().collect();
        let id = if !ids.is_empty() && roll < 0.03 {
            ids.choose(rng).unwrap().clone()
        } else {
            format!("{}-s{n}", c.participant_id)
        };
        return OpKind::AddStroke { stroke: corpus::random_stroke(rng, &id, &c.participant_id, &existing, shape) };
    }
    let stroke_id = ids.choose(rng).unwrap().clone();
    if roll < 0.65 {
        OpKind::TransformStroke {
            stroke_id,
            rotation: random_rotation(rng),
            translation: point_in_cube(rng, 0.1),
            uniform_scale: rng.random_range(0.8..1.25),
        }
    } else if roll < 0.8 {
        OpKind::SetRole { stroke_id, role: *[Role::Contour, Role::Scaffold, Role::Anchor].choose(rng).unwrap() }
    } else {
        OpKind::DeleteStroke { stroke_id }
    }
}

/// Run one simulated session to quiescence.
pub fn run(config: &SimConfig) -> SimOutcome {
    let mut rng = corpus::rng(config.seed);
    let session = "sim";
    let mut server = SessionState::new(session);
    let mut clients: Vec<ClientState> =
        (0..config.clients).map(|i| ClientState::new(session, format!("c{i}"))).collect();
    let mut up: Vec<VecDeque<Envelope>> = clients.iter().map(|c| VecDeque::from([c.join()])).collect();
    let mut down: Vec<VecDeque<Envelope>> = vec![VecDeque::new(); clients.len()];
    let mut transcript = Vec::new();
    let mut submitted = 0;
    let mut resyncs = 0;

    let deliver_up = |i: usize,
                      server: &mut SessionState,
                      up: &mut Vec<VecDeque<Envelope>>,
                      down: &mut Vec<VecDeque<Envelope>>,
                      transcript: &mut Vec<String>,
                      rng: &mut rand_chacha::ChaCha8Rng,
                      lossy: bool| {
        let Some(env) = up[i].pop_front() else { return };
        let sender = env.sender_id.clone();
        for out in server.handle(hop(&env)).outbound {
            transcript.push(out.envelope.to_json());
            let target = match &out.to {
                Recipient::Sender => sender.clone(),
                Recipient::Participant(p) => p.clone(),
            };
            let Some(j) = target.strip_prefix('c').and_then(|n| n.parse::<usize>().ok()) else { continue };
            let droppable = matches!(out.envelope.message, Message::OpApplied { .. });
            if lossy && droppable && rng.random_bool(config.drop_rate) {
                continue;
            }
            down[j].push_back(hop(&out.envelope));
        }
    };

    let mut edits = vec![0usize; clients.len()];
    while edits.iter().any(|&n| n < config.ops) {
        let i = rng.random_range(0..clients.len());
        match rng.random_range(0..3) {
            0 => {
                if clients[i].color_index.is_some() && edits[i] < config.ops {
                    let kind = random_edit(&mut rng, &clients[i], edits[i], &config.shape);
                    up[i].push_back(clients[i].submit(kind));
                    submitted += 1;
                    edits[i] += 1;
                }
            }
            1 => deliver_up(i, &mut server, &mut up, &mut down, &mut transcript, &mut rng, true),
            _ => {
                if let Some(env) = down[i].pop_front() {
                    let replies = clients[i].receive(&env).expect("server frames apply");
                    resyncs += replies.len();
                    up[i].extend(replies);
                }
            }
        }
    }

    // Quiesce without loss. A client that is behind once everything has
    // drained asks for a resync, as it would on a heartbeat.
    loop {
        let mut moved = false;
        for i in 0..clients.len() {
            while !up[i].is_empty() {
                deliver_up(i, &mut server, &mut up, &mut down, &mut transcript, &mut rng, false);
                moved = true;
            }
        }
        for i in 0..clients.len() {
            while let Some(env) = down[i].pop_front() {
                let replies = clients[i].receive(&env).expect("server frames apply");
                resyncs += replies.len();
                up[i].extend(replies);
                moved = true;
            }
        }
        if !moved {
            let behind: Vec<usize> = (0..clients.len()).filter(|&i| clients[i].last_seq < server.last_seq()).collect();
            if behind.is_empty() {
                break;
            }
            for i in behind {
                up[i].push_back(clients[i].resync());
                resyncs += 1;
            }
        }
    }

    SimOutcome {
        server_digest: server.document.digest().expect("server document serializes"),
        server_last_seq: server.last_seq(),
        client_digests: clients.iter().map(|c| c.digest().expect("client document serializes")).collect(),
        client_last_seqs: clients.iter().map(|c| c.last_seq).collect(),
        document: server.document.clone(),
        colors: server.participants().iter().map(|p| (p.participant_id.clone(), p.color_index)).collect(),
        submitted,
        rejected: clients.iter().map(|c| c.rejected.len()).sum(),
        resyncs,
        transcript,
    }
}
