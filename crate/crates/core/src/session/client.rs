//! Client-side replica: the confirmed document as broadcast by the server,
//! plus local ops that are still waiting for their echo.

use super::protocol::{document_from_snapshot, Envelope, Message, Participant};
use crate::sketch::{EditOp, OpKind, SketchDocument, SketchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    Connecting,
    Joined,
    /// A sequence gap was seen; waiting for the Welcome answering Resync.
    Resyncing,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub session_id: String,
    pub participant_id: String,
    pub display_name: String,
    pub phase: ClientPhase,
    pub color_index: Option<u32>,
    pub confirmed: SketchDocument,
    pub last_seq: u64,
    pub pending: Vec<EditOp>,
    pub participants: Vec<Participant>,
    /// Op ids the server rejected, with reasons, oldest first.
    pub rejected: Vec<(String, String)>,
    next_op: u64,
}

impl ClientState {
    pub fn new(session_id: impl Into<String>, participant_id: impl Into<String>) -> Self {
        let session_id = session_id.into();
        let participant_id = participant_id.into();
        Self {
            confirmed: SketchDocument::new(session_id.clone()),
            display_name: participant_id.clone(),
            session_id,
            participant_id,
            phase: ClientPhase::Connecting,
            color_index: None,
            last_seq: 0,
            pending: Vec::new(),
            participants: Vec::new(),
            rejected: Vec::new(),
            next_op: 0,
        }
    }

    fn envelope(&self, message: Message) -> Envelope {
        Envelope::new(self.session_id.clone(), self.participant_id.clone(), message)
    }

    pub fn join(&self) -> Envelope {
        self.envelope(Message::Join { display_name: self.display_name.clone() })
    }

    pub fn leave(&self) -> Envelope {
        self.envelope(Message::Leave {})
    }

    pub fn resync(&self) -> Envelope {
        self.envelope(Message::Resync {})
    }

    pub fn trigger(&self, prompt: impl Into<String>, seed: u64) -> Envelope {
        self.envelope(Message::TriggerGeneration { prompt: prompt.into(), seed })
    }

    /// Wrap a local edit in a SubmitOp and keep it pending until echoed.
    pub fn submit(&mut self, kind: OpKind) -> Envelope {
        self.next_op += 1;
        let op = EditOp::new(format!("{}-{}", self.participant_id, self.next_op), self.participant_id.clone(), kind);
        self.pending.push(op.clone());
        self.envelope(Message::SubmitOp { op })
    }

    /// Apply one server frame. Returns frames to send back, if any.
    pub fn receive(&mut self, env: &Envelope) -> Result<Vec<Envelope>, SketchError> {
        match &env.message {
            Message::Welcome { participant_id, color_index, snapshot, last_seq, participants }
                if *participant_id == self.participant_id =>
            {
                let doc = document_from_snapshot(snapshot)
                    .map_err(|e| SketchError::MalformedDocument(e.to_string()))?;
                self.pending.retain(|p| !doc.op_log.iter().any(|o| o.op_id == p.op_id));
                self.confirmed = doc;
                self.last_seq = *last_seq;
                self.color_index = Some(*color_index);
                self.participants = participants.clone();
                self.phase = ClientPhase::Joined;
            }
            Message::OpApplied { op } => {
                let seq = op.seq.unwrap_or(0);
                if self.phase != ClientPhase::Joined || seq <= self.last_seq {
                    return Ok(Vec::new());
                }
                if seq > self.last_seq + 1 {
                    self.phase = ClientPhase::Resyncing;
                    return Ok(vec![self.resync()]);
                }
                self.confirmed.apply_in_place(op)?;
                self.last_seq = seq;
                self.pending.retain(|p| p.op_id != op.op_id);
            }
            Message::OpRejected { op_id, reason } => {
                let before = self.pending.len();
                self.pending.retain(|p| p.op_id != *op_id);
                if self.pending.len() != before {
                    self.rejected.push((op_id.clone(), reason.clone()));
                }
            }
            Message::PresenceUpdate { participants } => self.participants = participants.clone(),
            _ => {}
        }
        Ok(Vec::new())
    }

    /// Confirmed state with pending ops applied on top; pending ops that no
    /// longer apply are skipped.
    pub fn overlay(&self) -> SketchDocument {
        let mut doc = self.confirmed.clone();
        for op in &self.pending {
            let _ = doc.apply_in_place(op);
        }
        doc
    }

    pub fn digest(&self) -> Result<String, SketchError> {
        self.confirmed.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::session::server::SessionState;
    use crate::sketch::Stroke;

    fn deliver(server: &mut SessionState, c: &mut ClientState, env: Envelope) {
        for out in server.handle(env).outbound {
            let _ = c.receive(&out.envelope);
        }
    }

    #[test]
    fn pending_until_echo() {
        let mut server = SessionState::new("r");
        let mut c = ClientState::new("r", "a");
        let j = c.join();
        deliver(&mut server, &mut c, j);
        assert_eq!(c.phase, ClientPhase::Joined);
        let env = c.submit(OpKind::AddStroke { stroke: Stroke::new("s", "a", vec![Point3::ZERO, Point3::X]) });
        assert_eq!(c.pending.len(), 1);
        assert!(c.overlay().stroke("s").is_some());
        assert!(c.confirmed.stroke("s").is_none());
        deliver(&mut server, &mut c, env);
        assert!(c.pending.is_empty());
        assert_eq!(c.last_seq, 1);
        assert_eq!(c.digest().unwrap(), server.document.digest().unwrap());
    }

    #[test]
    fn gap_requests_resync() {
        let mut server = SessionState::new("r");
        let mut a = ClientState::new("r", "a");
        let j = a.join();
        deliver(&mut server, &mut a, j);
        server.handle(ClientState::new("r", "b").join());
        let mut echoes = Vec::new();
        for i in 0..3 {
            let op = EditOp::new(
                format!("b-{i}"),
                "b",
                OpKind::AddStroke { stroke: Stroke::new(format!("s{i}"), "b", vec![Point3::ZERO, Point3::Y]) },
            );
            let fx = server.handle(Envelope::new("r", "b", Message::SubmitOp { op }));
            echoes.push(fx.outbound.into_iter().find(|o| o.to == super::super::server::Recipient::Participant("a".into())).unwrap());
        }
        a.receive(&echoes[0].envelope).unwrap();
        let replies = a.receive(&echoes[2].envelope).unwrap();
        assert_eq!(replies.len(), 1);
        assert_eq!(a.phase, ClientPhase::Resyncing);
        deliver(&mut server, &mut a, replies[0].clone());
        a.receive(&echoes[1].envelope).unwrap();
        assert_eq!(a.last_seq, 3);
        assert_eq!(a.digest().unwrap(), server.document.digest().unwrap());
    }
}
