//! Authoritative per-session state machine.
//!
//! Every inbound frame is handled to completion in arrival order and yields
//! the frames to send. Generation runs elsewhere: [`SessionState::handle`]
//! hands back a [`GenerationJob`], and the runtime reports progress and the
//! outcome through [`SessionState::generation_progress`] and
//! [`SessionState::finish_generation`].

use base64::Engine as _;

use super::protocol::{snapshot_value, Envelope, Message, Participant, PALETTE, SERVER_ID};
use crate::backend::{generate, BackendConfig, TaskState, MAX_ASSET_BYTES};
use crate::compiler::{compile, CompileParams};
use crate::mesh::{export_mesh_obj, TriangleMesh};
use crate::prompt::{assemble, AssembleOptions, GenerationRequest, SemanticPrompt};
use crate::sketch::{OpKind, SketchDocument, SketchError};
use crate::validator::{validate, ValidationReport, ValidatorParams};

pub const MAX_PARTICIPANTS: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("UnknownSession: {0}")]
    UnknownSession(String),
    #[error(transparent)]
    Document(#[from] SketchError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipient {
    /// The connection the inbound frame came from, joined or not.
    Sender,
    Participant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Recipient,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationJob {
    pub request: GenerationRequest,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Effects {
    pub outbound: Vec<Outbound>,
    pub job: Option<GenerationJob>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: String,
    pub document: SketchDocument,
    next_seq: u64,
    participants: Vec<Participant>,
    joins: u64,
    active_generation: Option<String>,
    pub compile_params: CompileParams,
    pub assemble_options: AssembleOptions,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        let session_id = session_id.into();
        Self {
            document: SketchDocument::new(session_id.clone()),
            session_id,
            next_seq: 1,
            participants: Vec::new(),
            joins: 0,
            active_generation: None,
            compile_params: CompileParams::default(),
            assemble_options: AssembleOptions::default(),
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.participant_id == id)
    }

    pub fn active_generation(&self) -> Option<&str> {
        self.active_generation.as_deref()
    }

    /// Canonical document bytes and the last applied seq.
    pub fn snapshot(&self) -> Result<(Vec<u8>, u64), SessionError> {
        Ok((self.document.to_canonical_bytes()?, self.last_seq()))
    }

    fn envelope(&self, message: Message) -> Envelope {
        Envelope::new(self.session_id.clone(), SERVER_ID, message)
    }

    fn to_sender(&self, message: Message) -> Outbound {
        Outbound { to: Recipient::Sender, envelope: self.envelope(message) }
    }

    fn error(&self, code: &str, message: impl Into<String>) -> Effects {
        Effects {
            outbound: vec![self.to_sender(Message::Error { code: code.into(), message: message.into() })],
            job: None,
        }
    }

    fn broadcast(&self, message: Message, except: Option<&str>) -> Vec<Outbound> {
        self.participants
            .iter()
            .filter(|p| Some(p.participant_id.as_str()) != except)
            .map(|p| Outbound { to: Recipient::Participant(p.participant_id.clone()), envelope: self.envelope(message.clone()) })
            .collect()
    }

    fn welcome(&self, p: &Participant) -> Message {
        Message::Welcome {
            participant_id: p.participant_id.clone(),
            color_index: p.color_index,
            snapshot: snapshot_value(&self.document),
            last_seq: self.last_seq(),
            participants: self.participants.clone(),
        }
    }

    /// Handle one inbound frame.
    pub fn handle(&mut self, env: Envelope) -> Effects {
        if env.session_id != self.session_id {
            return self.error("WrongSession", format!("this is session {}", self.session_id));
        }
        let sender = env.sender_id;
        if let Message::Join { display_name } = env.message {
            return self.join(&sender, display_name);
        }
        let Some(me) = self.participant(&sender).cloned() else {
            return match env.message {
                Message::SubmitOp { op } => Effects {
                    outbound: vec![self.to_sender(Message::OpRejected { op_id: op.op_id, reason: "NotAParticipant".into() })],
                    job: None,
                },
                _ => self.error("NotAParticipant", format!("{sender:?} has not joined")),
            };
        };
        match env.message {
            Message::SubmitOp { op } => self.submit(&me, op),
            Message::TriggerGeneration { prompt, seed } => self.trigger(&me, prompt, seed),
            Message::Leave {} => self.leave(&sender),
            Message::Resync {} => Effects {
                outbound: vec![Outbound { to: Recipient::Participant(sender.clone()), envelope: self.envelope(self.welcome(&me)) }],
                job: None,
            },
            other => self.error("UnexpectedMessage", format!("clients may not send {}", other.type_name())),
        }
    }

    fn join(&mut self, id: &str, display_name: String) -> Effects {
        if id.is_empty() || id == SERVER_ID {
            return self.error("InvalidParticipantId", format!("{id:?} cannot be used as a participant id"));
        }
        if self.participant(id).is_some() {
            return self.error("DuplicateParticipantId", format!("{id:?} already joined"));
        }
        if self.participants.len() >= MAX_PARTICIPANTS {
            return self.error("SessionFull", format!("at most {MAX_PARTICIPANTS} participants"));
        }
        let p = Participant {
            participant_id: id.to_string(),
            display_name,
            color_index: (self.joins % PALETTE.len() as u64) as u32,
        };
        self.joins += 1;
        self.participants.push(p.clone());
        let mut outbound =
            vec![Outbound { to: Recipient::Participant(p.participant_id.clone()), envelope: self.envelope(self.welcome(&p)) }];
        outbound.extend(self.broadcast(Message::PresenceUpdate { participants: self.participants.clone() }, Some(id)));
        Effects { outbound, job: None }
    }

    /// Remove a participant (explicit Leave or dropped connection).
    pub fn leave(&mut self, id: &str) -> Effects {
        let before = self.participants.len();
        self.participants.retain(|p| p.participant_id != id);
        if self.participants.len() == before {
            return Effects::default();
        }
        Effects { outbound: self.broadcast(Message::PresenceUpdate { participants: self.participants.clone() }, None), job: None }
    }

    fn submit(&mut self, me: &Participant, mut op: crate::sketch::EditOp) -> Effects {
        op.seq = Some(self.next_seq);
        op.author_id = me.participant_id.clone();
        if let OpKind::AddStroke { stroke } = &mut op.kind {
            stroke.color_index = me.color_index;
            stroke.author_id = me.participant_id.clone();
        }
        match self.document.apply_in_place(&op) {
            Ok(()) => {
                self.next_seq += 1;
                Effects { outbound: self.broadcast(Message::OpApplied { op }, None), job: None }
            }
            Err(e) => Effects {
                outbound: vec![Outbound {
                    to: Recipient::Participant(me.participant_id.clone()),
                    envelope: self.envelope(Message::OpRejected { op_id: op.op_id, reason: e.code().into() }),
                }],
                job: None,
            },
        }
    }

    fn trigger(&mut self, me: &Participant, prompt: String, seed: u64) -> Effects {
        if self.active_generation.is_some() {
            return Effects {
                outbound: vec![Outbound {
                    to: Recipient::Participant(me.participant_id.clone()),
                    envelope: self.envelope(Message::OpRejected { op_id: "TriggerGeneration".into(), reason: "GenerationBusy".into() }),
                }],
                job: None,
            };
        }
        let failed = |this: &Self, reason: &str| Effects {
            outbound: this.broadcast(
                Message::GenerationStatus {
                    request_id: String::new(),
                    state: TaskState::Failed,
                    progress: None,
                    reason: Some(reason.into()),
                },
                None,
            ),
            job: None,
        };
        let cs = match compile(&self.document, &self.compile_params) {
            Ok(cs) => cs,
            Err(e) => return failed(self, e.code()),
        };
        let request = match assemble(&cs, &SemanticPrompt::new(prompt), seed, &self.assemble_options) {
            Ok(r) => r,
            Err(e) => return failed(self, e.code()),
        };
        self.active_generation = Some(request.request_id.clone());
        let outbound = self.broadcast(
            Message::GenerationStatus {
                request_id: request.request_id.clone(),
                state: TaskState::Pending,
                progress: Some(0),
                reason: None,
            },
            None,
        );
        Effects { outbound, job: Some(GenerationJob { request }) }
    }

    /// Broadcast an intermediate status for the in-flight request.
    pub fn generation_progress(&self, request_id: &str, state: TaskState, progress: Option<u8>) -> Vec<Outbound> {
        if self.active_generation.as_deref() != Some(request_id) || state.is_terminal() {
            return Vec::new();
        }
        self.broadcast(Message::GenerationStatus { request_id: request_id.into(), state, progress, reason: None }, None)
    }

    /// Close out the in-flight request with its asset and report or a
    /// failure code. Stale or duplicate completions are ignored.
    pub fn finish_generation(
        &mut self,
        request_id: &str,
        outcome: Result<(TriangleMesh, ValidationReport), String>,
    ) -> Vec<Outbound> {
        if self.active_generation.as_deref() != Some(request_id) {
            return Vec::new();
        }
        self.active_generation = None;
        let status = |state, progress, reason: Option<String>| Message::GenerationStatus {
            request_id: request_id.into(),
            state,
            progress,
            reason,
        };
        match outcome {
            Ok((mesh, report)) => {
                let obj = export_mesh_obj(&mesh);
                if obj.len() > MAX_ASSET_BYTES {
                    return self.broadcast(status(TaskState::Failed, None, Some("AssetTooLarge".into())), None);
                }
                let mut out = self.broadcast(status(TaskState::Succeeded, Some(100), None), None);
                out.extend(self.broadcast(
                    Message::AssetReady {
                        request_id: request_id.into(),
                        obj_base64: base64::engine::general_purpose::STANDARD.encode(obj),
                        report,
                    },
                    None,
                ));
                out
            }
            Err(reason) => self.broadcast(status(TaskState::Failed, None, Some(reason)), None),
        }
    }
}

/// Generate and validate a job's request; errors become their codes.
pub fn run_generation_job(
    job: &GenerationJob,
    backend: &BackendConfig,
    validator: &ValidatorParams,
) -> Result<(TriangleMesh, ValidationReport), String> {
    let out = generate(&job.request, backend).map_err(|e| e.code().to_string())?;
    let report = validate(&out.mesh, &job.request.constraint_set, validator).map_err(|e| e.code().to_string())?;
    Ok((out.mesh, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Quaternion};
    use crate::sketch::{EditOp, Stroke};

    fn send(s: &mut SessionState, from: &str, m: Message) -> Effects {
        s.handle(Envelope::new("room", from, m))
    }

    fn join(s: &mut SessionState, id: &str) -> Effects {
        send(s, id, Message::Join { display_name: id.to_uppercase() })
    }

    fn add(id: &str, stroke: &str, color: u32) -> Message {
        let mut st = Stroke::new(stroke, id, vec![Point3::ZERO, Point3::X]);
        st.color_index = color;
        Message::SubmitOp { op: EditOp::new(format!("{id}-{stroke}"), id, OpKind::AddStroke { stroke: st }) }
    }

    #[test]
    fn colors_follow_join_order_mod_ten() {
        let mut s = SessionState::new("room");
        let mut colors = Vec::new();
        for i in 0..11 {
            let id = format!("p{i}");
            let fx = join(&mut s, &id);
            match &fx.outbound[0].envelope.message {
                Message::Welcome { color_index, .. } => colors.push(*color_index),
                m => panic!("{m:?}"),
            }
            assert_eq!(fx.outbound.len(), 1 + i, "welcome plus presence to the others");
        }
        assert_eq!(colors[0], 0);
        assert_eq!(colors[1], 1);
        assert_eq!(colors[10], 0);
    }

    #[test]
    fn join_errors() {
        let mut s = SessionState::new("room");
        join(&mut s, "a");
        let fx = join(&mut s, "a");
        assert!(matches!(&fx.outbound[0].envelope.message, Message::Error { code, .. } if code == "DuplicateParticipantId"));
        for i in 1..MAX_PARTICIPANTS {
            join(&mut s, &format!("p{i}"));
        }
        let fx = join(&mut s, "late");
        assert!(matches!(&fx.outbound[0].envelope.message, Message::Error { code, .. } if code == "SessionFull"));
        assert_eq!(fx.outbound[0].to, Recipient::Sender);
    }

    #[test]
    fn ops_echo_to_everyone_with_dense_seq_and_color_overwrite() {
        let mut s = SessionState::new("room");
        join(&mut s, "a");
        join(&mut s, "b");
        join(&mut s, "c");
        let fx = send(&mut s, "c", add("c", "s1", 7));
        assert_eq!(fx.outbound.len(), 3);
        let Message::OpApplied { op } = &fx.outbound[0].envelope.message else { panic!() };
        assert_eq!(op.seq, Some(1));
        assert_eq!(s.document.stroke("s1").unwrap().color_index, 2);
        let fx = send(&mut s, "a", add("a", "s2", 0));
        let Message::OpApplied { op } = &fx.outbound[2].envelope.message else { panic!() };
        assert_eq!(op.seq, Some(2));
        assert_eq!(s.last_seq(), 2);
    }

    #[test]
    fn transform_after_delete_is_rejected_to_sender_only() {
        let mut s = SessionState::new("room");
        join(&mut s, "a");
        join(&mut s, "b");
        send(&mut s, "a", add("a", "s1", 0));
        send(&mut s, "a", Message::SubmitOp { op: EditOp::new("d", "a", OpKind::DeleteStroke { stroke_id: "s1".into() }) });
        let t = OpKind::TransformStroke {
            stroke_id: "s1".into(),
            rotation: Quaternion::IDENTITY,
            translation: Point3::X,
            uniform_scale: 1.0,
        };
        let fx = send(&mut s, "b", Message::SubmitOp { op: EditOp::new("t", "b", t) });
        assert_eq!(fx.outbound.len(), 1);
        assert_eq!(fx.outbound[0].to, Recipient::Participant("b".into()));
        assert_eq!(fx.outbound[0].envelope.message, Message::OpRejected { op_id: "t".into(), reason: "UnknownStroke".into() });
        assert_eq!(s.last_seq(), 2);
    }

    #[test]
    fn non_participant_rejected() {
        let mut s = SessionState::new("room");
        let fx = send(&mut s, "ghost", add("ghost", "s1", 0));
        assert!(matches!(&fx.outbound[0].envelope.message, Message::OpRejected { reason, .. } if reason == "NotAParticipant"));
        assert!(s.document.is_empty());
    }

    #[test]
    fn generation_lifecycle() {
        let mut s = SessionState::new("room");
        join(&mut s, "a");
        join(&mut s, "b");
        let fx = send(&mut s, "a", Message::TriggerGeneration { prompt: "chair".into(), seed: 1 });
        assert!(fx.job.is_none());
        assert!(matches!(&fx.outbound[0].envelope.message,
            Message::GenerationStatus { state: TaskState::Failed, reason: Some(r), .. } if r == "EmptySketch"));

        send(&mut s, "a", add("a", "s1", 0));
        let fx = send(&mut s, "a", Message::TriggerGeneration { prompt: "chair".into(), seed: 1 });
        let job = fx.job.unwrap();
        let busy = send(&mut s, "b", Message::TriggerGeneration { prompt: "chair".into(), seed: 2 });
        assert_eq!(busy.outbound.len(), 1);
        assert!(matches!(&busy.outbound[0].envelope.message, Message::OpRejected { reason, .. } if reason == "GenerationBusy"));

        send(&mut s, "b", add("b", "s2", 0));
        assert_eq!(job.request.constraint_set.source_revision, 1);

        let outcome = run_generation_job(&job, &BackendConfig::mock(), &ValidatorParams::default());
        let out = s.finish_generation(&job.request.request_id, outcome);
        let ready: Vec<_> = out.iter().filter(|o| matches!(o.envelope.message, Message::AssetReady { .. })).collect();
        assert_eq!(ready.len(), 2);
        let Message::AssetReady { report, .. } = &ready[0].envelope.message else { unreachable!() };
        assert!(report.overall_pass);
        assert!(s.finish_generation(&job.request.request_id, Err("late".into())).is_empty());
        assert!(s.active_generation().is_none());
    }

    #[test]
    fn snapshot_of_fresh_and_edited_session() {
        let mut s = SessionState::new("room");
        let (bytes, seq) = s.snapshot().unwrap();
        assert_eq!(seq, 0);
        assert!(SketchDocument::parse(&bytes).unwrap().is_empty());
        join(&mut s, "a");
        for i in 0..3 {
            send(&mut s, "a", add("a", &format!("s{i}"), 0));
        }
        let (bytes, seq) = s.snapshot().unwrap();
        assert_eq!(seq, 3);
        let doc = SketchDocument::parse(&bytes).unwrap();
        assert_eq!(doc.revision, 3);
        assert_eq!(doc, s.document);
    }
}
