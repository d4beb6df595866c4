//! Collaborative sketch sessions: wire protocol, the authoritative server
//! state machine, a client replica and an in-process simulation harness.

pub mod client;
pub mod protocol;
pub mod server;
pub mod sim;

pub use client::{ClientPhase, ClientState};
pub use protocol::{Envelope, Message, Participant, ProtocolError, PALETTE, SERVER_ID};
pub use server::{
    run_generation_job, Effects, GenerationJob, Outbound, Recipient, SessionError, SessionState, MAX_PARTICIPANTS,
};
