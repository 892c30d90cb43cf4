//! Message construction, phase gating and result computation for single
//! drawings and chains.

mod message;
mod session;

pub use message::{signing_payload, CommitMessage, DrawRef, Message, RevealMessage};
pub use session::{
    compute_result, session_outcome, start_session, start_session_with, AbortReason, AbortReport, Delivery,
    DrawOutcome, IncidentKind, Opening, Participant, Phase, PhaseClock, ProtocolError, Rejection, Session,
    SessionStatus, StakeholderProgress, DEFAULT_PHASE_TIMEOUT,
};
