//! Auditable commit-and-reveal random drawings.
//!
//! Stakeholders jointly draw candidates from a weighted eligible list. Each
//! publishes a signed hash commitment to a secret share, then reveals it once
//! every commitment is in; the drawn index is the sum of shares modulo the
//! index space. One honest stakeholder suffices for a uniform result, and any
//! third party can check the outcome from the signed transcript.
//!
//! Module map:
//!
//! * [`model`]: drawing identifiers, [`model::DrawSpec`] and its `DRAWv1` encoding
//! * [`weights`]: weighted eligible lists and index resolution
//! * [`crypto`]: masks, shares, commitments, Ed25519 signing
//! * [`protocol`]: messages and the session state machine
//! * [`audit`]: transcripts and third-party verification
//! * [`relay`]: the untrusted message board and its HTTP API
//! * [`cli`]: operator commands behind the `fairdraw` binary

pub mod audit;
pub mod cli;
pub mod client;
pub mod crypto;
pub mod encoding;
pub mod json;
pub mod model;
pub mod protocol;
pub mod relay;
pub mod simulate;
pub mod specfile;
pub mod stats;
pub mod weights;

pub use audit::{audit_transcript, cross_check_relay, detect_equivocation, AuditReport, Transcript, Verdict};
pub use crypto::{commit, gen_mask, gen_share, open, KeyDirectory, KeyPair, Mask, PublicKey, Share};
pub use model::{canonical_encode, parse_draw_id, validate_spec, DrawId, DrawList, DrawSpec, DrawTarget, Fingerprint, StakeholderId};
pub use protocol::{compute_result, start_session, Message, Participant, Phase, Session};
pub use weights::{CandidateId, WeightedEligibleList};

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
