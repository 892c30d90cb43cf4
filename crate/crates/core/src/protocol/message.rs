//! Protocol messages and their `MSGv1` encodings.
//!
//! Signed payload of a commit message:
//! `"MSGv1" ‖ DRAWv1(spec_0) ‖ … ‖ DRAWv1(spec_k) ‖ digest`.
//!
//! Wire form (what the relay stores and what audit evidence carries):
//!
//! ```text
//! commit: "MSGv1" 0x01 mode:u8 (0 single, 1 chain)
//!         u32 count, per DID: u32 len, UTF-8
//!         u32 len, fingerprint   u32 len, digest   u32 len, signature
//! reveal: "MSGv1" 0x02
//!         u32 len, fingerprint   u32 len, mask
//!         u32 count, per share: u64
//! ```

use serde::{Deserialize, Serialize};

use crate::crypto::{
    verify_message, Commitment, CryptoError, KeyPair, Mask, PublicKey, Share, Signature, DIGEST_LEN,
    MASK_LEN, MSG_TAG, SIGNATURE_LEN,
};
use crate::encoding::{DecodeError, Reader, Writer};
use crate::model::{parse_draw_id, DrawId, DrawTarget, Fingerprint, FINGERPRINT_LEN};

const KIND_COMMIT: u8 = 0x01;
const KIND_REVEAL: u8 = 0x02;

/// Which drawing(s) a commitment is for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawRef {
    Single(DrawId),
    Chain(Vec<DrawId>),
}

impl DrawRef {
    pub fn of(target: &DrawTarget) -> Self {
        match target {
            DrawTarget::Single(s) => DrawRef::Single(s.did().clone()),
            DrawTarget::Chain(l) => DrawRef::Chain(l.draws().iter().map(|d| d.did().clone()).collect()),
        }
    }

    pub fn dids(&self) -> &[DrawId] {
        match self {
            DrawRef::Single(d) => std::slice::from_ref(d),
            DrawRef::Chain(v) => v,
        }
    }

    /// `X#0` or `X#0,X#1,...`.
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.dids().iter().map(|d| d.to_string()).collect();
        parts.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitMessage {
    pub draw_ref: DrawRef,
    pub sender: Fingerprint,
    pub commitment: Commitment,
    pub signature: Signature,
}

/// `MSGv1 ‖ context ‖ digest`, the bytes a stakeholder signs.
pub fn signing_payload(target: &DrawTarget, commitment: &Commitment) -> Vec<u8> {
    let mut w = Writer::with_tag(MSG_TAG);
    w.raw(&target.context_bytes()).raw(commitment.as_bytes());
    w.finish()
}

impl CommitMessage {
    pub fn create(target: &DrawTarget, keypair: &KeyPair, commitment: Commitment) -> Self {
        Self {
            draw_ref: DrawRef::of(target),
            sender: keypair.fingerprint(),
            commitment,
            signature: keypair.sign(&signing_payload(target, &commitment)),
        }
    }

    /// Signature check against the session's drawing context.
    pub fn verify(&self, target: &DrawTarget, key: &PublicKey) -> Result<bool, CryptoError> {
        if key.fingerprint() != self.sender {
            return Ok(false);
        }
        verify_message(key, &signing_payload(target, &self.commitment), &self.signature.0)
    }
}

/// Unsigned opening; validity comes from the signed commitment it opens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealMessage {
    pub sender: Fingerprint,
    pub mask: Mask,
    pub shares: Vec<Share>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Commit(CommitMessage),
    Reveal(RevealMessage),
}

impl Message {
    pub fn sender(&self) -> &Fingerprint {
        match self {
            Message::Commit(c) => &c.sender,
            Message::Reveal(r) => &r.sender,
        }
    }

    pub fn is_commit(&self) -> bool {
        matches!(self, Message::Commit(_))
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(MSG_TAG);
        match self {
            Message::Commit(c) => {
                w.u8(KIND_COMMIT);
                w.u8(matches!(c.draw_ref, DrawRef::Chain(_)) as u8);
                let dids = c.draw_ref.dids();
                w.count(dids.len());
                for d in dids {
                    w.str(&d.to_string());
                }
                w.bytes(c.sender.as_bytes())
                    .bytes(c.commitment.as_bytes())
                    .bytes(&c.signature.0);
            }
            Message::Reveal(r) => {
                w.u8(KIND_REVEAL);
                w.bytes(r.sender.as_bytes()).bytes(r.mask.as_bytes());
                w.count(r.shares.len());
                for s in &r.shares {
                    w.u64(s.0);
                }
            }
        }
        w.finish()
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        r.expect_tag("MSGv1")?;
        let at = r.offset();
        let msg = match r.u8()? {
            KIND_COMMIT => {
                let mode_at = r.offset();
                let mode = r.u8()?;
                let n = r.u32()?;
                let mut dids = Vec::new();
                for _ in 0..n {
                    let at = r.offset();
                    dids.push(parse_draw_id(r.str()?).map_err(|e| DecodeError::Invalid {
                        offset: at,
                        reason: e.to_string(),
                    })?);
                }
                let draw_ref = match (mode, dids.len()) {
                    (0, 1) => DrawRef::Single(dids.pop().expect("one id")),
                    (1, n) if n > 0 => DrawRef::Chain(dids),
                    _ => {
                        return Err(DecodeError::Invalid {
                            offset: mode_at,
                            reason: format!("mode {mode} with {} draw ids", dids.len()),
                        })
                    }
                };
                Message::Commit(CommitMessage {
                    draw_ref,
                    sender: Fingerprint(r.fixed::<FINGERPRINT_LEN>()?),
                    commitment: Commitment(r.fixed::<DIGEST_LEN>()?),
                    signature: Signature(r.fixed::<SIGNATURE_LEN>()?),
                })
            }
            KIND_REVEAL => {
                let sender = Fingerprint(r.fixed::<FINGERPRINT_LEN>()?);
                let mask = Mask(r.fixed::<MASK_LEN>()?);
                let n = r.u32()?;
                let mut shares = Vec::new();
                for _ in 0..n {
                    shares.push(Share(r.u64()?));
                }
                Message::Reveal(RevealMessage { sender, mask, shares })
            }
            other => {
                return Err(DecodeError::Invalid {
                    offset: at,
                    reason: format!("unknown message kind {other:#04x}"),
                })
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

impl From<CommitMessage> for Message {
    fn from(c: CommitMessage) -> Self {
        Message::Commit(c)
    }
}

impl From<RevealMessage> for Message {
    fn from(r: RevealMessage) -> Self {
        Message::Reveal(r)
    }
}
