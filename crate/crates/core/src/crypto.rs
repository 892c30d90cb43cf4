//! Commitment scheme and signature boundary.
//!
//! Commit digest: `SHA-256("COMMITv1" ‖ DRAWv1(spec) ‖ mask ‖ u64be(share))`.
//! Chain link `i`: `SHA-256("CHAINv1" ‖ DRAWv1(spec_i) ‖ link_{i-1} ‖ u64be(share_i))`
//! with `link_{-1} = mask`. Signatures are Ed25519 with strict verification.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::model::{DrawSpec, Fingerprint, StakeholderId};

pub const COMMIT_TAG: &[u8] = b"COMMITv1";
pub const CHAIN_TAG: &[u8] = b"CHAINv1";
pub const MSG_TAG: &[u8] = b"MSGv1";

pub const MASK_LEN: usize = 32;
pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

pub const HASH_NAME: &str = "SHA-256";
pub const SIGNATURE_SCHEME: &str = "Ed25519";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("index space must be at least 1")]
    EmptyIndexSpace,
    #[error("share {share} out of range for index space {index_space}")]
    ShareOutOfRange { share: u64, index_space: u64 },
    #[error("chain has {specs} drawings but {shares} shares")]
    ChainLength { specs: usize, shares: usize },
    #[error("malformed public key: {0}")]
    MalformedKey(String),
    #[error("malformed signature: expected {SIGNATURE_LEN} bytes, found {0}")]
    MalformedSignature(usize),
    #[error("fingerprint {fingerprint} does not match its public key")]
    FingerprintMismatch { fingerprint: String },
}

/// 256-bit hiding value.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask(pub [u8; MASK_LEN]);

impl Mask {
    pub fn as_bytes(&self) -> &[u8; MASK_LEN] {
        &self.0
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Mask(..)")
    }
}

/// A stakeholder's contribution to one drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Share(pub u64);

/// A commitment digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Commitment(pub [u8; DIGEST_LEN]);

impl Commitment {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", crate::hex(&self.0[..6]))
    }
}

impl Serialize for Commitment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::json::b64_fixed::deserialize(d).map(Commitment)
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::json::b64_fixed::deserialize(d).map(Mask)
    }
}

/// Fresh mask from the operating system CSPRNG. Never falls back.
pub fn gen_mask() -> Result<Mask, CryptoError> {
    gen_mask_with(&mut OsRng)
}

pub fn gen_mask_with<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Mask, CryptoError> {
    let mut bytes = [0u8; MASK_LEN];
    rng.try_fill_bytes(&mut bytes)
        .map_err(|e| CryptoError::Entropy(e.to_string()))?;
    Ok(Mask(bytes))
}

/// Uniform share in `[0, index_space)`.
pub fn gen_share(index_space: u64) -> Result<Share, CryptoError> {
    gen_share_with(&mut OsRng, index_space)
}

/// Rejection sampling over 64-bit words: draws at or above the largest
/// multiple of `index_space` are discarded.
pub fn gen_share_with<R: RngCore + CryptoRng>(
    rng: &mut R,
    index_space: u64,
) -> Result<Share, CryptoError> {
    if index_space == 0 {
        return Err(CryptoError::EmptyIndexSpace);
    }
    // Number of values in the acceptance zone: floor(2^64 / n) * n.
    let zone = u64::MAX - (u64::MAX % index_space + 1) % index_space;
    loop {
        let mut word = [0u8; 8];
        rng.try_fill_bytes(&mut word)
            .map_err(|e| CryptoError::Entropy(e.to_string()))?;
        let v = u64::from_be_bytes(word);
        if v <= zone {
            return Ok(Share(v % index_space));
        }
    }
}

fn digest(tag: &[u8], spec: &DrawSpec, link: &[u8; 32], share: Share) -> Commitment {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(spec.canonical_bytes());
    h.update(link);
    h.update(share.0.to_be_bytes());
    Commitment(h.finalize().into())
}

fn check_share(spec: &DrawSpec, share: Share) -> Result<(), CryptoError> {
    if share.0 >= spec.index_space() {
        return Err(CryptoError::ShareOutOfRange {
            share: share.0,
            index_space: spec.index_space(),
        });
    }
    Ok(())
}

/// Single-drawing commitment.
pub fn commit(spec: &DrawSpec, mask: &Mask, share: Share) -> Result<Commitment, CryptoError> {
    check_share(spec, share)?;
    Ok(digest(COMMIT_TAG, spec, &mask.0, share))
}

/// True iff `(spec, mask, share)` opens `commitment`. Any share value is
/// accepted here; results reduce it modulo the index space.
pub fn open(commitment: &Commitment, spec: &DrawSpec, mask: &Mask, share: Share) -> bool {
    let recomputed = digest(COMMIT_TAG, spec, &mask.0, share);
    recomputed.0.ct_eq(&commitment.0).into()
}

/// Every link of a chain, first to last.
pub fn chain_links(specs: &[DrawSpec], mask: &Mask, shares: &[Share]) -> Result<Vec<Commitment>, CryptoError> {
    if specs.len() != shares.len() || specs.is_empty() {
        return Err(CryptoError::ChainLength { specs: specs.len(), shares: shares.len() });
    }
    let mut link = mask.0;
    let mut out = Vec::with_capacity(specs.len());
    for (spec, &share) in specs.iter().zip(shares) {
        let c = digest(CHAIN_TAG, spec, &link, share);
        link = c.0;
        out.push(c);
    }
    Ok(out)
}

/// Final chain digest, the only one that gets signed.
pub fn chain_commit(specs: &[DrawSpec], mask: &Mask, shares: &[Share]) -> Result<Commitment, CryptoError> {
    for (spec, &share) in specs.iter().zip(shares) {
        check_share(spec, share)?;
    }
    Ok(*chain_links(specs, mask, shares)?.last().expect("non-empty chain"))
}

/// Recomputes the chain from the opening and compares with the signed digest.
pub fn verify_chain(commitment: &Commitment, specs: &[DrawSpec], mask: &Mask, shares: &[Share]) -> bool {
    match chain_links(specs, mask, shares) {
        Ok(links) => links.last().expect("non-empty chain").0.ct_eq(&commitment.0).into(),
        Err(_) => false,
    }
}

/// Encoded Ed25519 verifying key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_credential(&self.0)
    }

    fn verifying_key(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_bytes(&self.0).map_err(|e| CryptoError::MalformedKey(e.to_string()))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", crate::hex(&self.0[..6]))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::json::b64_fixed::deserialize(d).map(PublicKey)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        bytes
            .try_into()
            .map(Signature)
            .map_err(|_| CryptoError::MalformedSignature(bytes.len()))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", crate::hex(&self.0[..6]))
    }
}

impl Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::json::b64_fixed::deserialize(d).map(Signature)
    }
}

pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate() -> Self {
        Self { signing: SigningKey::generate(&mut OsRng) }
    }

    pub fn generate_with<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self { signing: SigningKey::generate(rng) }
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(&secret) }
    }

    /// Reproducible key for tests and fixtures. Never use for real drawings.
    pub fn deterministic(label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"fairdraw deterministic test key\0");
        h.update(label.as_bytes());
        Self::from_secret(h.finalize().into())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.public_key().fingerprint()
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        Signature(self.signing.sign(payload).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({})", self.fingerprint().short())
    }
}

pub fn sign_message(keypair: &KeyPair, payload: &[u8]) -> Signature {
    keypair.sign(payload)
}

/// `Ok(false)` for a well-formed signature that does not verify; `Err` for
/// encodings that are not a key or signature at all.
pub fn verify_message(public_key: &PublicKey, payload: &[u8], signature: &[u8]) -> Result<bool, CryptoError> {
    let key = public_key.verifying_key()?;
    let sig = Signature::from_slice(signature)?;
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    Ok(key.verify_strict(payload, &sig).is_ok())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub fingerprint: Fingerprint,
    pub public_key: PublicKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Pre-distributed stakeholder keys. Certificate validation, if any, happens
/// before keys are added here.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<KeyEntry>", into = "Vec<KeyEntry>")]
pub struct KeyDirectory {
    keys: BTreeMap<Fingerprint, KeyEntry>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, public_key: PublicKey, name: Option<String>) -> Fingerprint {
        let fingerprint = public_key.fingerprint();
        self.keys.insert(fingerprint, KeyEntry { fingerprint, public_key, name });
        fingerprint
    }

    pub fn get(&self, fp: &Fingerprint) -> Option<&PublicKey> {
        self.keys.get(fp).map(|e| &e.public_key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &KeyEntry> {
        self.keys.values()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Stakeholder ids carrying the directory's display names.
    pub fn stakeholders(&self) -> Vec<StakeholderId> {
        self.keys
            .values()
            .map(|e| StakeholderId { fingerprint: e.fingerprint, display_name: e.name.clone() })
            .collect()
    }

    pub fn name_of(&self, fp: &Fingerprint) -> Option<&str> {
        self.keys.get(fp).and_then(|e| e.name.as_deref())
    }
}

impl TryFrom<Vec<KeyEntry>> for KeyDirectory {
    type Error = CryptoError;
    fn try_from(entries: Vec<KeyEntry>) -> Result<Self, Self::Error> {
        let mut dir = KeyDirectory::new();
        for e in entries {
            if e.public_key.fingerprint() != e.fingerprint {
                return Err(CryptoError::FingerprintMismatch { fingerprint: e.fingerprint.to_hex() });
            }
            e.public_key.verifying_key()?;
            dir.insert(e.public_key, e.name);
        }
        Ok(dir)
    }
}

impl From<KeyDirectory> for Vec<KeyEntry> {
    fn from(d: KeyDirectory) -> Self {
        d.keys.into_values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DrawId, StakeholderId};
    use crate::weights::{CandidateId, WeightedEligibleList};
    use rand::SeedableRng;

    fn spec(counter: u64, n: usize) -> DrawSpec {
        DrawSpec::new(
            DrawId::new("X", counter).unwrap(),
            vec![StakeholderId::new(Fingerprint([7; 32]))],
            WeightedEligibleList::uniform((0..n).map(|i| CandidateId::new(format!("c{i}")).unwrap()))
                .unwrap(),
            "",
        )
        .unwrap()
    }

    #[test]
    fn masks_are_32_bytes_and_distinct() {
        let a = gen_mask().unwrap();
        let b = gen_mask().unwrap();
        assert_eq!(a.0.len(), 32);
        assert_ne!(a, b);
    }

    #[test]
    fn share_of_unit_space_is_zero() {
        for _ in 0..100 {
            assert_eq!(gen_share(1).unwrap(), Share(0));
        }
    }

    #[test]
    fn share_range() {
        for _ in 0..10_000 {
            assert!(gen_share(7).unwrap().0 < 7);
        }
    }

    #[test]
    fn share_of_empty_space_rejected() {
        assert_eq!(gen_share(0).unwrap_err(), CryptoError::EmptyIndexSpace);
    }

    #[test]
    fn share_handles_huge_space() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(gen_share_with(&mut rng, u64::MAX).unwrap().0 < u64::MAX);
        }
        assert!(gen_share_with(&mut rng, 1 << 63).unwrap().0 < 1 << 63);
    }

    #[test]
    fn commit_is_deterministic_and_opens() {
        let s = spec(0, 5);
        let m = Mask([9; 32]);
        let c = commit(&s, &m, Share(3)).unwrap();
        assert_eq!(c, commit(&s, &m, Share(3)).unwrap());
        assert!(open(&c, &s, &m, Share(3)));
        assert!(!open(&c, &s, &m, Share(4)));
    }

    #[test]
    fn mask_bit_flip_changes_digest() {
        let s = spec(0, 5);
        let c = commit(&s, &Mask([9; 32]), Share(1)).unwrap();
        let mut flipped = [9u8; 32];
        flipped[17] ^= 0x04;
        assert_ne!(c, commit(&s, &Mask(flipped), Share(1)).unwrap());
    }

    #[test]
    fn altered_counter_does_not_open() {
        let m = Mask([1; 32]);
        let c = commit(&spec(0, 5), &m, Share(2)).unwrap();
        assert!(!open(&c, &spec(1, 5), &m, Share(2)));
    }

    #[test]
    fn commit_rejects_out_of_range_share() {
        assert_eq!(
            commit(&spec(0, 5), &Mask([0; 32]), Share(5)).unwrap_err(),
            CryptoError::ShareOutOfRange { share: 5, index_space: 5 }
        );
    }

    #[test]
    fn single_and_chain_digests_differ() {
        let s = spec(0, 5);
        let m = Mask([4; 32]);
        let single = commit(&s, &m, Share(1)).unwrap();
        let chain = chain_commit(std::slice::from_ref(&s), &m, &[Share(1)]).unwrap();
        assert_ne!(single, chain);
        assert!(!open(&chain, &s, &m, Share(1)));
    }

    #[test]
    fn chain_links_feed_forward() {
        let specs = [spec(0, 5), spec(1, 3)];
        let m = Mask([4; 32]);
        let links = chain_links(&specs, &m, &[Share(1), Share(2)]).unwrap();
        let second = chain_links(&specs[1..], &Mask(links[0].0), &[Share(2)]).unwrap();
        assert_eq!(links[1], second[0]);
    }

    #[test]
    fn chain_length_mismatch() {
        let specs = [spec(0, 5), spec(1, 3)];
        assert!(matches!(
            chain_commit(&specs, &Mask([0; 32]), &[Share(0)]),
            Err(CryptoError::ChainLength { .. })
        ));
        assert!(!verify_chain(&Commitment([0; 32]), &specs, &Mask([0; 32]), &[Share(0)]));
    }

    #[test]
    fn sign_and_verify() {
        let a = KeyPair::deterministic("a");
        let b = KeyPair::deterministic("b");
        let sig = a.sign(b"payload");
        assert!(verify_message(&a.public_key(), b"payload", &sig.0).unwrap());
        assert!(!verify_message(&b.public_key(), b"payload", &sig.0).unwrap());
        assert!(!verify_message(&a.public_key(), b"paylobd", &sig.0).unwrap());
    }

    #[test]
    fn malformed_encodings_are_errors_not_false() {
        let a = KeyPair::deterministic("a");
        let sig = a.sign(b"m");
        assert_eq!(
            verify_message(&a.public_key(), b"m", &sig.0[..63]).unwrap_err(),
            CryptoError::MalformedSignature(63)
        );
        // y = 2 does not decompress to a curve point.
        let mut bad = [0u8; 32];
        bad[0] = 2;
        assert!(matches!(
            verify_message(&PublicKey(bad), b"m", &sig.0),
            Err(CryptoError::MalformedKey(_))
        ));
    }

    #[test]
    fn non_canonical_signature_scalar_rejected() {
        let a = KeyPair::deterministic("a");
        let mut sig = a.sign(b"m").0;
        // s + L is the classic malleated form; strict verification refuses it.
        const L: [u8; 32] = [
            0xed, 0xd3, 0xf5, 0x5c, 0x1a, 0x63, 0x12, 0x58, 0xd6, 0x9c, 0xf7, 0xa2, 0xde, 0xf9,
            0xde, 0x14, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0x10,
        ];
        let mut carry = 0u16;
        for i in 0..32 {
            let v = u16::from(sig[32 + i]) + u16::from(L[i]) + carry;
            sig[32 + i] = v as u8;
            carry = v >> 8;
        }
        assert!(!verify_message(&a.public_key(), b"m", &sig).unwrap());
    }

    #[test]
    fn directory_rejects_mismatched_fingerprint() {
        let a = KeyPair::deterministic("a");
        let entry = KeyEntry { fingerprint: Fingerprint([0; 32]), public_key: a.public_key(), name: None };
        assert!(matches!(
            KeyDirectory::try_from(vec![entry]),
            Err(CryptoError::FingerprintMismatch { .. })
        ));
    }
}
