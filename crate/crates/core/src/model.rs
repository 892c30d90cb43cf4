//! Drawing vocabulary: identifiers, the [`DrawSpec`] record and its
//! canonical `DRAWv1` byte encoding.
//!
//! `DRAWv1` layout (all integers big-endian):
//!
//! ```text
//! "DRAWv1"
//! u32 len, DID rendered as UTF-8 "PID#counter"
//! u32 stakeholder count, then per stakeholder: u32 len, fingerprint bytes
//! u32 candidate count, then per candidate: u32 len, UTF-8 id, u64 weight
//! u32 len, info as UTF-8 (length 0 when absent)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{DecodeError, Reader, Writer};
use crate::weights::{CandidateId, WeightError, WeightedEligibleList, WeightedEntry};

pub const DRAW_TAG: &str = "DRAWv1";
pub const DID_SEPARATOR: char = '#';
pub const FINGERPRINT_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed draw id {text:?}: {reason}")]
    DrawId { text: String, reason: &'static str },
    #[error("invalid drawing specification: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("draw list is empty")]
    EmptyList,
    #[error("draws in a list must share one stakeholder set; {0} differs")]
    MixedStakeholders(String),
    #[error("draw list not sorted by draw id at {0}")]
    UnsortedList(String),
    #[error("duplicate draw id {0} in list")]
    DuplicateDraw(String),
    #[error("stakeholder count {0} exceeds the limit of {MAX_STAKEHOLDERS}")]
    TooManyStakeholders(usize),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Upper bound on stakeholders per drawing; keeps share sums within 128 bits.
pub const MAX_STAKEHOLDERS: usize = 1 << 16;

/// `proceeding # counter`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DrawId {
    proceeding: String,
    counter: u64,
}

impl DrawId {
    /// New ids may not contain the separator in the proceeding id.
    pub fn new(proceeding: impl Into<String>, counter: u64) -> Result<Self, ModelError> {
        let proceeding = proceeding.into();
        if proceeding.is_empty() {
            return Err(ModelError::DrawId { text: proceeding, reason: "empty proceeding id" });
        }
        if proceeding.contains(DID_SEPARATOR) {
            return Err(ModelError::DrawId {
                text: proceeding,
                reason: "proceeding id contains the reserved '#' separator",
            });
        }
        Ok(Self { proceeding, counter })
    }

    pub fn proceeding(&self) -> &str {
        &self.proceeding
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Same proceeding, counter + 1.
    pub fn successor(&self) -> Self {
        Self {
            proceeding: self.proceeding.clone(),
            counter: self.counter + 1,
        }
    }
}

/// Splits on the last `#`, so legacy proceeding ids containing `#` still parse.
pub fn parse_draw_id(text: &str) -> Result<DrawId, ModelError> {
    let err = |reason| ModelError::DrawId { text: text.to_string(), reason };
    let (proceeding, counter) = text.rsplit_once(DID_SEPARATOR).ok_or_else(|| err("missing separator"))?;
    if proceeding.is_empty() {
        return Err(err("empty proceeding id"));
    }
    if counter.is_empty() || !counter.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("counter is not a non-negative decimal integer"));
    }
    let counter = counter.parse().map_err(|_| err("counter out of range"))?;
    Ok(DrawId { proceeding: proceeding.to_string(), counter })
}

impl FromStr for DrawId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_draw_id(s)
    }
}

impl TryFrom<String> for DrawId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_draw_id(&s)
    }
}

impl From<DrawId> for String {
    fn from(d: DrawId) -> String {
        d.to_string()
    }
}

impl fmt::Display for DrawId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.proceeding, DID_SEPARATOR, self.counter)
    }
}

impl PartialOrd for DrawId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic on the rendered form.
impl Ord for DrawId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

/// SHA-256 digest of a stakeholder's public credential.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint(pub [u8; FINGERPRINT_LEN]);

impl Fingerprint {
    pub fn of_credential(credential: &[u8]) -> Self {
        Self(Sha256::digest(credential).into())
    }

    pub fn as_bytes(&self) -> &[u8; FINGERPRINT_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        crate::hex(&self.0)
    }

    /// First eight hex digits, for display.
    pub fn short(&self) -> String {
        crate::hex(&self.0[..4])
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.short())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::json::b64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::json::b64_fixed::deserialize(d).map(Fingerprint)
    }
}

/// A stakeholder; identity is the fingerprint alone; the display name is
/// never hashed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StakeholderId {
    pub fingerprint: Fingerprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

impl StakeholderId {
    pub fn new(fingerprint: Fingerprint) -> Self {
        Self { fingerprint, display_name: None }
    }

    pub fn named(fingerprint: Fingerprint, name: impl Into<String>) -> Self {
        Self { fingerprint, display_name: Some(name.into()) }
    }

    /// Display name if present, else the short fingerprint.
    pub fn label(&self) -> String {
        match &self.display_name {
            Some(n) => format!("{n} ({})", self.fingerprint.short()),
            None => self.fingerprint.short(),
        }
    }
}

impl PartialEq for StakeholderId {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
    }
}

impl Eq for StakeholderId {}

/// Every violated invariant of a candidate drawing specification.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MalformedDrawId(String),
    NoStakeholders,
    DuplicateStakeholder(Fingerprint),
    UnsortedStakeholders,
    TooManyStakeholders(usize),
    EmptyEligibleList,
    Eligible(WeightError),
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MalformedDrawId(e) => write!(f, "malformed DID: {e}"),
            Violation::NoStakeholders => f.write_str("no stakeholders"),
            Violation::DuplicateStakeholder(fp) => write!(f, "duplicate stakeholder {fp}"),
            Violation::UnsortedStakeholders => f.write_str("unsorted stakeholders"),
            Violation::TooManyStakeholders(n) => write!(f, "{n} stakeholders exceeds limit"),
            Violation::EmptyEligibleList => f.write_str("empty eligible list"),
            Violation::Eligible(e) => write!(f, "eligible list: {e}"),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("pass");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Unvalidated drawing specification, as read from input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDraft {
    pub did: String,
    pub stakeholders: Vec<StakeholderId>,
    pub eligible: Vec<WeightedEntry>,
    #[serde(default)]
    pub info: String,
}

/// Reports every invariant the draft violates.
pub fn validate_spec(draft: &SpecDraft) -> ValidationReport {
    let mut violations = Vec::new();
    if let Err(e) = parse_draw_id(&draft.did) {
        violations.push(Violation::MalformedDrawId(e.to_string()));
    }
    if draft.stakeholders.is_empty() {
        violations.push(Violation::NoStakeholders);
    }
    if draft.stakeholders.len() > MAX_STAKEHOLDERS {
        violations.push(Violation::TooManyStakeholders(draft.stakeholders.len()));
    }
    let mut fps: Vec<Fingerprint> = draft.stakeholders.iter().map(|s| s.fingerprint).collect();
    if fps.windows(2).any(|w| w[0] > w[1]) {
        violations.push(Violation::UnsortedStakeholders);
    }
    fps.sort();
    let mut seen_dup = None;
    for w in fps.windows(2) {
        if w[0] == w[1] && seen_dup != Some(w[0]) {
            violations.push(Violation::DuplicateStakeholder(w[0]));
            seen_dup = Some(w[0]);
        }
    }
    if draft.eligible.is_empty() {
        violations.push(Violation::EmptyEligibleList);
    } else if let Err(e) = WeightedEligibleList::from_canonical(draft.eligible.clone()) {
        violations.push(Violation::Eligible(e));
    }
    ValidationReport { violations }
}

/// The public context of one drawing: `{DID, S, E, info}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SpecDraft", into = "SpecDraft")]
pub struct DrawSpec {
    did: DrawId,
    stakeholders: Vec<StakeholderId>,
    eligible: WeightedEligibleList,
    info: String,
}

impl DrawSpec {
    /// Sorts stakeholders by fingerprint and validates the rest.
    pub fn new(
        did: DrawId,
        mut stakeholders: Vec<StakeholderId>,
        eligible: WeightedEligibleList,
        info: impl Into<String>,
    ) -> Result<Self, ModelError> {
        stakeholders.sort_by_key(|s| s.fingerprint);
        let draft = SpecDraft {
            did: did.to_string(),
            stakeholders,
            eligible: eligible.entries().to_vec(),
            info: info.into(),
        };
        let report = validate_spec(&draft);
        if !report.is_pass() {
            return Err(ModelError::Invalid(report));
        }
        Ok(Self { did, stakeholders: draft.stakeholders, eligible, info: draft.info })
    }

    pub fn did(&self) -> &DrawId {
        &self.did
    }

    pub fn stakeholders(&self) -> &[StakeholderId] {
        &self.stakeholders
    }

    pub fn eligible(&self) -> &WeightedEligibleList {
        &self.eligible
    }

    pub fn info(&self) -> &str {
        &self.info
    }

    pub fn index_space(&self) -> u64 {
        self.eligible.index_space()
    }

    pub fn has_stakeholder(&self, fp: &Fingerprint) -> bool {
        self.stakeholders
            .binary_search_by(|s| s.fingerprint.cmp(fp))
            .is_ok()
    }

    /// `DRAWv1` bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_tag(DRAW_TAG.as_bytes());
        w.str(&self.did.to_string());
        w.count(self.stakeholders.len());
        for s in &self.stakeholders {
            w.bytes(s.fingerprint.as_bytes());
        }
        w.count(self.eligible.len());
        for e in self.eligible.entries() {
            w.str(e.candidate.as_str()).u64(e.weight);
        }
        w.str(&self.info);
        w.finish()
    }

    /// Successor drawing after an abort: counter + 1, `removed` dropped.
    pub fn restart_without(&self, removed: &[Fingerprint]) -> Result<Self, ModelError> {
        let kept = self
            .stakeholders
            .iter()
            .filter(|s| !removed.contains(&s.fingerprint))
            .cloned()
            .collect();
        Self::new(self.did.successor(), kept, self.eligible.clone(), self.info.clone())
    }
}

impl TryFrom<SpecDraft> for DrawSpec {
    type Error = ModelError;
    fn try_from(draft: SpecDraft) -> Result<Self, Self::Error> {
        let report = validate_spec(&draft);
        if !report.is_pass() {
            return Err(ModelError::Invalid(report));
        }
        Ok(Self {
            did: parse_draw_id(&draft.did)?,
            stakeholders: draft.stakeholders,
            eligible: WeightedEligibleList::from_canonical(draft.eligible)?,
            info: draft.info,
        })
    }
}

impl From<DrawSpec> for SpecDraft {
    fn from(s: DrawSpec) -> Self {
        SpecDraft {
            did: s.did.to_string(),
            stakeholders: s.stakeholders,
            eligible: s.eligible.entries().to_vec(),
            info: s.info,
        }
    }
}

/// `DRAWv1` bytes of a valid spec.
pub fn canonical_encode(spec: &DrawSpec) -> Vec<u8> {
    spec.canonical_bytes()
}

/// Inverse of [`canonical_encode`]; display names are not encoded and come
/// back empty.
pub fn canonical_decode(bytes: &[u8]) -> Result<DrawSpec, ModelError> {
    let mut r = Reader::new(bytes);
    let spec = decode_spec(&mut r)?;
    r.finish()?;
    Ok(spec)
}

pub(crate) fn decode_spec(r: &mut Reader<'_>) -> Result<DrawSpec, ModelError> {
    r.expect_tag(DRAW_TAG)?;
    let did = r.str()?.to_string();
    let n = r.u32()?;
    let mut stakeholders = Vec::new();
    for _ in 0..n {
        stakeholders.push(StakeholderId::new(Fingerprint(r.fixed::<FINGERPRINT_LEN>()?)));
    }
    let m = r.u32()?;
    let mut eligible = Vec::new();
    for _ in 0..m {
        let at = r.offset();
        let candidate = CandidateId::new(r.str()?).map_err(|e| DecodeError::Invalid {
            offset: at,
            reason: e.to_string(),
        })?;
        eligible.push(WeightedEntry { candidate, weight: r.u64()? });
    }
    let info = r.str()?.to_string();
    DrawSpec::try_from(SpecDraft { did, stakeholders, eligible, info })
}

/// Drawings that share one stakeholder set, ordered by rendered DID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DrawSpec>", into = "Vec<DrawSpec>")]
pub struct DrawList {
    draws: Vec<DrawSpec>,
}

impl DrawList {
    pub fn new(draws: Vec<DrawSpec>) -> Result<Self, ModelError> {
        let first = draws.first().ok_or(ModelError::EmptyList)?;
        for d in &draws[1..] {
            if d.stakeholders != first.stakeholders {
                return Err(ModelError::MixedStakeholders(d.did.to_string()));
            }
        }
        for w in draws.windows(2) {
            match w[0].did.cmp(&w[1].did) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => {
                    return Err(ModelError::DuplicateDraw(w[1].did.to_string()))
                }
                std::cmp::Ordering::Greater => {
                    return Err(ModelError::UnsortedList(w[1].did.to_string()))
                }
            }
        }
        Ok(Self { draws })
    }

    /// Sorts by DID before validating.
    pub fn sorted(mut draws: Vec<DrawSpec>) -> Result<Self, ModelError> {
        draws.sort_by(|a, b| a.did.cmp(&b.did));
        Self::new(draws)
    }

    pub fn draws(&self) -> &[DrawSpec] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

impl TryFrom<Vec<DrawSpec>> for DrawList {
    type Error = ModelError;
    fn try_from(v: Vec<DrawSpec>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DrawList> for Vec<DrawSpec> {
    fn from(l: DrawList) -> Self {
        l.draws
    }
}

/// What one session draws: a single drawing or a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "draws", rename_all = "lowercase")]
pub enum DrawTarget {
    Single(DrawSpec),
    Chain(DrawList),
}

impl DrawTarget {
    pub fn specs(&self) -> &[DrawSpec] {
        match self {
            DrawTarget::Single(s) => std::slice::from_ref(s),
            DrawTarget::Chain(l) => l.draws(),
        }
    }

    pub fn stakeholders(&self) -> &[StakeholderId] {
        self.specs()[0].stakeholders()
    }

    pub fn has_stakeholder(&self, fp: &Fingerprint) -> bool {
        self.specs()[0].has_stakeholder(fp)
    }

    pub fn dids(&self) -> Vec<DrawId> {
        self.specs().iter().map(|s| s.did.clone()).collect()
    }

    pub fn is_chain(&self) -> bool {
        matches!(self, DrawTarget::Chain(_))
    }

    /// Number of shares each stakeholder contributes.
    pub fn share_count(&self) -> usize {
        self.specs().len()
    }

    /// Concatenated `DRAWv1` encodings, in draw order.
    pub fn context_bytes(&self) -> Vec<u8> {
        self.specs().iter().flat_map(|s| s.canonical_bytes()).collect()
    }
}
