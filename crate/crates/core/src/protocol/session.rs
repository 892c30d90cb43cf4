use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::message::{CommitMessage, DrawRef, Message, RevealMessage};
use crate::crypto::{self, CryptoError, KeyDirectory, KeyPair, Mask, Share};
use crate::model::{DrawId, DrawTarget, Fingerprint, ModelError};
use crate::weights::CandidateId;

/// Liveness bound per phase when the caller configures none.
pub const DEFAULT_PHASE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{0} is not a stakeholder of this drawing")]
    NotAStakeholder(Fingerprint),
    #[error("no public key for stakeholder {0}")]
    MissingKey(Fingerprint),
    #[error("opening must carry {expected} shares, found {found}")]
    OpeningLength { expected: usize, found: usize },
    #[error("session is {0:?}; the outcome exists only once Complete")]
    NotComplete(Phase),
    #[error("reveal withheld: session is {0:?} and not every commitment is verified")]
    RevealGate(Phase),
    #[error("index space must be at least 1")]
    EmptyIndexSpace,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Committing,
    Revealing,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub did: DrawId,
    pub d: u64,
    pub candidate: CandidateId,
}

impl DrawOutcome {
    /// `DID<TAB>d<TAB>candidate`.
    pub fn line(&self) -> String {
        format!("{}\t{}\t{}", self.did, self.d, self.candidate)
    }
}

/// Why a delivered message was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    /// Signature missing, malformed, or not verifying under the sender's key.
    Forgery,
    UnknownSender,
    /// Commitment addressed to a different drawing.
    Replay,
    /// Opening disclosed before every commitment was verified.
    EarlyReveal,
    /// Share count differs from the number of drawings.
    MalformedReveal,
    /// Second, different commitment after the outcome was fixed.
    LateEquivocation,
    /// Message arrived in a phase that cannot accept it.
    WrongPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{kind:?} from {sender}: {detail}")]
pub struct Rejection {
    pub kind: IncidentKind,
    pub sender: Fingerprint,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Recorded,
    /// Identical message already recorded; no state change.
    Duplicate,
    /// The message proved misbehavior and ended the session.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// Two different validly signed commitments from one sender.
    Equivocation,
    /// An opening that does not match the signed commitment.
    BindingViolation,
    /// Phase deadline passed with stakeholders still silent.
    Timeout { phase: Phase },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortReport {
    pub reason: AbortReason,
    pub culprits: Vec<Fingerprint>,
    pub evidence: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeholderProgress {
    pub fingerprint: Fingerprint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub committed: bool,
    pub revealed: bool,
}

/// Observable summary of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub phase: Phase,
    pub stakeholders: Vec<StakeholderProgress>,
    pub outcome: Vec<DrawOutcome>,
    pub abort: Option<AbortReport>,
}

/// `d = (Σ shares) mod index_space`.
pub fn compute_result(shares: &[Share], index_space: u64) -> Result<u64, ProtocolError> {
    if index_space == 0 {
        return Err(ProtocolError::EmptyIndexSpace);
    }
    let sum: u128 = shares.iter().map(|s| u128::from(s.0)).sum();
    Ok((sum % u128::from(index_space)) as u64)
}

/// One drawing session as seen by a stakeholder or an observer. Deliveries
/// are applied one at a time; clone for a snapshot.
#[derive(Debug, Clone)]
pub struct Session {
    target: DrawTarget,
    keys: KeyDirectory,
    phase: Phase,
    commits: BTreeMap<Fingerprint, CommitMessage>,
    reveals: BTreeMap<Fingerprint, RevealMessage>,
    outcome: Vec<DrawOutcome>,
    abort: Option<AbortReport>,
    incidents: Vec<Rejection>,
}

impl Session {
    /// A session in `Setup`. Every stakeholder needs a key in `keys`.
    pub fn new(target: DrawTarget, keys: KeyDirectory) -> Result<Self, ProtocolError> {
        for s in target.stakeholders() {
            if keys.get(&s.fingerprint).is_none() {
                return Err(ProtocolError::MissingKey(s.fingerprint));
            }
        }
        Ok(Self {
            target,
            keys,
            phase: Phase::Setup,
            commits: BTreeMap::new(),
            reveals: BTreeMap::new(),
            outcome: Vec::new(),
            abort: None,
            incidents: Vec::new(),
        })
    }

    /// A third-party view, already accepting commitments.
    pub fn observe(target: DrawTarget, keys: KeyDirectory) -> Result<Self, ProtocolError> {
        let mut s = Self::new(target, keys)?;
        s.begin();
        Ok(s)
    }

    /// `Setup → Committing`.
    pub fn begin(&mut self) {
        if self.phase == Phase::Setup {
            self.phase = Phase::Committing;
        }
    }

    pub fn target(&self) -> &DrawTarget {
        &self.target
    }

    pub fn keys(&self) -> &KeyDirectory {
        &self.keys
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn commits(&self) -> &BTreeMap<Fingerprint, CommitMessage> {
        &self.commits
    }

    pub fn reveals(&self) -> &BTreeMap<Fingerprint, RevealMessage> {
        &self.reveals
    }

    pub fn incidents(&self) -> &[Rejection] {
        &self.incidents
    }

    pub fn abort_report(&self) -> Option<&AbortReport> {
        self.abort.as_ref()
    }

    /// Per-draw `(DID, d, candidate)`, in draw order.
    pub fn outcome(&self) -> Result<&[DrawOutcome], ProtocolError> {
        if self.phase != Phase::Complete {
            return Err(ProtocolError::NotComplete(self.phase));
        }
        Ok(&self.outcome)
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            phase: self.phase,
            stakeholders: self
                .target
                .stakeholders()
                .iter()
                .map(|s| StakeholderProgress {
                    fingerprint: s.fingerprint,
                    name: self.keys.name_of(&s.fingerprint).map(str::to_string),
                    committed: self.commits.contains_key(&s.fingerprint),
                    revealed: self.reveals.contains_key(&s.fingerprint),
                })
                .collect(),
            outcome: self.outcome.clone(),
            abort: self.abort.clone(),
        }
    }

    pub fn receive(&mut self, msg: &Message) -> Result<Delivery, Rejection> {
        match msg {
            Message::Commit(c) => self.receive_commit(c),
            Message::Reveal(r) => self.receive_reveal(r),
        }
    }

    fn reject(&mut self, kind: IncidentKind, sender: Fingerprint, detail: impl Into<String>) -> Rejection {
        let r = Rejection { kind, sender, detail: detail.into() };
        self.incidents.push(r.clone());
        r
    }

    fn abort(&mut self, reason: AbortReason, culprits: Vec<Fingerprint>, evidence: Vec<Message>) {
        self.phase = Phase::Aborted;
        self.outcome.clear();
        self.abort = Some(AbortReport { reason, culprits, evidence });
    }

    pub fn receive_commit(&mut self, msg: &CommitMessage) -> Result<Delivery, Rejection> {
        let sender = msg.sender;
        if matches!(self.phase, Phase::Setup | Phase::Aborted) {
            return Err(self.reject(IncidentKind::WrongPhase, sender, format!("commit during {:?}", self.phase)));
        }
        let expected = DrawRef::of(&self.target);
        if msg.draw_ref != expected {
            return Err(self.reject(
                IncidentKind::Replay,
                sender,
                format!("commitment for {} delivered to {}", msg.draw_ref.render(), expected.render()),
            ));
        }
        if !self.target.has_stakeholder(&sender) {
            return Err(self.reject(IncidentKind::UnknownSender, sender, "sender is not a stakeholder"));
        }
        let key = *self.keys.get(&sender).expect("keys cover stakeholders");
        match msg.verify(&self.target, &key) {
            Ok(true) => {}
            Ok(false) => return Err(self.reject(IncidentKind::Forgery, sender, "signature does not verify")),
            Err(e) => return Err(self.reject(IncidentKind::Forgery, sender, e.to_string())),
        }
        if let Some(existing) = self.commits.get(&sender) {
            if existing == msg {
                return Ok(Delivery::Duplicate);
            }
            let evidence = vec![Message::Commit(existing.clone()), Message::Commit(msg.clone())];
            if self.phase == Phase::Complete {
                return Err(self.reject(
                    IncidentKind::LateEquivocation,
                    sender,
                    "second signed commitment after completion",
                ));
            }
            self.abort(AbortReason::Equivocation, vec![sender], evidence);
            return Ok(Delivery::Aborted);
        }
        debug_assert_eq!(self.phase, Phase::Committing);
        self.commits.insert(sender, msg.clone());
        if self.commits.len() == self.target.stakeholders().len() {
            self.phase = Phase::Revealing;
        }
        Ok(Delivery::Recorded)
    }

    pub fn receive_reveal(&mut self, msg: &RevealMessage) -> Result<Delivery, Rejection> {
        let sender = msg.sender;
        if !self.target.has_stakeholder(&sender) {
            return Err(self.reject(IncidentKind::UnknownSender, sender, "sender is not a stakeholder"));
        }
        match self.phase {
            Phase::Committing => {
                return Err(self.reject(
                    IncidentKind::EarlyReveal,
                    sender,
                    format!("opening disclosed with {} of {} commitments", self.commits.len(), self.target.stakeholders().len()),
                ))
            }
            Phase::Setup | Phase::Aborted => {
                return Err(self.reject(IncidentKind::WrongPhase, sender, format!("reveal during {:?}", self.phase)))
            }
            Phase::Revealing | Phase::Complete => {}
        }
        if msg.shares.len() != self.target.share_count() {
            return Err(self.reject(
                IncidentKind::MalformedReveal,
                sender,
                format!("{} shares for {} drawings", msg.shares.len(), self.target.share_count()),
            ));
        }
        if let Some(existing) = self.reveals.get(&sender) {
            if existing == msg {
                return Ok(Delivery::Duplicate);
            }
        }
        if self.phase == Phase::Complete {
            return Err(self.reject(IncidentKind::WrongPhase, sender, "different reveal after completion"));
        }
        let commit = self.commits.get(&sender).expect("all commitments recorded in Revealing");
        let opens = match &self.target {
            DrawTarget::Single(spec) => crypto::open(&commit.commitment, spec, &msg.mask, msg.shares[0]),
            DrawTarget::Chain(list) => crypto::verify_chain(&commit.commitment, list.draws(), &msg.mask, &msg.shares),
        };
        if !opens || self.reveals.contains_key(&sender) {
            let evidence = vec![Message::Commit(commit.clone()), Message::Reveal(msg.clone())];
            self.abort(AbortReason::BindingViolation, vec![sender], evidence);
            return Ok(Delivery::Aborted);
        }
        self.reveals.insert(sender, msg.clone());
        if self.reveals.len() == self.target.stakeholders().len() {
            self.outcome = compute_outcome(&self.target, self.reveals.values());
            self.phase = Phase::Complete;
        }
        Ok(Delivery::Recorded)
    }

    /// Stakeholders the current phase is still waiting on.
    pub fn pending(&self) -> Vec<Fingerprint> {
        let have: &dyn Fn(&Fingerprint) -> bool = match self.phase {
            Phase::Committing => &|fp| self.commits.contains_key(fp),
            Phase::Revealing => &|fp| self.reveals.contains_key(fp),
            _ => return Vec::new(),
        };
        self.target
            .stakeholders()
            .iter()
            .map(|s| s.fingerprint)
            .filter(|fp| !have(fp))
            .collect()
    }

    /// Call once the phase deadline has passed. Aborts naming every silent
    /// stakeholder; no-op outside Committing and Revealing.
    pub fn handle_timeout(&mut self) -> Option<&AbortReport> {
        let phase = self.phase;
        if !matches!(phase, Phase::Committing | Phase::Revealing) {
            return None;
        }
        let silent = self.pending();
        self.abort(AbortReason::Timeout { phase }, silent, Vec::new());
        self.abort.as_ref()
    }
}

fn compute_outcome<'a>(target: &DrawTarget, reveals: impl Iterator<Item = &'a RevealMessage> + Clone) -> Vec<DrawOutcome> {
    target
        .specs()
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let shares: Vec<Share> = reveals.clone().map(|r| r.shares[i]).collect();
            let d = compute_result(&shares, spec.index_space()).expect("index space is positive");
            DrawOutcome {
                did: spec.did().clone(),
                d,
                candidate: spec.eligible().candidate_at(d).expect("d < index space").clone(),
            }
        })
        .collect()
}

/// `(per-draw outcomes)` of a completed session.
pub fn session_outcome(session: &Session) -> Result<&[DrawOutcome], ProtocolError> {
    session.outcome()
}

/// The private opening a stakeholder keeps until reveal time.
#[derive(Clone)]
pub struct Opening {
    mask: Mask,
    shares: Vec<Share>,
}

impl std::fmt::Debug for Opening {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Opening(..)")
    }
}

/// A stakeholder's side of a session: the shared state machine plus the
/// secret opening, which leaves only through [`Participant::reveal`].
#[derive(Debug)]
pub struct Participant {
    session: Session,
    me: Fingerprint,
    opening: Opening,
    own_commit: CommitMessage,
}

/// Commit phase for `keypair`'s stakeholder: fresh mask and shares,
/// commitment (chained for lists), signature. Returns the message to
/// broadcast.
pub fn start_session(
    target: DrawTarget,
    keys: KeyDirectory,
    keypair: &KeyPair,
) -> Result<(Participant, CommitMessage), ProtocolError> {
    start_session_with(&mut OsRng, target, keys, keypair)
}

pub fn start_session_with<R: RngCore + CryptoRng>(
    rng: &mut R,
    target: DrawTarget,
    keys: KeyDirectory,
    keypair: &KeyPair,
) -> Result<(Participant, CommitMessage), ProtocolError> {
    let mask = crypto::gen_mask_with(rng)?;
    let shares = target
        .specs()
        .iter()
        .map(|s| crypto::gen_share_with(rng, s.index_space()))
        .collect::<Result<Vec<_>, _>>()?;
    Participant::with_opening(target, keys, keypair, mask, shares)
}

impl Participant {
    /// Commit phase with a caller-chosen opening.
    pub fn with_opening(
        target: DrawTarget,
        keys: KeyDirectory,
        keypair: &KeyPair,
        mask: Mask,
        shares: Vec<Share>,
    ) -> Result<(Self, CommitMessage), ProtocolError> {
        let me = keypair.fingerprint();
        if !target.has_stakeholder(&me) {
            return Err(ProtocolError::NotAStakeholder(me));
        }
        if shares.len() != target.share_count() {
            return Err(ProtocolError::OpeningLength { expected: target.share_count(), found: shares.len() });
        }
        let commitment = match &target {
            DrawTarget::Single(spec) => crypto::commit(spec, &mask, shares[0])?,
            DrawTarget::Chain(list) => crypto::chain_commit(list.draws(), &mask, &shares)?,
        };
        let own_commit = CommitMessage::create(&target, keypair, commitment);
        let mut session = Session::new(target, keys)?;
        match session.keys.get(&me) {
            Some(pk) if *pk == keypair.public_key() => {}
            _ => return Err(ProtocolError::MissingKey(me)),
        }
        session.begin();
        session
            .receive_commit(&own_commit)
            .expect("own commitment verifies");
        let participant = Self { session, me, opening: Opening { mask, shares }, own_commit: own_commit.clone() };
        Ok((participant, own_commit))
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.me
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn phase(&self) -> Phase {
        self.session.phase
    }

    pub fn own_commit(&self) -> &CommitMessage {
        &self.own_commit
    }

    pub fn receive(&mut self, msg: &Message) -> Result<Delivery, Rejection> {
        self.session.receive(msg)
    }

    pub fn handle_timeout(&mut self) -> Option<&AbortReport> {
        self.session.handle_timeout()
    }

    /// The opening, released only once every commitment is recorded and
    /// verified.
    pub fn reveal(&self) -> Result<RevealMessage, ProtocolError> {
        match self.session.phase {
            Phase::Revealing | Phase::Complete => Ok(RevealMessage {
                sender: self.me,
                mask: self.opening.mask.clone(),
                shares: self.opening.shares.clone(),
            }),
            other => Err(ProtocolError::RevealGate(other)),
        }
    }
}

/// Tracks how long the current phase has been open.
#[derive(Debug, Clone)]
pub struct PhaseClock {
    timeout: Duration,
    phase: Phase,
    since: Instant,
}

impl PhaseClock {
    pub fn new(timeout: Duration, phase: Phase) -> Self {
        Self { timeout, phase, since: Instant::now() }
    }

    /// Restarts the clock whenever the phase changes; true once the
    /// current phase has been open longer than the timeout.
    pub fn expired(&mut self, phase: Phase, now: Instant) -> bool {
        if phase != self.phase {
            self.phase = phase;
            self.since = now;
        }
        now.duration_since(self.since) > self.timeout
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DrawList, DrawSpec, StakeholderId};
    use crate::weights::WeightedEligibleList;

    fn keys(n: usize) -> (Vec<KeyPair>, KeyDirectory) {
        let pairs: Vec<KeyPair> = (0..n).map(|i| KeyPair::deterministic(&format!("s{i}"))).collect();
        let mut dir = KeyDirectory::new();
        for (i, k) in pairs.iter().enumerate() {
            dir.insert(k.public_key(), Some(format!("s{i}")));
        }
        (pairs, dir)
    }

    fn spec(dir: &KeyDirectory, counter: u64, weights: &[u64]) -> DrawSpec {
        DrawSpec::new(
            DrawId::new("X", counter).unwrap(),
            dir.stakeholders(),
            WeightedEligibleList::from_weights(
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| (CandidateId::new(format!("e{i}")).unwrap(), w)),
            )
            .unwrap(),
            "",
        )
        .unwrap()
    }

    fn run(
        target: &DrawTarget,
        pairs: &[KeyPair],
        dir: &KeyDirectory,
        shares: &[Vec<u64>],
    ) -> (Vec<Participant>, Vec<CommitMessage>) {
        let mut parts = Vec::new();
        let mut commits = Vec::new();
        for (k, s) in pairs.iter().zip(shares) {
            let (p, c) = Participant::with_opening(
                target.clone(),
                dir.clone(),
                k,
                Mask(k.fingerprint().0),
                s.iter().map(|&v| Share(v)).collect(),
            )
            .unwrap();
            parts.push(p);
            commits.push(c);
        }
        (parts, commits)
    }

    #[test]
    fn compute_result_cases() {
        assert_eq!(compute_result(&[Share(0); 3], 5).unwrap(), 0);
        assert_eq!(compute_result(&[Share(3), Share(5), Share(9)], 7).unwrap(), 3);
        assert_eq!(compute_result(&[Share(12)], 5).unwrap(), 2);
        assert!(compute_result(&[Share(1)], 0).is_err());
        assert_eq!(compute_result(&[Share(u64::MAX), Share(u64::MAX)], 10).unwrap(), ((2 * u128::from(u64::MAX)) % 10) as u64);
    }

    #[test]
    fn honest_single_draw_completes() {
        let (pairs, dir) = keys(4);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![1], vec![2], vec![3], vec![4]]);
        for p in parts.iter_mut() {
            for c in &commits {
                p.receive(&c.clone().into()).unwrap();
            }
            assert_eq!(p.phase(), Phase::Revealing);
        }
        let reveals: Vec<_> = parts.iter().map(|p| p.reveal().unwrap()).collect();
        for p in parts.iter_mut() {
            for r in &reveals {
                p.receive(&r.clone().into()).unwrap();
            }
            let out = p.session().outcome().unwrap();
            assert_eq!(out[0].d, 0); // 1+2+3+4 = 10 ≡ 0 (mod 5)
            assert_eq!(out[0].candidate.as_str(), "e0");
        }
    }

    #[test]
    fn start_session_commit_verifies() {
        let (pairs, dir) = keys(2);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (p, c) = start_session(target.clone(), dir.clone(), &pairs[0]).unwrap();
        assert!(c.verify(&target, &pairs[0].public_key()).unwrap());
        assert_eq!(p.phase(), Phase::Committing);
        assert_eq!(p.session().commits().len(), 1);
    }

    #[test]
    fn outsider_cannot_start() {
        let (_, dir) = keys(2);
        let outsider = KeyPair::deterministic("outsider");
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        assert!(matches!(
            start_session(target, dir, &outsider),
            Err(ProtocolError::NotAStakeholder(_))
        ));
    }

    #[test]
    fn reveal_gated_until_all_commits() {
        let (pairs, dir) = keys(3);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![0], vec![0], vec![0]]);
        assert!(matches!(parts[0].reveal(), Err(ProtocolError::RevealGate(Phase::Committing))));
        parts[0].receive(&commits[1].clone().into()).unwrap();
        assert!(parts[0].reveal().is_err());
        parts[0].receive(&commits[2].clone().into()).unwrap();
        assert!(parts[0].reveal().is_ok());
    }

    #[test]
    fn duplicate_commit_is_idempotent() {
        let (pairs, dir) = keys(3);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![0], vec![0], vec![0]]);
        let m: Message = commits[1].clone().into();
        assert_eq!(parts[0].receive(&m).unwrap(), Delivery::Recorded);
        let before = parts[0].session().status();
        assert_eq!(parts[0].receive(&m).unwrap(), Delivery::Duplicate);
        assert_eq!(parts[0].session().status(), before);
    }

    #[test]
    fn cross_session_replay_rejected() {
        let (pairs, dir) = keys(2);
        let old = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let new = DrawTarget::Single(spec(&dir, 1, &[1; 5]));
        let (_, old_commits) = run(&old, &pairs, &dir, &[vec![0], vec![0]]);
        let (mut parts, _) = run(&new, &pairs, &dir, &[vec![0], vec![0]]);
        let err = parts[0].receive(&old_commits[1].clone().into()).unwrap_err();
        assert_eq!(err.kind, IncidentKind::Replay);
        assert_eq!(parts[0].session().incidents().len(), 1);
        assert_eq!(parts[0].phase(), Phase::Committing);
    }

    #[test]
    fn bad_signature_rejected_without_state_change() {
        let (pairs, dir) = keys(2);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, mut commits) = run(&target, &pairs, &dir, &[vec![0], vec![0]]);
        commits[1].signature.0[3] ^= 1;
        let err = parts[0].receive(&commits[1].clone().into()).unwrap_err();
        assert_eq!(err.kind, IncidentKind::Forgery);
        assert_eq!(parts[0].session().commits().len(), 1);
    }

    #[test]
    fn equivocation_aborts_with_evidence() {
        let (pairs, dir) = keys(3);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![0], vec![1], vec![0]]);
        let (_, other) = Participant::with_opening(target.clone(), dir.clone(), &pairs[1], Mask([5; 32]), vec![Share(4)]).unwrap();
        parts[0].receive(&commits[1].clone().into()).unwrap();
        assert_eq!(parts[0].receive(&other.into()).unwrap(), Delivery::Aborted);
        let report = parts[0].session().abort_report().unwrap();
        assert_eq!(report.reason, AbortReason::Equivocation);
        assert_eq!(report.culprits, vec![pairs[1].fingerprint()]);
        assert_eq!(report.evidence.len(), 2);
    }

    #[test]
    fn early_reveal_rejected_and_logged() {
        let (pairs, dir) = keys(2);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, _) = run(&target, &pairs, &dir, &[vec![0], vec![0]]);
        let early = RevealMessage { sender: pairs[1].fingerprint(), mask: Mask([0; 32]), shares: vec![Share(0)] };
        let err = parts[0].receive(&early.into()).unwrap_err();
        assert_eq!(err.kind, IncidentKind::EarlyReveal);
        assert_eq!(parts[0].phase(), Phase::Committing);
    }

    #[test]
    fn altered_share_aborts_naming_sender() {
        let (pairs, dir) = keys(2);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![1], vec![2]]);
        parts[0].receive(&commits[1].clone().into()).unwrap();
        assert!(parts[1].reveal().is_err());
        parts[1].receive(&commits[0].clone().into()).unwrap();
        let mut bad = parts[1].reveal().unwrap();
        bad.shares[0].0 += 1;
        assert_eq!(parts[0].receive(&bad.into()).unwrap(), Delivery::Aborted);
        let report = parts[0].session().abort_report().unwrap();
        assert_eq!(report.reason, AbortReason::BindingViolation);
        assert_eq!(report.culprits, vec![pairs[1].fingerprint()]);
        assert!(parts[0].session().outcome().is_err());
    }

    #[test]
    fn chain_reveal_with_mid_share_altered_aborts() {
        let (pairs, dir) = keys(2);
        let list = DrawList::new(vec![spec(&dir, 0, &[1; 5]), spec(&dir, 1, &[1; 3]), spec(&dir, 2, &[2, 2])]).unwrap();
        let target = DrawTarget::Chain(list);
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![1, 2, 3], vec![4, 0, 1]]);
        parts[0].receive(&commits[1].clone().into()).unwrap();
        parts[1].receive(&commits[0].clone().into()).unwrap();
        let mut bad = parts[1].reveal().unwrap();
        bad.shares[1].0 = 1;
        assert_eq!(parts[0].receive(&bad.into()).unwrap(), Delivery::Aborted);
    }

    #[test]
    fn chain_outcomes_in_did_order() {
        let (pairs, dir) = keys(2);
        let list = DrawList::new(vec![spec(&dir, 0, &[1; 5]), spec(&dir, 1, &[1, 2, 3, 4])]).unwrap();
        let target = DrawTarget::Chain(list);
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![1, 4], vec![2, 5]]);
        parts[0].receive(&commits[1].clone().into()).unwrap();
        parts[1].receive(&commits[0].clone().into()).unwrap();
        let r1 = parts[1].reveal().unwrap();
        let r0 = parts[0].reveal().unwrap();
        parts[0].receive(&r0.into()).unwrap();
        parts[0].receive(&r1.into()).unwrap();
        let out = parts[0].session().outcome().unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].did.to_string(), "X#0");
        assert_eq!((out[0].d, out[0].candidate.as_str()), (3, "e3"));
        assert_eq!((out[1].d, out[1].candidate.as_str()), (9, "e3"));
    }

    #[test]
    fn reveal_share_count_mismatch_rejected() {
        let (pairs, dir) = keys(2);
        let list = DrawList::new(vec![spec(&dir, 0, &[1; 5]), spec(&dir, 1, &[1; 3])]).unwrap();
        let target = DrawTarget::Chain(list);
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![1, 2], vec![0, 0]]);
        parts[0].receive(&commits[1].clone().into()).unwrap();
        let mut r = parts[0].reveal().unwrap();
        r.shares.pop();
        assert_eq!(parts[0].receive(&r.into()).unwrap_err().kind, IncidentKind::MalformedReveal);
    }

    #[test]
    fn timeout_in_reveal_names_silent_party() {
        let (pairs, dir) = keys(4);
        let target = DrawTarget::Single(spec(&dir, 1, &[1; 5]));
        let (mut parts, commits) = run(&target, &pairs, &dir, &[vec![0], vec![1], vec![2], vec![3]]);
        for c in &commits[1..] {
            parts[0].receive(&c.clone().into()).unwrap();
        }
        for i in 0..3 {
            for c in &commits {
                let _ = parts[i + 1].receive(&c.clone().into());
            }
        }
        let reveals: Vec<_> = parts[..3].iter().map(|p| p.reveal().unwrap()).collect();
        for r in reveals {
            parts[0].receive(&r.into()).unwrap();
        }
        let report = parts[0].handle_timeout().unwrap().clone();
        assert_eq!(report.reason, AbortReason::Timeout { phase: Phase::Revealing });
        assert_eq!(report.culprits, vec![pairs[3].fingerprint()]);
        assert_eq!(parts[0].phase(), Phase::Aborted);
        let successor = target.specs()[0].restart_without(&report.culprits).unwrap();
        assert_eq!(successor.did().to_string(), "X#2");
        assert_eq!(successor.stakeholders().len(), 3);
    }

    #[test]
    fn timeout_after_completion_is_noop() {
        let (pairs, dir) = keys(1);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (mut parts, _) = run(&target, &pairs, &dir, &[vec![3]]);
        let r = parts[0].reveal().unwrap();
        parts[0].receive(&r.into()).unwrap();
        assert!(parts[0].handle_timeout().is_none());
        assert_eq!(parts[0].session().outcome().unwrap()[0].d, 3);
    }

    #[test]
    fn outcome_requires_complete() {
        let (pairs, dir) = keys(2);
        let target = DrawTarget::Single(spec(&dir, 0, &[1; 5]));
        let (parts, _) = run(&target, &pairs, &dir, &[vec![0], vec![0]]);
        assert!(matches!(session_outcome(parts[0].session()), Err(ProtocolError::NotComplete(Phase::Committing))));
    }

    #[test]
    fn phase_clock_resets_on_transition() {
        let start = Instant::now();
        let mut clock = PhaseClock::new(Duration::from_secs(5), Phase::Committing);
        assert!(!clock.expired(Phase::Committing, start + Duration::from_secs(4)));
        assert!(clock.expired(Phase::Committing, start + Duration::from_secs(6)));
        assert!(!clock.expired(Phase::Revealing, start + Duration::from_secs(7)));
        assert!(clock.expired(Phase::Revealing, start + Duration::from_secs(13)));
    }

    #[test]
    fn shares_above_index_space_reduce() {
        // A hand-built commitment to an out-of-range share still opens; the
        // result reduces it.
        let (pairs, dir) = keys(1);
        let s = spec(&dir, 0, &[1; 5]);
        let target = DrawTarget::Single(s.clone());
        let mut session = Session::observe(target.clone(), dir.clone()).unwrap();
        let mask = Mask([3; 32]);
        use sha2::Digest;
        let mut h = sha2::Sha256::new();
        h.update(crypto::COMMIT_TAG);
        h.update(s.canonical_bytes());
        h.update(mask.0);
        h.update(7u64.to_be_bytes());
        let c = crypto::Commitment(h.finalize().into());
        let msg = CommitMessage::create(&target, &pairs[0], c);
        session.receive_commit(&msg).unwrap();
        session
            .receive_reveal(&RevealMessage { sender: pairs[0].fingerprint(), mask, shares: vec![Share(7)] })
            .unwrap();
        assert_eq!(session.outcome().unwrap()[0].d, 2);
    }

    #[test]
    fn stakeholder_ids_by_name() {
        let (_, dir) = keys(2);
        let names: Vec<_> = dir.stakeholders().into_iter().map(|s: StakeholderId| s.display_name.unwrap()).collect();
        assert_eq!(names.len(), 2);
    }
}
