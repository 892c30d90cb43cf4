//! Transcripts and third-party verification.
//!
//! A transcript is the public record of one session: the drawing context,
//! the stakeholders' public keys and every protocol message in the order it
//! was received. The auditor replays it through a fresh observer session,
//! recomputes each outcome from the revealed shares and only then compares
//! with whatever outcome the transcript claims.
//!
//! ```json
//! {
//!   "version": "transcriptv1",
//!   "hash": "SHA-256",
//!   "signature": "Ed25519",
//!   "server_view": false,
//!   "session": {"mode": "single", "draws": { ... }},
//!   "keys": [{"fingerprint": "...", "public_key": "...", "name": "judge"}],
//!   "events": [{"timestamp": 1700000000000, "message": {"type": "commit", ...}}],
//!   "claimed_outcome": [{"did": "X#0", "d": 3, "candidate": "e3"}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{KeyDirectory, HASH_NAME, SIGNATURE_SCHEME};
use crate::model::{DrawTarget, Fingerprint};
use crate::protocol::{
    AbortReason, CommitMessage, Delivery, DrawOutcome, DrawRef, IncidentKind, Message, Phase, Session,
};
use crate::specfile::SessionSetup;

pub const TRANSCRIPT_VERSION: &str = "transcriptv1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid transcript at byte {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Milliseconds since the Unix epoch, as stamped by the recorder.
    pub timestamp: u64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: String,
    pub hash: String,
    pub signature: String,
    /// Set on relay exports, which auditors must cross-check against
    /// stakeholder views.
    #[serde(default)]
    pub server_view: bool,
    pub session: DrawTarget,
    pub keys: KeyDirectory,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_outcome: Option<Vec<DrawOutcome>>,
}

impl Transcript {
    pub fn new(setup: &SessionSetup, server_view: bool) -> Self {
        Self {
            version: TRANSCRIPT_VERSION.into(),
            hash: HASH_NAME.into(),
            signature: SIGNATURE_SCHEME.into(),
            server_view,
            session: setup.session.clone(),
            keys: setup.keys.clone(),
            events: Vec::new(),
            claimed_outcome: None,
        }
    }

    pub fn push(&mut self, timestamp: u64, message: Message) {
        self.events.push(Event { timestamp, message });
    }

    /// Parses and checks the header; errors carry the byte offset of the
    /// offending input.
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let t: Transcript = serde_json::from_str(text).map_err(|e| FormatError {
            offset: crate::json::error_offset(text, &e),
            message: e.to_string(),
        })?;
        let at = |field: &str| text.find(&format!("\"{field}\"")).unwrap_or(0);
        let header = [
            ("version", t.version.as_str(), TRANSCRIPT_VERSION),
            ("hash", t.hash.as_str(), HASH_NAME),
            ("signature", t.signature.as_str(), SIGNATURE_SCHEME),
        ];
        for (field, found, want) in header {
            if found != want {
                return Err(FormatError {
                    offset: at(field),
                    message: format!("unsupported {field} {found:?}, expected {want:?}"),
                });
            }
        }
        if let Some(s) = t.session.stakeholders().iter().find(|s| t.keys.get(&s.fingerprint).is_none()) {
            return Err(FormatError { offset: at("keys"), message: format!("no public key for stakeholder {}", s.fingerprint) });
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn setup(&self) -> SessionSetup {
        SessionSetup { session: self.session.clone(), keys: self.keys.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Fair,
    Incomplete,
    Manipulated,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Fair => 0,
            Verdict::Manipulated => 2,
            Verdict::Incomplete => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    /// An opening published before every commitment was in.
    EarlyReveal,
    /// An opening that does not match its signed commitment.
    BindingViolation,
    /// Two different validly signed commitments for the same drawing.
    Equivocation,
    /// A commitment signed for a different drawing.
    Replay,
    /// A commitment whose signature does not verify.
    Forgery,
    UnknownSender,
    MalformedReveal,
    /// Claimed outcome differs from the recomputed one.
    OutcomeMismatch,
    MissingCommit,
    DenialToReveal,
    RelayOmission,
    RelayAddition,
    RelaySubstitution,
    /// Two views that do not describe the same session.
    SessionMismatch,
}

impl FindingKind {
    /// Liveness findings make a session Incomplete; all others are
    /// integrity failures.
    pub fn is_liveness(self) -> bool {
        matches!(self, FindingKind::MissingCommit | FindingKind::DenialToReveal)
    }
}

/// A message in a transcript, with its signed wire bytes so a report
/// stands on its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub transcript: usize,
    pub event: usize,
    #[serde(with = "crate::json::b64")]
    pub wire: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    /// Stakeholders proven responsible. Empty when the responsible party
    /// cannot be identified from public data (forgeries, replays, relay
    /// tampering).
    pub culprits: Vec<Fingerprint>,
    /// Stakeholder named in the offending message, when that is not proof of
    /// their involvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Fingerprint>,
    pub evidence: Vec<Evidence>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeholderStatus {
    pub fingerprint: Fingerprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub committed: bool,
    pub revealed: bool,
    pub culprit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdict: Verdict,
    pub phase: Phase,
    pub stakeholders: Vec<StakeholderStatus>,
    /// Recomputed from the revealed shares; empty unless the replay completes.
    pub outcome: Vec<DrawOutcome>,
    pub findings: Vec<Finding>,
}

impl AuditReport {
    pub fn kinds(&self) -> Vec<FindingKind> {
        self.findings.iter().map(|f| f.kind).collect()
    }
}

fn verdict_of(findings: &[Finding]) -> Verdict {
    findings
        .iter()
        .map(|f| if f.kind.is_liveness() { Verdict::Incomplete } else { Verdict::Manipulated })
        .max()
        .unwrap_or(Verdict::Fair)
}

fn evidence(transcript: usize, t: &Transcript, event: usize) -> Evidence {
    Evidence { transcript, event, wire: t.events[event].message.to_wire() }
}

fn position_of(t: &Transcript, msg: &Message) -> Option<usize> {
    t.events.iter().position(|e| &e.message == msg)
}

/// Replays `t` and classifies every deviation from the protocol.
pub fn audit_transcript(t: &Transcript) -> Result<AuditReport, FormatError> {
    let mut session = Session::observe(t.session.clone(), t.keys.clone())
        .map_err(|e| FormatError { offset: 0, message: e.to_string() })?;
    let mut findings = Vec::new();

    for (i, ev) in t.events.iter().enumerate() {
        let sender = *ev.message.sender();
        match session.receive(&ev.message) {
            Ok(Delivery::Recorded | Delivery::Duplicate) => {}
            Ok(Delivery::Aborted) => {
                let report = session.abort_report().expect("aborted session has a report");
                let kind = match report.reason {
                    AbortReason::Equivocation => FindingKind::Equivocation,
                    AbortReason::BindingViolation => FindingKind::BindingViolation,
                    AbortReason::Timeout { .. } => unreachable!("replay never times out"),
                };
                let mut refs: Vec<usize> = report.evidence.iter().filter_map(|m| position_of(t, m)).collect();
                refs.sort_unstable();
                refs.dedup();
                findings.push(Finding {
                    kind,
                    culprits: report.culprits.clone(),
                    subject: None,
                    evidence: refs.into_iter().map(|e| evidence(0, t, e)).collect(),
                    detail: format!("session aborted at event {i}"),
                });
            }
            Err(rejection) => {
                let (kind, proven) = match rejection.kind {
                    IncidentKind::EarlyReveal => (FindingKind::EarlyReveal, true),
                    IncidentKind::MalformedReveal => (FindingKind::MalformedReveal, false),
                    IncidentKind::Replay => (FindingKind::Replay, false),
                    IncidentKind::Forgery => (FindingKind::Forgery, false),
                    IncidentKind::UnknownSender => (FindingKind::UnknownSender, false),
                    // Caught by the equivocation scan below with both messages.
                    IncidentKind::LateEquivocation => continue,
                    // A different opening after completion cannot open the
                    // recorded commitment.
                    IncidentKind::WrongPhase if session.phase() == Phase::Complete && !ev.message.is_commit() => {
                        (FindingKind::BindingViolation, true)
                    }
                    // Traffic after an abort adds nothing to the abort finding.
                    IncidentKind::WrongPhase => continue,
                };
                let mut refs = vec![evidence(0, t, i)];
                if kind == FindingKind::BindingViolation {
                    if let Some(c) = session.commits().get(&sender) {
                        if let Some(at) = position_of(t, &Message::Commit(c.clone())) {
                            refs.insert(0, evidence(0, t, at));
                        }
                    }
                }
                findings.push(Finding {
                    kind,
                    culprits: if proven { vec![sender] } else { Vec::new() },
                    subject: (!proven).then_some(sender),
                    evidence: refs,
                    detail: rejection.detail,
                });
            }
        }
    }

    // Independent of replay order and of any earlier abort.
    let flagged: BTreeSet<Fingerprint> = findings
        .iter()
        .filter(|f| f.kind == FindingKind::Equivocation)
        .flat_map(|f| f.culprits.iter().copied())
        .collect();
    findings.extend(
        detect_equivocation(std::slice::from_ref(t))
            .into_iter()
            .filter(|f| !f.culprits.iter().any(|c| flagged.contains(c))),
    );

    let phase = session.phase();
    match phase {
        Phase::Committing | Phase::Revealing => {
            let kind = if phase == Phase::Committing { FindingKind::MissingCommit } else { FindingKind::DenialToReveal };
            let silent = session.pending();
            findings.push(Finding {
                kind,
                detail: format!("{} of {} stakeholders silent in {phase:?}", silent.len(), t.session.stakeholders().len()),
                culprits: silent,
                subject: None,
                evidence: Vec::new(),
            });
        }
        _ => {}
    }

    let outcome = session.outcome().map(<[_]>::to_vec).unwrap_or_default();
    // The claimed outcome is read only here, after recomputation.
    if let Some(claimed) = &t.claimed_outcome {
        if phase != Phase::Complete {
            findings.push(Finding {
                kind: FindingKind::OutcomeMismatch,
                culprits: Vec::new(),
                subject: None,
                evidence: Vec::new(),
                detail: format!("outcome claimed but the session ends {phase:?}"),
            });
        } else if *claimed != outcome {
            let show = |o: &[DrawOutcome]| o.iter().map(|x| format!("{}={}", x.did, x.d)).collect::<Vec<_>>().join(",");
            findings.push(Finding {
                kind: FindingKind::OutcomeMismatch,
                culprits: Vec::new(),
                subject: None,
                evidence: Vec::new(),
                detail: format!("claimed [{}], recomputed [{}]", show(claimed), show(&outcome)),
            });
        }
    }

    let culprits: BTreeSet<Fingerprint> = findings
        .iter()
        .filter(|f| !f.kind.is_liveness())
        .flat_map(|f| f.culprits.iter().copied())
        .collect();
    let stakeholders = session
        .status()
        .stakeholders
        .into_iter()
        .map(|s| StakeholderStatus {
            culprit: culprits.contains(&s.fingerprint),
            fingerprint: s.fingerprint,
            name: s.name,
            committed: s.committed,
            revealed: s.revealed,
        })
        .collect();

    Ok(AuditReport { verdict: verdict_of(&findings), phase, stakeholders, outcome, findings })
}

/// True if `c` is validly signed under the context `t` describes.
fn signed_in(t: &Transcript, c: &CommitMessage) -> bool {
    if c.draw_ref != DrawRef::of(&t.session) {
        return false;
    }
    match t.keys.get(&c.sender) {
        Some(key) => c.verify(&t.session, key).unwrap_or(false),
        None => false,
    }
}

/// Distinct validly signed commitments by one stakeholder for one drawing,
/// across any number of views.
pub fn detect_equivocation(transcripts: &[Transcript]) -> Vec<Finding> {
    type Key = (Fingerprint, String);
    let mut seen: BTreeMap<Key, Vec<(CommitMessage, usize, usize)>> = BTreeMap::new();
    for (ti, t) in transcripts.iter().enumerate() {
        for (ei, ev) in t.events.iter().enumerate() {
            let Message::Commit(c) = &ev.message else { continue };
            if !signed_in(t, c) {
                continue;
            }
            let versions = seen.entry((c.sender, c.draw_ref.render())).or_default();
            if !versions.iter().any(|(v, _, _)| v.commitment == c.commitment) {
                versions.push((c.clone(), ti, ei));
            }
        }
    }
    seen.into_iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|((sender, dids), v)| Finding {
            kind: FindingKind::Equivocation,
            culprits: vec![sender],
            subject: None,
            detail: format!("{} distinct signed commitments for {dids}", v.len()),
            evidence: v
                .iter()
                .map(|(_, ti, ei)| evidence(*ti, &transcripts[*ti], *ei))
                .collect(),
        })
        .collect()
}

/// Compares a stakeholder's own view with the relay's export. Transcript
/// index 0 in the evidence is `local`, 1 is `relay`.
pub fn cross_check_relay(local: &Transcript, relay: &Transcript) -> Vec<Finding> {
    if local.session != relay.session || local.keys != relay.keys {
        return vec![Finding {
            kind: FindingKind::SessionMismatch,
            culprits: Vec::new(),
            subject: None,
            evidence: Vec::new(),
            detail: "views describe different drawing contexts".into(),
        }];
    }
    let wires = |t: &Transcript| -> Vec<Vec<u8>> { t.events.iter().map(|e| e.message.to_wire()).collect() };
    let (lw, rw) = (wires(local), wires(relay));
    let in_relay: BTreeSet<&[u8]> = rw.iter().map(Vec::as_slice).collect();
    let in_local: BTreeSet<&[u8]> = lw.iter().map(Vec::as_slice).collect();

    // Same slot: same sender, same message kind.
    let slot = |m: &Message| (*m.sender(), m.is_commit());
    let mut findings = Vec::new();
    let mut paired = BTreeSet::new();
    for (li, w) in lw.iter().enumerate() {
        if in_relay.contains(w.as_slice()) {
            continue;
        }
        let m = &local.events[li].message;
        let replacement = relay
            .events
            .iter()
            .enumerate()
            .find(|(ri, e)| slot(&e.message) == slot(m) && !in_local.contains(rw[*ri].as_slice()));
        match replacement {
            Some((ri, _)) => {
                paired.insert(ri);
                findings.push(Finding {
                    kind: FindingKind::RelaySubstitution,
                    culprits: Vec::new(),
                    subject: Some(*m.sender()),
                    evidence: vec![evidence(0, local, li), evidence(1, relay, ri)],
                    detail: format!("relay serves a different {} from {}", kind_name(m), m.sender().short()),
                });
            }
            None => findings.push(Finding {
                kind: FindingKind::RelayOmission,
                culprits: Vec::new(),
                subject: Some(*m.sender()),
                evidence: vec![evidence(0, local, li)],
                detail: format!("{} from {} missing from the relay view", kind_name(m), m.sender().short()),
            }),
        }
    }
    for (ri, w) in rw.iter().enumerate() {
        if in_local.contains(w.as_slice()) || paired.contains(&ri) {
            continue;
        }
        let m = &relay.events[ri].message;
        findings.push(Finding {
            kind: FindingKind::RelayAddition,
            culprits: Vec::new(),
            subject: Some(*m.sender()),
            evidence: vec![evidence(1, relay, ri)],
            detail: format!("{} from {} never seen locally", kind_name(m), m.sender().short()),
        });
    }
    findings.extend(detect_equivocation(&[local.clone(), relay.clone()]));
    findings
}

fn kind_name(m: &Message) -> &'static str {
    if m.is_commit() {
        "commit"
    } else {
        "reveal"
    }
}

/// Combined result of auditing several views of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiReport {
    pub verdict: Verdict,
    pub reports: Vec<AuditReport>,
    /// Equivocation across views and relay cross-checks. Evidence indices
    /// refer to positions in `reports`.
    pub cross_findings: Vec<Finding>,
}

/// Audits every view, scans all of them for equivocation and cross-checks
/// each stakeholder view against each relay export. Two stakeholder views
/// are only compared for equivocation: differing traffic between them is
/// not evidence against a relay.
pub fn audit_views(views: &[Transcript]) -> Result<MultiReport, FormatError> {
    let reports = views.iter().map(audit_transcript).collect::<Result<Vec<_>, _>>()?;
    let mut cross_findings = Vec::new();
    if views.len() > 1 {
        cross_findings.extend(detect_equivocation(views));
        let relays: Vec<usize> = (0..views.len()).filter(|&i| views[i].server_view).collect();
        let locals: Vec<usize> = (0..views.len()).filter(|&i| !views[i].server_view).collect();
        let pairs: Vec<(usize, usize)> =
            locals.iter().flat_map(|&l| relays.iter().map(move |&r| (l, r))).collect();
        let equivocators: BTreeSet<Fingerprint> = cross_findings.iter().flat_map(|f| f.culprits.clone()).collect();
        for (a, b) in pairs {
            for mut f in cross_check_relay(&views[a], &views[b]) {
                if f.kind == FindingKind::Equivocation && f.culprits.iter().all(|c| equivocators.contains(c)) {
                    continue;
                }
                for e in &mut f.evidence {
                    e.transcript = if e.transcript == 0 { a } else { b };
                }
                cross_findings.push(f);
            }
        }
    }
    let verdict = reports
        .iter()
        .map(|r| r.verdict)
        .chain(std::iter::once(verdict_of(&cross_findings)))
        .max()
        .unwrap_or(Verdict::Fair);
    Ok(MultiReport { verdict, reports, cross_findings })
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).expect("kind serializes");
        write!(f, "{}", kind.as_str().unwrap_or_default())?;
        if !self.culprits.is_empty() {
            let names: Vec<String> = self.culprits.iter().map(|c| c.short()).collect();
            write!(f, " [culprit {}]", names.join(", "))?;
        }
        if let Some(s) = &self.subject {
            write!(f, " [names {}]", s.short())?;
        }
        write!(f, ": {}", self.detail)?;
        if !self.evidence.is_empty() {
            let refs: Vec<String> = self.evidence.iter().map(|e| format!("{}:{}", e.transcript, e.event)).collect();
            write!(f, " (events {})", refs.join(" "))?;
        }
        Ok(())
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict)?;
        writeln!(f, "phase: {:?}", self.phase)?;
        for s in &self.stakeholders {
            let mark = |b: bool| if b { "yes" } else { "no" };
            writeln!(
                f,
                "  {} {:<12} committed={} revealed={}{}",
                s.fingerprint.short(),
                s.name.as_deref().unwrap_or("-"),
                mark(s.committed),
                mark(s.revealed),
                if s.culprit { " CULPRIT" } else { "" }
            )?;
        }
        for o in &self.outcome {
            writeln!(f, "{}", o.line())?;
        }
        for x in &self.findings {
            writeln!(f, "finding: {x}")?;
        }
        Ok(())
    }
}
