//! One constructed attack per misbehavior class, with the finding the
//! auditor must produce.

use std::collections::BTreeSet;

use fairdraw::audit::{audit_views, Finding, FindingKind, MultiReport, Transcript};
use fairdraw::crypto::{Mask, Share};
use fairdraw::model::Fingerprint;
use fairdraw::protocol::Message;
use fairdraw::relay::Relay;

use super::{golden_world, world, paper_weights, NAMES};

pub struct Scenario {
    pub name: &'static str,
    pub views: Vec<Transcript>,
    /// Every finding kind the audit must emit, and nothing else.
    pub kinds: BTreeSet<FindingKind>,
    /// The designated finding.
    pub designated: FindingKind,
    pub culprits: Vec<Fingerprint>,
    pub subject: Option<Fingerprint>,
    /// Findings are read from the cross-view section only (relay tampering:
    /// the relay view on its own shows what the relay chose to show).
    pub cross_only: bool,
}

pub struct Outcome {
    pub report: MultiReport,
    pub findings: Vec<Finding>,
}

impl Scenario {
    pub fn run(&self) -> Outcome {
        let report = audit_views(&self.views).expect("fixtures parse");
        let mut findings = report.cross_findings.clone();
        if !self.cross_only {
            findings.extend(report.reports.iter().flat_map(|r| r.findings.clone()));
        }
        Outcome { report, findings }
    }

    /// `Ok` when the audit emits exactly the expected kinds and the
    /// designated finding names the expected parties.
    pub fn check(&self) -> Result<(), String> {
        let out = self.run();
        let kinds: BTreeSet<FindingKind> = out.findings.iter().map(|f| f.kind).collect();
        if kinds != self.kinds {
            return Err(format!("{}: kinds {kinds:?}, expected {:?}", self.name, self.kinds));
        }
        let hit = out
            .findings
            .iter()
            .find(|f| f.kind == self.designated && f.culprits == self.culprits && f.subject == self.subject);
        match hit {
            Some(f) if !f.evidence.is_empty() || f.kind.is_liveness() => Ok(()),
            Some(_) => Err(format!("{}: designated finding carries no evidence", self.name)),
            None => Err(format!(
                "{}: no {:?} naming culprits {:?} / subject {:?}; got {:?}",
                self.name,
                self.designated,
                self.culprits,
                self.subject,
                out.findings.iter().map(ToString::to_string).collect::<Vec<_>>()
            )),
        }
    }
}

fn kinds(k: &[FindingKind]) -> BTreeSet<FindingKind> {
    k.iter().copied().collect()
}

pub fn early_reveal() -> Scenario {
    let w = golden_world();
    let m = w.honest_messages();
    // Party 0 discloses its opening while two commitments are still missing.
    let msgs = vec![m[0].clone(), m[1].clone(), m[4].clone(), m[2].clone(), m[3].clone(), m[4].clone(), m[5].clone(), m[6].clone(), m[7].clone()];
    Scenario {
        name: "early reveal",
        views: vec![w.transcript(&msgs, false)],
        kinds: kinds(&[FindingKind::EarlyReveal]),
        designated: FindingKind::EarlyReveal,
        culprits: vec![w.fp(0)],
        subject: None,
        cross_only: false,
    }
}

pub fn binding_violation() -> Scenario {
    let w = golden_world();
    let mut m = w.honest_messages();
    let mut shares = w.shares(2);
    shares[0] = Share((shares[0].0 + 1) % 12);
    m[6] = w.reveal_with(2, w.mask(2), shares);
    Scenario {
        name: "binding violation",
        views: vec![w.transcript(&m, false)],
        kinds: kinds(&[FindingKind::BindingViolation]),
        designated: FindingKind::BindingViolation,
        culprits: vec![w.fp(2)],
        subject: None,
        cross_only: false,
    }
}

/// Party 1 shows one commitment to some peers and another to the rest; each
/// view is internally consistent and completes.
pub fn equivocation() -> Scenario {
    let w = golden_world();
    let a = w.honest_messages();
    let mut b = a.clone();
    let alt_mask = Mask([0x33; 32]);
    let alt_shares = vec![Share(11)];
    b[1] = w.commit_with(1, &alt_mask, &alt_shares);
    b[5] = w.reveal_with(1, alt_mask, alt_shares);
    Scenario {
        name: "equivocation",
        views: vec![w.transcript(&a, false), w.transcript(&b, false)],
        kinds: kinds(&[FindingKind::Equivocation]),
        designated: FindingKind::Equivocation,
        culprits: vec![w.fp(1)],
        subject: None,
        cross_only: false,
    }
}

/// A commitment party 3 signed for `123.456-7#0` delivered into `#1`.
pub fn replay() -> Scenario {
    let old = golden_world();
    let w = world(&NAMES, &["123.456-7#1"], paper_weights());
    let mut m = w.honest_messages();
    m.insert(2, old.commit_msg(3));
    Scenario {
        name: "replay",
        views: vec![w.transcript(&m, false)],
        kinds: kinds(&[FindingKind::Replay]),
        designated: FindingKind::Replay,
        culprits: vec![],
        subject: Some(w.fp(3)),
        cross_only: false,
    }
}

/// A commitment claiming party 0 with a signature that does not verify.
pub fn forgery() -> Scenario {
    let w = golden_world();
    let mut m = w.honest_messages();
    let mut forged = w.commit_with(0, &Mask([0x44; 32]), &[Share(0)]);
    if let Message::Commit(c) = &mut forged {
        c.signature.0[17] ^= 0x01;
    }
    m.insert(0, forged);
    Scenario {
        name: "signature forgery",
        views: vec![w.transcript(&m, false)],
        kinds: kinds(&[FindingKind::Forgery]),
        designated: FindingKind::Forgery,
        culprits: vec![],
        subject: Some(w.fp(0)),
        cross_only: false,
    }
}

pub fn denial_to_reveal() -> Scenario {
    let w = golden_world();
    let mut m = w.honest_messages();
    m.remove(7);
    Scenario {
        name: "denial to reveal",
        views: vec![w.transcript(&m, false)],
        kinds: kinds(&[FindingKind::DenialToReveal]),
        designated: FindingKind::DenialToReveal,
        culprits: vec![w.fp(3)],
        subject: None,
        cross_only: false,
    }
}

fn relay_with_honest_run() -> (super::World, Relay, String) {
    let w = golden_world();
    let relay = Relay::in_memory(600);
    let id = relay.create_session(w.setup.clone()).unwrap();
    for m in w.honest_messages() {
        relay.post_message(&id, m).unwrap();
    }
    (w, relay, id)
}

/// The relay hides party 3's reveal from its export.
pub fn relay_omission() -> Scenario {
    let (w, relay, id) = relay_with_honest_run();
    relay.inject_drop(&id, 7).unwrap();
    let local = w.transcript(&w.honest_messages(), false);
    Scenario {
        name: "relay omission",
        views: vec![local, relay.export_transcript(&id).unwrap()],
        kinds: kinds(&[FindingKind::RelayOmission]),
        designated: FindingKind::RelayOmission,
        culprits: vec![],
        subject: Some(w.fp(3)),
        cross_only: true,
    }
}

/// The relay, colluding with party 0, serves a second commitment party 0
/// signed in place of the one everyone else saw.
pub fn relay_substitution() -> Scenario {
    let (w, relay, id) = relay_with_honest_run();
    relay.inject_substitute(&id, 0, w.commit_with(0, &Mask([0x77; 32]), &[Share(5)])).unwrap();
    let local = w.transcript(&w.honest_messages(), false);
    Scenario {
        name: "relay substitution",
        views: vec![local, relay.export_transcript(&id).unwrap()],
        kinds: kinds(&[FindingKind::RelaySubstitution, FindingKind::Equivocation]),
        designated: FindingKind::RelaySubstitution,
        culprits: vec![],
        subject: Some(w.fp(0)),
        cross_only: true,
    }
}

/// Equivocation half of the substitution scenario: the signer is named.
pub fn relay_substitution_signer() -> Scenario {
    Scenario {
        name: "relay substitution (signer)",
        designated: FindingKind::Equivocation,
        culprits: vec![golden_world().fp(0)],
        subject: None,
        ..relay_substitution()
    }
}

pub fn all() -> Vec<Scenario> {
    vec![
        early_reveal(),
        binding_violation(),
        equivocation(),
        replay(),
        forgery(),
        denial_to_reveal(),
        relay_omission(),
        relay_substitution(),
        relay_substitution_signer(),
    ]
}
