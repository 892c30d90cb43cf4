//! Deterministic worlds and transcripts shared by the integration tests.
#![allow(dead_code)]

pub mod procs;
pub mod taxonomy;

use fairdraw::audit::Transcript;
use fairdraw::crypto::{chain_commit, commit, Commitment, KeyDirectory, KeyPair, Mask, Share};
use fairdraw::model::{DrawList, DrawSpec, DrawTarget, Fingerprint};
use fairdraw::protocol::{CommitMessage, DrawOutcome, Message, RevealMessage, Session};
use fairdraw::specfile::SessionSetup;
use fairdraw::weights::{CandidateId, FractionWeight, WeightedEligibleList};
use fairdraw::{parse_draw_id, Phase};

pub const NAMES: [&str; 4] = ["alice", "bob", "carol", "dave"];

pub struct World {
    pub setup: SessionSetup,
    /// Sorted by fingerprint, the stakeholder order of every spec.
    pub parties: Vec<KeyPair>,
}

pub fn paper_weights() -> WeightedEligibleList {
    WeightedEligibleList::from_fractions(
        [(1, 6), (1, 4), (1, 4), (1, 3)]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (CandidateId::new(format!("e{i}")).unwrap(), FractionWeight::new(a, b).unwrap())),
    )
    .unwrap()
}

pub fn uniform(n: usize) -> WeightedEligibleList {
    WeightedEligibleList::uniform((0..n).map(|i| CandidateId::new(format!("c{i:02}")).unwrap())).unwrap()
}

/// `n` deterministic stakeholders and one spec per DID; more than one DID
/// makes a chain.
pub fn world(labels: &[&str], dids: &[&str], list: WeightedEligibleList) -> World {
    let mut parties: Vec<KeyPair> = labels.iter().map(|l| KeyPair::deterministic(l)).collect();
    let mut keys = KeyDirectory::new();
    for (kp, l) in parties.iter().zip(labels) {
        keys.insert(kp.public_key(), Some(l.to_string()));
    }
    parties.sort_by_key(|k| k.fingerprint());
    let specs: Vec<DrawSpec> = dids
        .iter()
        .map(|d| DrawSpec::new(parse_draw_id(d).unwrap(), keys.stakeholders(), list.clone(), "").unwrap())
        .collect();
    let session = if specs.len() == 1 {
        DrawTarget::Single(specs.into_iter().next().unwrap())
    } else {
        DrawTarget::Chain(DrawList::sorted(specs).unwrap())
    };
    World { setup: SessionSetup::new(session, keys).unwrap(), parties }
}

pub fn golden_world() -> World {
    world(&NAMES, &["123.456-7#0"], paper_weights())
}

pub fn chain_world() -> World {
    world(&NAMES, &["123.456-7#1", "123.456-7#2", "123.456-7#3"], uniform(7))
}

impl World {
    pub fn target(&self) -> &DrawTarget {
        &self.setup.session
    }

    pub fn fp(&self, i: usize) -> Fingerprint {
        self.parties[i].fingerprint()
    }

    pub fn mask(&self, i: usize) -> Mask {
        Mask([0xa0 + i as u8; 32])
    }

    /// Fixed honest shares: party `i` contributes `3i + 1 + draw` reduced.
    pub fn shares(&self, i: usize) -> Vec<Share> {
        self.target()
            .specs()
            .iter()
            .enumerate()
            .map(|(k, s)| Share((3 * i as u64 + 1 + k as u64) % s.index_space()))
            .collect()
    }

    pub fn commitment(&self, mask: &Mask, shares: &[Share]) -> Commitment {
        match self.target() {
            DrawTarget::Single(s) => commit(s, mask, shares[0]).unwrap(),
            DrawTarget::Chain(l) => chain_commit(l.draws(), mask, shares).unwrap(),
        }
    }

    pub fn commit_with(&self, i: usize, mask: &Mask, shares: &[Share]) -> Message {
        Message::Commit(CommitMessage::create(self.target(), &self.parties[i], self.commitment(mask, shares)))
    }

    pub fn commit_msg(&self, i: usize) -> Message {
        self.commit_with(i, &self.mask(i), &self.shares(i))
    }

    pub fn reveal_with(&self, i: usize, mask: Mask, shares: Vec<Share>) -> Message {
        Message::Reveal(RevealMessage { sender: self.fp(i), mask, shares })
    }

    pub fn reveal_msg(&self, i: usize) -> Message {
        self.reveal_with(i, self.mask(i), self.shares(i))
    }

    pub fn honest_messages(&self) -> Vec<Message> {
        let n = self.parties.len();
        (0..n).map(|i| self.commit_msg(i)).chain((0..n).map(|i| self.reveal_msg(i))).collect()
    }

    pub fn transcript(&self, messages: &[Message], server_view: bool) -> Transcript {
        let mut t = Transcript::new(&self.setup, server_view);
        for (k, m) in messages.iter().enumerate() {
            t.push(1_700_000_000_000 + 250 * k as u64, m.clone());
        }
        t
    }

    /// Honest run with the recomputed outcome claimed.
    pub fn honest_transcript(&self) -> Transcript {
        let msgs = self.honest_messages();
        let mut t = self.transcript(&msgs, false);
        t.claimed_outcome = Some(self.outcome_of(&msgs));
        t
    }

    pub fn outcome_of(&self, msgs: &[Message]) -> Vec<DrawOutcome> {
        let mut s = Session::observe(self.target().clone(), self.setup.keys.clone()).unwrap();
        for m in msgs {
            let _ = s.receive(m);
        }
        assert_eq!(s.phase(), Phase::Complete);
        s.outcome().unwrap().to_vec()
    }
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
