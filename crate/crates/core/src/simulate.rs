//! In-process Monte Carlo runs of complete sessions, for checking the
//! outcome distribution with and without colluding stakeholders.
//!
//! Each trial runs the real commitment, signature and session code: every
//! stakeholder commits and signs, an observer session verifies all
//! commitments and openings, and the outcome is read from the observer.
//! Simulated stakeholders get fresh key pairs derived from the seed; only
//! the count and order of the drawing's stakeholders are kept.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{self, CryptoError, KeyDirectory, KeyPair, Mask, Share};
use crate::model::{DrawList, DrawSpec, DrawTarget, ModelError};
use crate::protocol::{CommitMessage, Phase, RevealMessage, Session};
use crate::specfile::SessionSetup;
use crate::stats::{chi_square, ChiSquare};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trial {trial} ended {phase:?} instead of Complete")]
    Stalled { trial: u64, phase: Phase },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
}

/// Colluders are the first `colluders` stakeholders in canonical order.
/// They commit to the same fixed share for every drawing and trial, which is
/// the best they can do without seeing honest shares first.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Adversary {
    pub colluders: usize,
    pub fixed_share: u64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub adversary: Adversary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub candidate: String,
    pub count: u64,
    pub frequency: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawTable {
    pub did: String,
    pub index_space: u64,
    pub rows: Vec<Row>,
    /// Absent when the list has a single candidate.
    pub chi_square: Option<ChiSquare>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub trials: u64,
    pub seed: u64,
    pub stakeholders: usize,
    pub adversary: Adversary,
    /// Every stakeholder colludes: the distribution claim does not apply.
    pub no_honest_party: bool,
    pub draws: Vec<DrawTable>,
}

impl SimReport {
    pub fn banner(&self) -> Option<String> {
        self.no_honest_party.then(|| {
            format!(
                "WARNING: all {} stakeholders collude; no honest share remains and the outcome is theirs to choose",
                self.stakeholders
            )
        })
    }
}

fn rebuild(target: &DrawTarget, keys: &KeyDirectory) -> Result<DrawTarget, ModelError> {
    let stakeholders = keys.stakeholders();
    let specs = target
        .specs()
        .iter()
        .map(|s| DrawSpec::new(s.did().clone(), stakeholders.clone(), s.eligible().clone(), s.info()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match target {
        DrawTarget::Single(_) => DrawTarget::Single(specs.into_iter().next().expect("one spec")),
        DrawTarget::Chain(_) => DrawTarget::Chain(DrawList::new(specs)?),
    })
}

fn commitment(target: &DrawTarget, mask: &Mask, shares: &[Share]) -> Result<crypto::Commitment, CryptoError> {
    match target {
        DrawTarget::Single(spec) => crypto::commit(spec, mask, shares[0]),
        DrawTarget::Chain(list) => crypto::chain_commit(list.draws(), mask, shares),
    }
}

pub fn simulate(setup: &SessionSetup, config: &SimConfig) -> Result<SimReport, SimError> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let n = setup.session.stakeholders().len();
    let mut pairs: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate_with(&mut rng)).collect();
    pairs.sort_by_key(|k| k.fingerprint());
    let mut keys = KeyDirectory::new();
    for k in &pairs {
        keys.insert(k.public_key(), None);
    }
    let target = rebuild(&setup.session, &keys)?;
    let specs = target.specs();
    let colluders = config.adversary.colluders.min(n);

    let fixed: Vec<Share> = specs
        .iter()
        .map(|s| Share(config.adversary.fixed_share % s.index_space()))
        .collect();
    let fixed_mask = Mask([0x5a; 32]);
    let mut collusion = Vec::with_capacity(colluders);
    for k in &pairs[..colluders] {
        // Fixed shares and mask: one signed commitment reused every trial.
        let c = commitment(&target, &fixed_mask, &fixed)?;
        collusion.push((
            CommitMessage::create(&target, k, c),
            RevealMessage { sender: k.fingerprint(), mask: fixed_mask.clone(), shares: fixed.clone() },
        ));
    }

    let mut counts: Vec<Vec<u64>> = specs.iter().map(|s| vec![0; s.eligible().len()]).collect();
    let base = Session::observe(target.clone(), keys.clone())?;
    for trial in 0..config.trials {
        let mut session = base.clone();
        let mut reveals = Vec::with_capacity(n);
        for (c, r) in &collusion {
            session.receive_commit(c).expect("colluder commitment verifies");
            reveals.push(r.clone());
        }
        for k in &pairs[colluders..] {
            let mask = crypto::gen_mask_with(&mut rng)?;
            let shares = specs
                .iter()
                .map(|s| crypto::gen_share_with(&mut rng, s.index_space()))
                .collect::<Result<Vec<_>, _>>()?;
            let c = CommitMessage::create(&target, k, commitment(&target, &mask, &shares)?);
            session.receive_commit(&c).expect("honest commitment verifies");
            reveals.push(RevealMessage { sender: k.fingerprint(), mask, shares });
        }
        for r in &reveals {
            session.receive_reveal(r).expect("opening verifies");
        }
        let outcome = session
            .outcome()
            .map_err(|_| SimError::Stalled { trial, phase: session.phase() })?;
        for (i, o) in outcome.iter().enumerate() {
            let pos = specs[i]
                .eligible()
                .entries()
                .iter()
                .position(|e| e.candidate == o.candidate)
                .expect("outcome is eligible");
            counts[i][pos] += 1;
        }
    }

    let draws = specs
        .iter()
        .zip(counts)
        .map(|(spec, counts)| {
            let l = spec.index_space() as f64;
            let expected: Vec<f64> = spec.eligible().entries().iter().map(|e| e.weight as f64 / l).collect();
            let rows = spec
                .eligible()
                .entries()
                .iter()
                .zip(&counts)
                .zip(&expected)
                .map(|((e, &count), &p)| Row {
                    candidate: e.candidate.to_string(),
                    count,
                    frequency: if config.trials == 0 { 0.0 } else { count as f64 / config.trials as f64 },
                    expected: p,
                })
                .collect();
            DrawTable {
                did: spec.did().to_string(),
                index_space: spec.index_space(),
                rows,
                chi_square: (counts.len() > 1 && config.trials > 0).then(|| chi_square(&counts, &expected)),
            }
        })
        .collect();

    Ok(SimReport {
        trials: config.trials,
        seed: config.seed,
        stakeholders: n,
        adversary: config.adversary,
        no_honest_party: colluders >= n,
        draws,
    })
}

impl std::fmt::Display for SimReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(b) = self.banner() {
            writeln!(f, "{b}")?;
        }
        writeln!(
            f,
            "{} trials, {} stakeholders, {} colluding (fixed share {}), seed {}",
            self.trials, self.stakeholders, self.adversary.colluders, self.adversary.fixed_share, self.seed
        )?;
        for d in &self.draws {
            writeln!(f, "{} (index space {})", d.did, d.index_space)?;
            writeln!(f, "  {:<20} {:>10} {:>10} {:>10}", "candidate", "count", "observed", "expected")?;
            for r in &d.rows {
                writeln!(f, "  {:<20} {:>10} {:>10.5} {:>10.5}", r.candidate, r.count, r.frequency, r.expected)?;
            }
            if let Some(c) = &d.chi_square {
                writeln!(f, "  chi-square {:.4} (df {}), p-value {:.6}", c.statistic, c.degrees_of_freedom, c.p_value)?;
            }
        }
        Ok(())
    }
}
