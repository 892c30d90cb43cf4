//! Operator spec files and the session setup record shared by the relay API
//! and transcripts.
//!
//! ```json
//! {
//!   "stakeholders": [{"name": "defense", "public_key": "<base64url>"}],
//!   "mode": "chain",
//!   "draws": [
//!     {"did": "123.456-7#0", "candidates": ["ana", "bruno", "carla"]},
//!     {"did": "123.456-7#1", "info": "appeal",
//!      "candidates": [{"id": "ana", "probability": "1/6"}, {"id": "bruno", "probability": "5/6"}]}
//!   ]
//! }
//! ```
//!
//! Candidate probabilities are all fractions (`"a/b"`), all decimals
//! (`"0.25"`) or all integer weights within one drawing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{CryptoError, KeyDirectory, PublicKey};
use crate::model::{parse_draw_id, DrawList, DrawSpec, DrawTarget, Fingerprint, ModelError};
use crate::weights::{CandidateId, DecimalWeight, FractionWeight, WeightError, WeightedEligibleList};

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("spec file is not valid JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("spec file lists no drawings")]
    NoDraws,
    #[error("single mode requires exactly one drawing, found {0}")]
    SingleWithMany(usize),
    #[error("drawing {did}: probabilities mix construction styles; use only fractions, only decimals, or only weights")]
    MixedStyles { did: String },
    #[error("drawing {did}: {source}")]
    Weights { did: String, source: WeightError },
    #[error("no public key for stakeholder {0}")]
    MissingKey(Fingerprint),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Session context: what is drawn and by whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSetup {
    pub session: DrawTarget,
    pub keys: KeyDirectory,
}

impl SessionSetup {
    /// Checks that every stakeholder has a public key.
    pub fn new(session: DrawTarget, keys: KeyDirectory) -> Result<Self, SpecFileError> {
        if let Some(s) = session.stakeholders().iter().find(|s| keys.get(&s.fingerprint).is_none()) {
            return Err(SpecFileError::MissingKey(s.fingerprint));
        }
        Ok(Self { session, keys })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    pub stakeholders: Vec<StakeholderEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub draws: Vec<DrawEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Chain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StakeholderEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub public_key: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawEntry {
    pub did: String,
    #[serde(default)]
    pub info: String,
    pub candidates: Vec<CandidateEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateEntry {
    Plain(String),
    Probability { id: String, probability: String },
    Weight { id: String, weight: u64 },
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, SpecFileError> {
        serde_json::from_str(text).map_err(|e| SpecFileError::Json {
            offset: crate::json::error_offset(text, &e),
            message: e.to_string(),
        })
    }

    pub fn into_setup(self) -> Result<SessionSetup, SpecFileError> {
        let mut keys = KeyDirectory::new();
        for s in &self.stakeholders {
            keys.insert(s.public_key, s.name.clone());
        }
        let stakeholders = keys.stakeholders();
        let mut specs = Vec::new();
        for d in &self.draws {
            let did = parse_draw_id(&d.did)?;
            let eligible = eligible_list(d).map_err(|e| match e {
                SpecFileError::Weights { source, .. } => SpecFileError::Weights { did: d.did.clone(), source },
                other => other,
            })?;
            specs.push(DrawSpec::new(did, stakeholders.clone(), eligible, d.info.clone())?);
        }
        let mode = self.mode.unwrap_or(if specs.len() > 1 { Mode::Chain } else { Mode::Single });
        let session = match mode {
            _ if specs.is_empty() => return Err(SpecFileError::NoDraws),
            Mode::Single if specs.len() != 1 => return Err(SpecFileError::SingleWithMany(specs.len())),
            Mode::Single => DrawTarget::Single(specs.pop().expect("one spec")),
            Mode::Chain => DrawTarget::Chain(DrawList::sorted(specs)?),
        };
        SessionSetup::new(session, keys)
    }
}

fn eligible_list(d: &DrawEntry) -> Result<WeightedEligibleList, SpecFileError> {
    let werr = |source| SpecFileError::Weights { did: d.did.clone(), source };
    let id = |s: &str| CandidateId::new(s).map_err(werr);
    let mixed = || SpecFileError::MixedStyles { did: d.did.clone() };
    let first = d.candidates.first().ok_or_else(|| werr(WeightError::Empty))?;
    match first {
        CandidateEntry::Plain(_) => {
            let ids = d
                .candidates
                .iter()
                .map(|c| match c {
                    CandidateEntry::Plain(s) => id(s),
                    _ => Err(mixed()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            WeightedEligibleList::uniform(ids).map_err(werr)
        }
        CandidateEntry::Weight { .. } => {
            let pairs = d
                .candidates
                .iter()
                .map(|c| match c {
                    CandidateEntry::Weight { id: s, weight } => Ok((id(s)?, *weight)),
                    _ => Err(mixed()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            WeightedEligibleList::from_weights(pairs).map_err(werr)
        }
        CandidateEntry::Probability { probability, .. } if probability.contains('/') => {
            let pairs = d
                .candidates
                .iter()
                .map(|c| match c {
                    CandidateEntry::Probability { id: s, probability: p } if p.contains('/') => {
                        Ok((id(s)?, p.parse::<FractionWeight>().map_err(werr)?))
                    }
                    _ => Err(mixed()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            WeightedEligibleList::from_fractions(pairs).map_err(werr)
        }
        CandidateEntry::Probability { .. } => {
            let pairs = d
                .candidates
                .iter()
                .map(|c| match c {
                    CandidateEntry::Probability { id: s, probability: p } if !p.contains('/') => {
                        Ok((id(s)?, p.parse::<DecimalWeight>().map_err(werr)?))
                    }
                    _ => Err(mixed()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            WeightedEligibleList::from_decimal(pairs).map_err(werr)
        }
    }
}
