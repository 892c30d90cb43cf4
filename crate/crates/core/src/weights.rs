//! Weighted eligibility lists.
//!
//! A drawing indexes a *virtual* list in which every candidate is repeated
//! `weight` times, contiguously and in ascending candidate order. Only the
//! `(candidate, weight)` pairs are stored; [`WeightedEligibleList::candidate_at`]
//! resolves an index against the cumulative weight blocks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest index space `from_fractions` will build before asking the caller
/// to rescale.
pub const MAX_LCM: u64 = 1 << 32;

/// Largest decimal scale accepted by `from_decimal`.
pub const MAX_DECIMAL_SCALE: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WeightError {
    #[error("eligible list is empty")]
    Empty,
    #[error("candidate identifier is empty")]
    EmptyCandidate,
    #[error("duplicate candidate {0:?}")]
    Duplicate(String),
    #[error("candidates are not sorted ascending at {0:?}")]
    Unsorted(String),
    #[error("candidate {0:?} has zero weight")]
    ZeroWeight(String),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(String),
    #[error("common denominator {0} exceeds 2^32; rescale the probabilities or use a decimal scale")]
    LcmOverflow(String),
    #[error("decimal scale {0} exceeds the maximum of {MAX_DECIMAL_SCALE} fractional digits")]
    ScaleTooLarge(u32),
    #[error("total weight overflows 64 bits")]
    IndexSpaceOverflow,
    #[error("index {index} out of range for index space {index_space}")]
    IndexOutOfRange { index: u64, index_space: u64 },
    #[error("malformed probability {0:?}")]
    Malformed(String),
}

/// Unequivocal identifier of one eligible candidate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CandidateId(String);

impl CandidateId {
    pub fn new(id: impl Into<String>) -> Result<Self, WeightError> {
        let id = id.into();
        if id.is_empty() {
            return Err(WeightError::EmptyCandidate);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CandidateId {
    type Error = WeightError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<CandidateId> for String {
    fn from(c: CandidateId) -> String {
        c.0
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A probability `numerator / denominator`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FractionWeight {
    numerator: u64,
    denominator: u64,
}

impl FractionWeight {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, WeightError> {
        if numerator == 0 || denominator == 0 {
            return Err(WeightError::Malformed(format!("{numerator}/{denominator}")));
        }
        let g = numerator.gcd(&denominator);
        Ok(Self {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    fn to_rational(self) -> BigRational {
        BigRational::new(self.numerator.into(), self.denominator.into())
    }
}

impl FromStr for FractionWeight {
    type Err = WeightError;

    /// Parses `"a/b"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WeightError::Malformed(s.to_string());
        let (a, b) = s.trim().split_once('/').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }
}

impl fmt::Display for FractionWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// A decimal probability with `scale` fractional digits, stored as
/// `units / 10^scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecimalWeight {
    units: u64,
    scale: u32,
}

impl DecimalWeight {
    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }
}

impl FromStr for DecimalWeight {
    type Err = WeightError;

    /// Parses `"0.25"`, `"1"` or `".5"`. No sign, no exponent.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WeightError::Malformed(s.to_string());
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = u32::try_from(frac.len()).map_err(|_| bad())?;
        if scale > MAX_DECIMAL_SCALE {
            return Err(WeightError::ScaleTooLarge(scale));
        }
        let digits = format!("{int}{frac}");
        let units = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        Ok(Self { units, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedEntry {
    pub candidate: CandidateId,
    pub weight: u64,
}

/// Candidates with positive integer weights over an index space equal to the
/// weight total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WeightedEntry>", into = "Vec<WeightedEntry>")]
pub struct WeightedEligibleList {
    entries: Vec<WeightedEntry>,
    /// `ends[j]` is the exclusive end of candidate j's block.
    ends: Vec<u64>,
}

impl WeightedEligibleList {
    /// Builds a list from entries already in canonical order. Rejects
    /// unsorted, duplicated or zero-weight entries.
    pub fn from_canonical(entries: Vec<WeightedEntry>) -> Result<Self, WeightError> {
        if entries.is_empty() {
            return Err(WeightError::Empty);
        }
        for pair in entries.windows(2) {
            match pair[0].candidate.cmp(&pair[1].candidate) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => {
                    return Err(WeightError::Duplicate(pair[1].candidate.0.clone()))
                }
                std::cmp::Ordering::Greater => {
                    return Err(WeightError::Unsorted(pair[1].candidate.0.clone()))
                }
            }
        }
        let mut ends = Vec::with_capacity(entries.len());
        let mut total: u64 = 0;
        for e in &entries {
            if e.weight == 0 {
                return Err(WeightError::ZeroWeight(e.candidate.0.clone()));
            }
            total = total
                .checked_add(e.weight)
                .ok_or(WeightError::IndexSpaceOverflow)?;
            ends.push(total);
        }
        Ok(Self { entries, ends })
    }

    /// Sorts the pairs by candidate and builds the list.
    pub fn from_weights(
        weights: impl IntoIterator<Item = (CandidateId, u64)>,
    ) -> Result<Self, WeightError> {
        let mut entries: Vec<WeightedEntry> = weights
            .into_iter()
            .map(|(candidate, weight)| WeightedEntry { candidate, weight })
            .collect();
        entries.sort_by(|a, b| a.candidate.cmp(&b.candidate));
        Self::from_canonical(entries)
    }

    /// Every candidate with weight 1.
    pub fn uniform(candidates: impl IntoIterator<Item = CandidateId>) -> Result<Self, WeightError> {
        Self::from_weights(candidates.into_iter().map(|c| (c, 1)))
    }

    /// Weights `ℓ·a/b` over `ℓ = lcm` of the denominators.
    pub fn from_fractions(
        weights: impl IntoIterator<Item = (CandidateId, FractionWeight)>,
    ) -> Result<Self, WeightError> {
        let weights: Vec<_> = weights.into_iter().collect();
        if weights.is_empty() {
            return Err(WeightError::Empty);
        }
        let sum = weights
            .iter()
            .fold(BigRational::zero(), |acc, (_, w)| acc + w.to_rational());
        if !sum.is_one() {
            return Err(WeightError::BadSum(sum.to_string()));
        }
        let lcm = weights
            .iter()
            .fold(BigInt::one(), |acc, (_, w)| acc.lcm(&BigInt::from(w.denominator)));
        let lcm = lcm
            .to_u64()
            .filter(|&l| l <= MAX_LCM)
            .ok_or_else(|| WeightError::LcmOverflow(lcm.to_string()))?;
        Self::from_weights(
            weights
                .into_iter()
                .map(|(c, w)| (c, lcm / w.denominator * w.numerator)),
        )
    }

    /// Weights `p·10^k`, where `k` is the largest scale among the inputs.
    pub fn from_decimal(
        weights: impl IntoIterator<Item = (CandidateId, DecimalWeight)>,
    ) -> Result<Self, WeightError> {
        let weights: Vec<_> = weights.into_iter().collect();
        if weights.is_empty() {
            return Err(WeightError::Empty);
        }
        let scale = weights.iter().map(|(_, w)| w.scale).max().unwrap_or(0);
        if scale > MAX_DECIMAL_SCALE {
            return Err(WeightError::ScaleTooLarge(scale));
        }
        let denom = 10u64.pow(scale);
        let mut scaled = Vec::with_capacity(weights.len());
        let mut total: u128 = 0;
        for (c, w) in weights {
            let units = u128::from(w.units) * 10u128.pow(scale - w.scale);
            total += units;
            scaled.push((c, units));
        }
        if total != u128::from(denom) {
            let whole = total / u128::from(denom);
            let frac = total % u128::from(denom);
            let shown = if scale == 0 {
                whole.to_string()
            } else {
                let f = format!("{frac:0width$}", width = scale as usize);
                format!("{whole}.{}", f.trim_end_matches('0')).trim_end_matches('.').to_string()
            };
            return Err(WeightError::BadSum(shown));
        }
        Self::from_weights(scaled.into_iter().map(|(c, u)| (c, u as u64)))
    }

    pub fn entries(&self) -> &[WeightedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Size of the virtual expanded list.
    pub fn index_space(&self) -> u64 {
        *self.ends.last().expect("list is non-empty")
    }

    /// Candidate whose contiguous block contains `index`.
    pub fn candidate_at(&self, index: u64) -> Result<&CandidateId, WeightError> {
        if index >= self.index_space() {
            return Err(WeightError::IndexOutOfRange {
                index,
                index_space: self.index_space(),
            });
        }
        let slot = self.ends.partition_point(|&end| end <= index);
        Ok(&self.entries[slot].candidate)
    }

    /// Candidates as a set, for membership checks.
    pub fn candidates(&self) -> BTreeSet<&CandidateId> {
        self.entries.iter().map(|e| &e.candidate).collect()
    }
}

impl TryFrom<Vec<WeightedEntry>> for WeightedEligibleList {
    type Error = WeightError;
    fn try_from(entries: Vec<WeightedEntry>) -> Result<Self, Self::Error> {
        Self::from_canonical(entries)
    }
}

impl From<WeightedEligibleList> for Vec<WeightedEntry> {
    fn from(list: WeightedEligibleList) -> Self {
        list.entries
    }
}

/// Uniform list over distinct candidates.
pub fn uniform_list(candidates: Vec<CandidateId>) -> Result<WeightedEligibleList, WeightError> {
    WeightedEligibleList::uniform(candidates)
}

pub fn from_fractions(
    weights: Vec<(CandidateId, FractionWeight)>,
) -> Result<WeightedEligibleList, WeightError> {
    WeightedEligibleList::from_fractions(weights)
}

pub fn from_decimal(
    weights: Vec<(CandidateId, DecimalWeight)>,
) -> Result<WeightedEligibleList, WeightError> {
    WeightedEligibleList::from_decimal(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(names: &[&str]) -> Vec<CandidateId> {
        names.iter().map(|n| CandidateId::new(*n).unwrap()).collect()
    }

    fn weights_of(list: &WeightedEligibleList) -> Vec<u64> {
        list.entries().iter().map(|e| e.weight).collect()
    }

    fn fracs(spec: &[(&str, &str)]) -> Vec<(CandidateId, FractionWeight)> {
        spec.iter()
            .map(|(c, f)| (CandidateId::new(*c).unwrap(), f.parse().unwrap()))
            .collect()
    }

    fn decs(spec: &[(&str, &str)]) -> Vec<(CandidateId, DecimalWeight)> {
        spec.iter()
            .map(|(c, f)| (CandidateId::new(*c).unwrap(), f.parse().unwrap()))
            .collect()
    }

    /// Literal repeated-identifier list, the reference the compact form must match.
    fn materialize(list: &WeightedEligibleList) -> Vec<CandidateId> {
        list.entries()
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.candidate.clone(), e.weight as usize))
            .collect()
    }

    #[test]
    fn uniform_five() {
        let l = uniform_list(ids(&["a", "b", "c", "d", "e"])).unwrap();
        assert_eq!(l.index_space(), 5);
        assert!(weights_of(&l).iter().all(|&w| w == 1));
    }

    #[test]
    fn uniform_single() {
        assert_eq!(uniform_list(ids(&["only"])).unwrap().index_space(), 1);
    }

    #[test]
    fn uniform_duplicate_named() {
        assert_eq!(
            uniform_list(ids(&["a", "b", "a"])).unwrap_err(),
            WeightError::Duplicate("a".into())
        );
    }

    #[test]
    fn tenths_give_one_two_three_four() {
        let l = from_fractions(fracs(&[("e0", "1/10"), ("e1", "2/10"), ("e2", "3/10"), ("e3", "4/10")]))
            .unwrap();
        assert_eq!(l.index_space(), 10);
        assert_eq!(weights_of(&l), vec![1, 2, 3, 4]);
    }

    #[test]
    fn lcm_twelve() {
        let l = from_fractions(fracs(&[("e0", "1/6"), ("e1", "1/4"), ("e2", "1/4"), ("e3", "1/3")]))
            .unwrap();
        assert_eq!(l.index_space(), 12);
        assert_eq!(weights_of(&l), vec![2, 3, 3, 4]);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let err = from_fractions(fracs(&[("a", "1/2"), ("b", "1/3")])).unwrap_err();
        assert_eq!(err, WeightError::BadSum("5/6".into()));
    }

    #[test]
    fn fraction_is_reduced() {
        let f: FractionWeight = "2/10".parse().unwrap();
        assert_eq!((f.numerator(), f.denominator()), (1, 5));
    }

    #[test]
    fn lcm_cap() {
        // Two large coprime denominators whose lcm exceeds 2^32.
        let p = 65_537u64;
        let q = 65_539u64;
        let a = FractionWeight::new(1, p).unwrap();
        let b = FractionWeight::new(1, q).unwrap();
        // 1 - 1/p - 1/q = (pq - p - q)/pq
        let c = FractionWeight::new(p * q - p - q, p * q).unwrap();
        let err = WeightedEligibleList::from_fractions(vec![
            (CandidateId::new("a").unwrap(), a),
            (CandidateId::new("b").unwrap(), b),
            (CandidateId::new("c").unwrap(), c),
        ])
        .unwrap_err();
        assert!(matches!(err, WeightError::LcmOverflow(_)));
    }

    #[test]
    fn lcm_exactly_at_cap_is_allowed() {
        let half = FractionWeight::new(1, 2).unwrap();
        let rest = FractionWeight::new((1 << 31) - 1, 1 << 32).unwrap();
        let tiny = FractionWeight::new(1, 1 << 32).unwrap();
        let l = WeightedEligibleList::from_fractions(vec![
            (CandidateId::new("a").unwrap(), half),
            (CandidateId::new("b").unwrap(), rest),
            (CandidateId::new("c").unwrap(), tiny),
        ])
        .unwrap();
        assert_eq!(l.index_space(), 1 << 32);
    }

    #[test]
    fn decimal_quarters() {
        let l = from_decimal(decs(&[("a", "0.25"), ("b", "0.25"), ("c", "0.50")])).unwrap();
        assert_eq!(l.index_space(), 100);
        assert_eq!(weights_of(&l), vec![25, 25, 50]);
    }

    #[test]
    fn decimal_thousandths() {
        let l = from_decimal(decs(&[("a", "0.333"), ("b", "0.333"), ("c", "0.334")])).unwrap();
        assert_eq!(l.index_space(), 1000);
        assert_eq!(weights_of(&l), vec![333, 333, 334]);
    }

    #[test]
    fn decimal_mixed_scales_are_aligned() {
        let l = from_decimal(decs(&[("a", "0.5"), ("b", "0.25"), ("c", "0.25")])).unwrap();
        assert_eq!(weights_of(&l), vec![50, 25, 25]);
    }

    #[test]
    fn decimal_bad_sum() {
        let err = from_decimal(decs(&[("a", "0.3"), ("b", "0.3")])).unwrap_err();
        assert_eq!(err, WeightError::BadSum("0.6".into()));
    }

    #[test]
    fn decimal_scale_guard() {
        assert_eq!(
            "0.0000000001".parse::<DecimalWeight>().unwrap_err(),
            WeightError::ScaleTooLarge(10)
        );
    }

    #[test]
    fn decimal_zero_weight_rejected() {
        let err = from_decimal(decs(&[("a", "1.0"), ("b", "0.0")])).unwrap_err();
        assert_eq!(err, WeightError::ZeroWeight("b".into()));
    }

    #[test]
    fn candidate_at_tenths_layout() {
        let l = WeightedEligibleList::from_weights(
            ids(&["e0", "e1", "e2", "e3"]).into_iter().zip([1, 2, 3, 4]),
        )
        .unwrap();
        assert_eq!(l.candidate_at(0).unwrap().as_str(), "e0");
        assert_eq!(l.candidate_at(2).unwrap().as_str(), "e1");
        assert_eq!(l.candidate_at(9).unwrap().as_str(), "e3");
    }

    #[test]
    fn candidate_at_twelfths_against_materialization() {
        let l = WeightedEligibleList::from_weights(
            ids(&["e0", "e1", "e2", "e3"]).into_iter().zip([2, 3, 3, 4]),
        )
        .unwrap();
        let expanded = materialize(&l);
        assert_eq!(expanded.len(), 12);
        assert_eq!(expanded[4].as_str(), "e1");
        assert_eq!(l.candidate_at(4).unwrap(), &expanded[4]);
    }

    #[test]
    fn candidate_at_out_of_range() {
        let l = uniform_list(ids(&["a", "b"])).unwrap();
        assert_eq!(
            l.candidate_at(2).unwrap_err(),
            WeightError::IndexOutOfRange { index: 2, index_space: 2 }
        );
    }

    #[test]
    fn canonical_constructor_rejects_unsorted() {
        let entries = vec![
            WeightedEntry { candidate: CandidateId::new("b").unwrap(), weight: 1 },
            WeightedEntry { candidate: CandidateId::new("a").unwrap(), weight: 1 },
        ];
        assert_eq!(
            WeightedEligibleList::from_canonical(entries).unwrap_err(),
            WeightError::Unsorted("a".into())
        );
    }

    fn arb_list() -> impl Strategy<Value = WeightedEligibleList> {
        proptest::collection::btree_map("[a-z]{1,6}", 1u64..40, 1..30).prop_map(|m| {
            WeightedEligibleList::from_weights(
                m.into_iter().map(|(c, w)| (CandidateId::new(c).unwrap(), w)),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn candidate_at_matches_materialization(list in arb_list()) {
            let expanded = materialize(&list);
            prop_assert_eq!(expanded.len() as u64, list.index_space());
            for (i, c) in expanded.iter().enumerate() {
                prop_assert_eq!(list.candidate_at(i as u64).unwrap(), c);
            }
        }

        #[test]
        fn enumeration_gives_exact_weights(list in arb_list()) {
            let mut counts = std::collections::BTreeMap::new();
            for d in 0..list.index_space() {
                *counts.entry(list.candidate_at(d).unwrap().clone()).or_insert(0u64) += 1;
            }
            for e in list.entries() {
                prop_assert_eq!(counts[&e.candidate], e.weight);
            }
        }

        #[test]
        fn fractions_ignore_input_order(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut input = fracs(&[("e0", "1/6"), ("e1", "1/4"), ("e2", "1/4"), ("e3", "1/3")]);
            let sorted = from_fractions(input.clone()).unwrap();
            input.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(from_fractions(input).unwrap(), sorted);
        }
    }
}
