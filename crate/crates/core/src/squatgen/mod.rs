//! Look-alike domain generation for known collections and the perturbation
//! term filter shared with certificate-stream ingestion.
//!
//! Permutations are applied to the label left of the public suffix
//! (`boredapeyachtclub` in `boredapeyachtclub.com`) and are registrable-domain
//! only; subdomain squats are not generated.

mod rules;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psl::SuffixList;

pub use rules::{default_homoglyphs, qwerty_neighbors, DEFAULT_TERMS, DEFAULT_TLDS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SquatError {
    #[error("invalid seed domain {0:?}")]
    InvalidSeed(String),
    #[error("no permutation rules given")]
    NoRules,
    #[error("rule {0} requires a non-empty parameter table")]
    EmptyParameters(RuleKind),
    #[error("unknown permutation rule {0:?}")]
    UnknownRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Omission,
    Insertion,
    Transposition,
    Repetition,
    Replacement,
    Homoglyph,
    Bitsquat,
    Hyphenation,
    TldSwap,
    TermAffix,
}

impl RuleKind {
    pub const ALL: [RuleKind; 10] = [
        RuleKind::Omission,
        RuleKind::Insertion,
        RuleKind::Transposition,
        RuleKind::Repetition,
        RuleKind::Replacement,
        RuleKind::Homoglyph,
        RuleKind::Bitsquat,
        RuleKind::Hyphenation,
        RuleKind::TldSwap,
        RuleKind::TermAffix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Omission => "omission",
            RuleKind::Insertion => "insertion",
            RuleKind::Transposition => "transposition",
            RuleKind::Repetition => "repetition",
            RuleKind::Replacement => "replacement",
            RuleKind::Homoglyph => "homoglyph",
            RuleKind::Bitsquat => "bitsquat",
            RuleKind::Hyphenation => "hyphenation",
            RuleKind::TldSwap => "tld_swap",
            RuleKind::TermAffix => "term_affix",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = SquatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        RuleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(SquatError::UnknownRule(s))
    }
}

/// A permutation rule together with its parameter table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PermutationRule {
    Omission,
    Insertion,
    Transposition,
    Repetition,
    /// Adjacent-key replacement on a QWERTY layout.
    Replacement,
    Homoglyph(Vec<(String, String)>),
    Bitsquat,
    Hyphenation,
    TldSwap(Vec<String>),
    TermAffix(Vec<String>),
}

impl PermutationRule {
    pub fn kind(&self) -> RuleKind {
        match self {
            PermutationRule::Omission => RuleKind::Omission,
            PermutationRule::Insertion => RuleKind::Insertion,
            PermutationRule::Transposition => RuleKind::Transposition,
            PermutationRule::Repetition => RuleKind::Repetition,
            PermutationRule::Replacement => RuleKind::Replacement,
            PermutationRule::Homoglyph(_) => RuleKind::Homoglyph,
            PermutationRule::Bitsquat => RuleKind::Bitsquat,
            PermutationRule::Hyphenation => RuleKind::Hyphenation,
            PermutationRule::TldSwap(_) => RuleKind::TldSwap,
            PermutationRule::TermAffix(_) => RuleKind::TermAffix,
        }
    }

    /// The rule of `kind` with its default parameters: the bundled
    /// homoglyph table, [`DEFAULT_TLDS`] and [`DEFAULT_TERMS`].
    pub fn with_defaults(kind: RuleKind) -> Self {
        match kind {
            RuleKind::Omission => PermutationRule::Omission,
            RuleKind::Insertion => PermutationRule::Insertion,
            RuleKind::Transposition => PermutationRule::Transposition,
            RuleKind::Repetition => PermutationRule::Repetition,
            RuleKind::Replacement => PermutationRule::Replacement,
            RuleKind::Homoglyph => PermutationRule::Homoglyph(default_homoglyphs().to_vec()),
            RuleKind::Bitsquat => PermutationRule::Bitsquat,
            RuleKind::Hyphenation => PermutationRule::Hyphenation,
            RuleKind::TldSwap => {
                PermutationRule::TldSwap(DEFAULT_TLDS.iter().map(|s| s.to_string()).collect())
            }
            RuleKind::TermAffix => {
                PermutationRule::TermAffix(DEFAULT_TERMS.iter().map(|s| s.to_string()).collect())
            }
        }
    }

    /// Parses a comma-separated rule list (`omission,tld_swap,...`) using
    /// default parameters; `all` selects every rule.
    pub fn parse_list(list: &str) -> Result<Vec<Self>, SquatError> {
        if list.trim().eq_ignore_ascii_case("all") {
            return Ok(RuleKind::ALL.into_iter().map(Self::with_defaults).collect());
        }
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<RuleKind>().map(Self::with_defaults))
            .collect()
    }

    fn validate(&self) -> Result<(), SquatError> {
        let empty = match self {
            PermutationRule::Homoglyph(t) => t.is_empty(),
            PermutationRule::TldSwap(t) | PermutationRule::TermAffix(t) => t.is_empty(),
            _ => false,
        };
        if empty {
            Err(SquatError::EmptyParameters(self.kind()))
        } else {
            Ok(())
        }
    }
}

/// One generated domain and the first rule (in rule-list order) that
/// produced it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Permutation {
    pub domain: String,
    pub rule: RuleKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Fuzzer,
    CtStream,
}

/// A domain worth fetching, with its discovery provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDomain {
    pub domain: String,
    pub source: CandidateSource,
    pub seed: Option<String>,
    pub rule: Option<RuleKind>,
    pub first_seen: DateTime<Utc>,
}

/// Candidates keyed (and ordered) by domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    by_domain: BTreeMap<String, CandidateDomain>,
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless the domain is already present; returns whether the
    /// candidate was added.
    pub fn insert(&mut self, c: CandidateDomain) -> bool {
        if self.by_domain.contains_key(&c.domain) {
            return false;
        }
        self.by_domain.insert(c.domain.clone(), c);
        true
    }

    pub fn get(&self, domain: &str) -> Option<&CandidateDomain> {
        self.by_domain.get(domain)
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.by_domain.contains_key(domain)
    }

    pub fn len(&self) -> usize {
        self.by_domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_domain.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CandidateDomain> {
        self.by_domain.values()
    }

    pub fn into_vec(self) -> Vec<CandidateDomain> {
        self.by_domain.into_values().collect()
    }
}

impl FromIterator<CandidateDomain> for CandidateSet {
    fn from_iter<T: IntoIterator<Item = CandidateDomain>>(iter: T) -> Self {
        let mut set = CandidateSet::new();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

/// Labels 1-63 chars of `[a-z0-9-]` without leading/trailing hyphens, at
/// least two labels, total length at most 253.
pub fn is_dns_valid(domain: &str) -> bool {
    if domain.is_empty() || domain.len() > 253 {
        return false;
    }
    let mut labels = 0;
    for label in domain.split('.') {
        labels += 1;
        let ok = !label.is_empty()
            && label.len() <= 63
            && label
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
            && !label.starts_with('-')
            && !label.ends_with('-');
        if !ok {
            return false;
        }
    }
    labels >= 2
}

/// Splits a registrable seed into `(name label, public suffix)`.
fn split_seed(seed: &str) -> Result<(&str, &str), SquatError> {
    let invalid = || SquatError::InvalidSeed(seed.to_string());
    if !is_dns_valid(seed) {
        return Err(invalid());
    }
    let psl = SuffixList::bundled();
    let registrable = psl.registrable_domain(seed).ok_or_else(invalid)?;
    if registrable != seed {
        return Err(invalid());
    }
    let suffix = psl.public_suffix(seed).ok_or_else(invalid)?;
    let name = &seed[..seed.len() - suffix.len() - 1];
    Ok((name, suffix))
}

/// All DNS-valid permutations of a registrable `seed` under `rules`,
/// excluding the seed, sorted by domain. Each domain carries the first rule
/// that generated it.
pub fn permute_domain(
    seed: &str,
    rules: &[PermutationRule],
) -> Result<Vec<Permutation>, SquatError> {
    if rules.is_empty() {
        return Err(SquatError::NoRules);
    }
    for r in rules {
        r.validate()?;
    }
    let (name, suffix) = split_seed(seed)?;
    let mut out: BTreeMap<String, RuleKind> = BTreeMap::new();
    for rule in rules {
        for domain in rules::generate(rule, name, suffix) {
            if domain != seed && is_dns_valid(&domain) {
                out.entry(domain).or_insert(rule.kind());
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|(domain, rule)| Permutation { domain, rule })
        .collect())
}

/// Fuzzer candidates for one seed, attributed to `seed_slug`.
pub fn fuzz_seed(
    seed: &str,
    seed_slug: Option<&str>,
    rules: &[PermutationRule],
    first_seen: DateTime<Utc>,
) -> Result<CandidateSet, SquatError> {
    Ok(permute_domain(seed, rules)?
        .into_iter()
        .map(|p| CandidateDomain {
            domain: p.domain,
            source: CandidateSource::Fuzzer,
            seed: seed_slug.map(str::to_string),
            rule: Some(p.rule),
            first_seen,
        })
        .collect())
}

/// True iff any (lowercase) term occurs in the lowercased label.
pub fn is_nft_related(label: &str, terms: &[impl AsRef<str>]) -> bool {
    if label.is_empty() {
        return false;
    }
    let lowered = label.to_lowercase();
    terms
        .iter()
        .map(|t| t.as_ref())
        .any(|t| !t.is_empty() && lowered.contains(t))
}

/// Union of candidate streams keyed by domain. A fuzzer-sourced record
/// replaces a CT-sourced one for the same domain; otherwise the first
/// occurrence wins. The overlap is `sum of input sizes - union size`.
pub fn dedupe_candidates<I, S>(streams: I) -> (CandidateSet, usize)
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = CandidateDomain>,
{
    let mut merged: BTreeMap<String, CandidateDomain> = BTreeMap::new();
    let mut total = 0usize;
    for stream in streams {
        for c in stream {
            total += 1;
            match merged.get_mut(&c.domain) {
                Some(existing) => {
                    if existing.source != CandidateSource::Fuzzer
                        && c.source == CandidateSource::Fuzzer
                    {
                        *existing = c;
                    }
                }
                None => {
                    merged.insert(c.domain.clone(), c);
                }
            }
        }
    }
    let overlap = total - merged.len();
    (CandidateSet { by_domain: merged }, overlap)
}
