//! Token-multiset fingerprints and Jaccard similarity.
//!
//! Tokens are maximal runs of ASCII alphanumerics, lowercased. The
//! fingerprint is FNV-1a 64 over the sorted token multiset with a `0x00`
//! separator after every token, so it is order-insensitive but sensitive to
//! token counts. Content without tokens maps to [`NULL_FINGERPRINT`].

use std::collections::HashSet;

use super::{ScriptEntry, SiteSnapshot};

pub const NULL_FINGERPRINT: u64 = 0;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn tokenize(bytes: &[u8]) -> impl Iterator<Item = String> + '_ {
    bytes
        .split(|b| !b.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.iter().map(|b| b.to_ascii_lowercase() as char).collect())
}

pub(super) fn fingerprint_parts(html: &[u8], scripts: &[ScriptEntry]) -> u64 {
    let mut tokens: Vec<String> = tokenize(html).collect();
    for s in scripts {
        tokens.extend(tokenize(&s.body));
    }
    if tokens.is_empty() {
        return NULL_FINGERPRINT;
    }
    tokens.sort_unstable();
    let mut h = FNV_OFFSET;
    for t in &tokens {
        for &b in t.as_bytes().iter().chain(std::iter::once(&0u8)) {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

pub fn content_fingerprint(snapshot: &SiteSnapshot) -> u64 {
    fingerprint_parts(&snapshot.html, &snapshot.scripts)
}

/// Distinct tokens of the page and its scripts.
pub fn token_set(snapshot: &SiteSnapshot) -> HashSet<String> {
    snapshot
        .sources()
        .flat_map(|(_, body)| tokenize(body))
        .collect()
}

/// `|a ∩ b| / |a ∪ b|`, defined as 1 when both sets are empty.
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}
