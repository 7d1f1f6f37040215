//! Chain address syntax, casing and mixed-case checksum.

use serde::{Deserialize, Serialize};
use sha3::{Digest, Keccak256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed chain address {0:?}")]
pub struct MalformedAddress(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Casing {
    AllLower,
    AllUpper,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleHint {
    #[default]
    Unknown,
    Wallet,
    Contract,
}

/// A 20-byte address as it appeared in source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainAddress {
    pub hex: String,
    pub casing: Casing,
    /// Only populated for mixed-case addresses.
    pub checksum_valid: Option<bool>,
    pub role_hint: RoleHint,
}

impl ChainAddress {
    pub fn parse(s: &str) -> Result<Self, MalformedAddress> {
        if !is_well_formed(s) {
            return Err(MalformedAddress(s.to_string()));
        }
        let casing = casing_of(&s[2..]);
        let checksum_valid = (casing == Casing::Mixed).then(|| checksum_matches(&s[2..]));
        Ok(ChainAddress {
            hex: s.to_string(),
            casing,
            checksum_valid,
            role_hint: RoleHint::Unknown,
        })
    }

    /// Lowercase form used as the identity of the address.
    pub fn normalized(&self) -> String {
        self.hex.to_ascii_lowercase()
    }
}

/// `0x` followed by exactly 40 hex digits.
pub fn is_well_formed(s: &str) -> bool {
    s.len() == 42 && s.starts_with("0x") && s.as_bytes()[2..].iter().all(u8::is_ascii_hexdigit)
}

fn casing_of(body: &str) -> Casing {
    let lower = body.bytes().any(|b| b.is_ascii_lowercase());
    let upper = body.bytes().any(|b| b.is_ascii_uppercase());
    match (lower, upper) {
        (true, true) => Casing::Mixed,
        (false, true) => Casing::AllUpper,
        _ => Casing::AllLower,
    }
}

/// Mixed-case checksum rendering of a 40-digit hex body: each letter is
/// uppercased when the matching nibble of keccak256(lowercase body) is >= 8.
pub fn checksum_encode(body: &str) -> String {
    let lower = body.to_ascii_lowercase();
    let hash = Keccak256::digest(lower.as_bytes());
    lower
        .char_indices()
        .map(|(i, c)| {
            let byte = hash[i / 2];
            let nibble = if i % 2 == 0 { byte >> 4 } else { byte & 0x0f };
            if c.is_ascii_alphabetic() && nibble >= 8 {
                c.to_ascii_uppercase()
            } else {
                c
            }
        })
        .collect()
}

fn checksum_matches(body: &str) -> bool {
    checksum_encode(body) == body
}

/// Checksum validation. Single-case addresses carry no checksum and are
/// accepted vacuously.
pub fn validate_checksum(addr: &str) -> Result<bool, MalformedAddress> {
    let a = ChainAddress::parse(addr)?;
    Ok(a.checksum_valid.unwrap_or(true))
}

/// Byte offsets of every maximal `0x` + 40-hex run in `text` that is not
/// glued to a preceding identifier character and not followed by further
/// hex digits.
pub fn scan(text: &[u8]) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < text.len() {
        if text[i] == b'0' && text[i + 1] == b'x' {
            let glued = i > 0 && (text[i - 1].is_ascii_alphanumeric() || text[i - 1] == b'_');
            let start = i + 2;
            let mut end = start;
            while end < text.len() && text[end].is_ascii_hexdigit() {
                end += 1;
            }
            if !glued && end - start == 40 {
                // hex digits are ASCII so this slice is valid UTF-8
                out.push((i, std::str::from_utf8(&text[i..end]).expect("ascii")));
            }
            i = end.max(i + 2);
        } else {
            i += 1;
        }
    }
    out
}
