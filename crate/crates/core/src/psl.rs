//! Registrable-domain extraction over a public-suffix rule list.
//!
//! The default list is a snapshot bundled at compile time
//! (`data/public_suffix_list.dat`); callers can also load an upstream copy
//! with [`SuffixList::parse`].

use std::collections::HashSet;
use std::sync::OnceLock;

const BUNDLED: &str = include_str!("../data/public_suffix_list.dat");

/// Parsed public suffix rules.
#[derive(Debug, Clone, Default)]
pub struct SuffixList {
    exact: HashSet<String>,
    /// Wildcard rules stored without their leading `*.`.
    wildcard: HashSet<String>,
    /// Exception rules stored without their leading `!`.
    exception: HashSet<String>,
}

impl SuffixList {
    pub fn parse(text: &str) -> Self {
        let mut list = SuffixList::default();
        for line in text.lines() {
            let rule = line.split_whitespace().next().unwrap_or("");
            if rule.is_empty() || rule.starts_with("//") {
                continue;
            }
            let rule = rule.to_ascii_lowercase();
            if let Some(rest) = rule.strip_prefix('!') {
                list.exception.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcard.insert(rest.to_string());
            } else {
                list.exact.insert(rule);
            }
        }
        list
    }

    /// The snapshot compiled into the crate.
    pub fn bundled() -> &'static SuffixList {
        static LIST: OnceLock<SuffixList> = OnceLock::new();
        LIST.get_or_init(|| SuffixList::parse(BUNDLED))
    }

    /// Number of labels in the public suffix of `labels`.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        // implicit "*" rule
        let mut best = 1;
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.exception.contains(&candidate) {
                // exception rules win outright; the suffix drops the leftmost label
                return n - i - 1;
            }
            let len = n - i;
            if len > best && self.exact.contains(&candidate) {
                best = len;
            }
            if i + 1 < n && len > best && self.wildcard.contains(&labels[i + 1..].join(".")) {
                best = len;
            }
        }
        best
    }

    /// Public suffix of a lowercase host, e.g. `co.uk` for `a.b.co.uk`.
    pub fn public_suffix<'a>(&self, host: &'a str) -> Option<&'a str> {
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let len = self.suffix_len(&labels);
        Some(tail(host, &labels, len))
    }

    /// Registrable domain (public suffix plus one label); `None` when the
    /// host is itself a public suffix or malformed.
    pub fn registrable_domain<'a>(&self, host: &'a str) -> Option<&'a str> {
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let len = self.suffix_len(&labels);
        if len >= labels.len() {
            return None;
        }
        Some(tail(host, &labels, len + 1))
    }
}

fn tail<'a>(host: &'a str, labels: &[&str], count: usize) -> &'a str {
    let skip: usize = labels[..labels.len() - count]
        .iter()
        .map(|l| l.len() + 1)
        .sum();
    &host[skip..]
}

/// Registrable domain of `host` under the bundled list. The host is
/// lowercased and a trailing root dot is ignored.
pub fn registrable_domain(host: &str) -> Option<String> {
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    SuffixList::bundled()
        .registrable_domain(&host)
        .map(str::to_string)
}
