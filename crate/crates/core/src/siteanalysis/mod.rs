//! Static analysis of captured sites: chain addresses, social and
//! marketplace link audit, and the attack vector a page implements.
//!
//! All matching is lexical over case-folded source. Phishing kits are
//! minified inconsistently, so names of wallet calls and raw 4-byte method
//! ids are the signals that survive.

pub mod address;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::bytes::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::registry::{CollectionRecord, CollectionRegistry};
use crate::snapshot::SiteSnapshot;
pub use address::{validate_checksum, Casing, ChainAddress, MalformedAddress, RoleHint};

/// Distinct known-collection contracts needed before a page counts as a
/// token stealer.
pub const DEFAULT_MIN_EMBEDDED_CONTRACTS: usize = 5;

pub const METHOD_SET_APPROVAL_FOR_ALL: &str = "0xa22cb465";
pub const METHOD_TRANSFER_FROM: &str = "0x23b872dd";
pub const METHOD_SAFE_TRANSFER_FROM: &str = "0x42842e0e";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub offset: usize,
}

/// A unique address and every place it occurs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAddress {
    pub address: ChainAddress,
    pub occurrences: Vec<Location>,
}

impl ExtractedAddress {
    pub fn count(&self) -> usize {
        self.occurrences.len()
    }
}

/// Every standalone 20-byte address in the page and its scripts, one entry
/// per lowercase identity, sorted by that identity.
///
/// When the same address appears with different casings the representative
/// is a checksum-valid mixed-case spelling if one exists, otherwise the
/// lexicographically smallest spelling, so script order never matters.
pub fn extract_chain_addresses(snapshot: &SiteSnapshot) -> Vec<ExtractedAddress> {
    let mut by_id: BTreeMap<String, (BTreeSet<String>, Vec<Location>)> = BTreeMap::new();
    for (file, body) in snapshot.sources() {
        for (offset, raw) in address::scan(body) {
            let e = by_id.entry(raw.to_ascii_lowercase()).or_default();
            e.0.insert(raw.to_string());
            e.1.push(Location {
                file: file.to_string(),
                offset,
            });
        }
    }
    by_id
        .into_values()
        .map(|(spellings, mut occurrences)| {
            occurrences.sort();
            let parsed: Vec<ChainAddress> = spellings
                .iter()
                .map(|s| ChainAddress::parse(s).expect("scanner yields well-formed"))
                .collect();
            let address = parsed
                .iter()
                .find(|a| a.checksum_valid == Some(true))
                .unwrap_or(&parsed[0])
                .clone();
            ExtractedAddress {
                address,
                occurrences,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    Empty,
    Official,
    Unofficial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditedLink {
    pub href: String,
    pub class: LinkClass,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkAudit {
    pub twitter_links: Vec<AuditedLink>,
    pub opensea_links: Vec<AuditedLink>,
    pub has_wallet_connect: bool,
    pub requests_full_rights: bool,
}

impl LinkAudit {
    pub fn any_empty(&self) -> bool {
        self.twitter_links
            .iter()
            .chain(&self.opensea_links)
            .any(|l| l.class == LinkClass::Empty)
    }

    pub fn any_unofficial(&self) -> bool {
        self.twitter_links
            .iter()
            .chain(&self.opensea_links)
            .any(|l| l.class == LinkClass::Unofficial)
    }
}

fn anchor_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<a\b([^>]*)>(.*?)</a\s*>").unwrap())
}

fn href_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?is)\bhref\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))"#).unwrap())
}

fn title_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<title[^>]*>(.*?)</title").unwrap())
}

fn is_placeholder_href(href: &str) -> bool {
    let h = href.trim().to_ascii_lowercase();
    let compact: String = h.chars().filter(|c| !c.is_whitespace()).collect();
    compact.is_empty()
        || compact == "#"
        || compact == "javascript:void(0)"
        || compact == "javascript:void(0);"
}

enum Target {
    Twitter(Option<String>),
    Opensea(Option<String>),
    Elsewhere,
}

fn link_target(href: &str) -> Target {
    let Ok(u) = Url::parse(href.trim()) else {
        return Target::Elsewhere;
    };
    let host = u.host_str().unwrap_or_default().to_ascii_lowercase();
    let host = host
        .strip_prefix("www.")
        .or_else(|| host.strip_prefix("mobile."))
        .unwrap_or(&host)
        .to_string();
    let mut segs = u
        .path_segments()
        .map(|s| s.filter(|p| !p.is_empty()).collect::<Vec<_>>())
        .unwrap_or_default();
    match host.as_str() {
        "twitter.com" | "x.com" => Target::Twitter(
            segs.first()
                .map(|h| h.trim_start_matches('@').to_ascii_lowercase()),
        ),
        "opensea.io" => {
            let slug = if segs.first() == Some(&"collection") && segs.len() > 1 {
                Some(segs.remove(1).to_ascii_lowercase())
            } else {
                None
            };
            Target::Opensea(slug)
        }
        _ => Target::Elsewhere,
    }
}

/// The lowercase handle a Twitter/X profile link points at.
pub fn twitter_handle(href: &str) -> Option<String> {
    match link_target(href) {
        Target::Twitter(h) => h.filter(|h| !h.is_empty()),
        _ => None,
    }
}

fn lower(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).to_ascii_lowercase()
}

/// Classifies every Twitter and OpenSea link on the page against the
/// collection the page claims to be.
pub fn audit_links(snapshot: &SiteSnapshot, claimed: Option<&CollectionRecord>) -> LinkAudit {
    let mut audit = LinkAudit::default();
    let official_handle = claimed
        .and_then(|c| c.twitter_handle.as_deref())
        .map(str::to_ascii_lowercase);
    let official_slug = claimed
        .and_then(|c| c.opensea_slug.as_deref())
        .map(str::to_ascii_lowercase);

    for cap in anchor_re().captures_iter(&snapshot.html) {
        let attrs = cap.get(1).map(|m| m.as_bytes()).unwrap_or_default();
        let inner = cap.get(2).map(|m| m.as_bytes()).unwrap_or_default();
        let href = href_re()
            .captures(attrs)
            .and_then(|h| h.get(1).or_else(|| h.get(2)).or_else(|| h.get(3)))
            .map(|m| String::from_utf8_lossy(m.as_bytes()).into_owned())
            .unwrap_or_default();
        let attrs_wo_href = lower(&href_re().replace_all(attrs, &b""[..]));
        let context = format!("{attrs_wo_href} {}", lower(inner));
        let mentions_twitter = context.contains("twitter") || context.contains("tweet");
        let mentions_opensea = context.contains("opensea");

        if is_placeholder_href(&href) {
            let link = AuditedLink {
                href: href.trim().to_string(),
                class: LinkClass::Empty,
            };
            if mentions_twitter {
                audit.twitter_links.push(link.clone());
            }
            if mentions_opensea {
                audit.opensea_links.push(link);
            }
            continue;
        }
        match link_target(&href) {
            Target::Twitter(handle) => {
                let official = handle.is_some() && handle == official_handle;
                audit.twitter_links.push(AuditedLink {
                    href,
                    class: official_or_not(official),
                });
            }
            Target::Opensea(slug) => {
                let official = slug.is_some() && slug == official_slug;
                audit.opensea_links.push(AuditedLink {
                    href,
                    class: official_or_not(official),
                });
            }
            Target::Elsewhere => {
                // labelled as a social link but pointing somewhere else
                if mentions_twitter {
                    audit.twitter_links.push(AuditedLink {
                        href: href.clone(),
                        class: LinkClass::Unofficial,
                    });
                }
                if mentions_opensea {
                    audit.opensea_links.push(AuditedLink {
                        href,
                        class: LinkClass::Unofficial,
                    });
                }
            }
        }
    }

    for (_, body) in snapshot.sources() {
        let text = lower(body);
        audit.has_wallet_connect |= WALLET_CONNECT.iter().any(|p| text.contains(p));
        audit.requests_full_rights |= FULL_RIGHTS.iter().any(|p| text.contains(p));
    }
    audit
}

fn official_or_not(official: bool) -> LinkClass {
    if official {
        LinkClass::Official
    } else {
        LinkClass::Unofficial
    }
}

const WALLET_CONNECT: [&str; 2] = ["window.ethereum", "eth_requestaccounts"];
const FULL_RIGHTS: [&str; 2] = ["setapprovalforall", METHOD_SET_APPROVAL_FOR_ALL];
const TRANSFER_PATTERNS: [&str; 6] = [
    "transferfrom",
    "send(",
    "setapprovalforall",
    METHOD_TRANSFER_FROM,
    METHOD_SAFE_TRANSFER_FROM,
    METHOD_SET_APPROVAL_FOR_ALL,
];

fn payment_res() -> &'static [(&'static str, Regex)] {
    static RES: OnceLock<Vec<(&'static str, Regex)>> = OnceLock::new();
    RES.get_or_init(|| {
        vec![
            (
                "eth_sendtransaction",
                Regex::new(r"eth_sendtransaction").unwrap(),
            ),
            ("value:", Regex::new(r"\bvalue\s*:").unwrap()),
            (
                "payable mint",
                Regex::new(r"(?s)\bmint\s*\([^;]{0,200}?\bvalue\b").unwrap(),
            ),
        ]
    })
}

/// Guesses which collection a page impersonates: an explicit hint (slug),
/// then the page's own domain, then a registry name in `<title>`, then the
/// first registry name mentioned anywhere in the page.
pub fn infer_claimed<'r>(
    snapshot: &SiteSnapshot,
    registry: &'r CollectionRegistry,
    hint: Option<&str>,
) -> Option<&'r CollectionRecord> {
    if let Some(rec) = hint.and_then(|h| registry.by_slug(h)) {
        return Some(rec);
    }
    if let Ok(Some(rec)) = registry.match_official(&snapshot.url) {
        return Some(rec);
    }
    let html = lower(&snapshot.html);
    let mentions = |text: &str| {
        registry
            .records()
            .iter()
            .filter(|r| r.name.len() >= 3 && text.contains(&r.name.to_ascii_lowercase()))
            .min_by_key(|r| {
                (
                    text.find(&r.name.to_ascii_lowercase()),
                    std::cmp::Reverse(r.name.len()),
                    r.sales_rank,
                )
            })
    };
    if let Some(title) = title_re().captures(html.as_bytes()).and_then(|c| c.get(1)) {
        if let Some(rec) = mentions(&lower(title.as_bytes())) {
            return Some(rec);
        }
    }
    mentions(&html)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackVector {
    FundTransfer,
    TokenSteal,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub file: String,
    pub offset: usize,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackVectorReport {
    pub vector: AttackVector,
    /// Addresses that are not known collection contracts.
    pub wallet_addresses: Vec<ChainAddress>,
    /// Distinct known-collection contracts embedded in the page.
    pub embedded_contract_count: usize,
    pub evidence: Vec<Evidence>,
    /// Both the token-steal and fund-transfer rules matched; token steal
    /// was reported.
    pub dual_evidence: bool,
}

fn find_literals(sources: &[(String, String)], patterns: &[&str]) -> Vec<Evidence> {
    let mut out = Vec::new();
    for (file, text) in sources {
        for p in patterns {
            for (offset, _) in text.match_indices(p) {
                out.push(Evidence {
                    file: file.clone(),
                    offset,
                    pattern: p.to_string(),
                });
            }
        }
    }
    out
}

fn sort_evidence(ev: &mut Vec<Evidence>) {
    ev.sort_by(|a, b| (&a.file, a.offset, &a.pattern).cmp(&(&b.file, b.offset, &b.pattern)));
    ev.dedup();
}

/// Labels the page as a token stealer, a fraudulent fund transfer or
/// neither. `min_contracts` is the number of distinct known contracts that
/// must be embedded for the token-steal rule.
pub fn classify_attack_vector(
    snapshot: &SiteSnapshot,
    registry: &CollectionRegistry,
    min_contracts: usize,
) -> AttackVectorReport {
    let sources: Vec<(String, String)> = snapshot
        .sources()
        .map(|(f, b)| (f.to_string(), lower(b)))
        .collect();
    let mut contracts = Vec::new();
    let mut wallets = Vec::new();
    for mut ex in extract_chain_addresses(snapshot) {
        if registry.contract(&ex.address.hex).is_some() {
            ex.address.role_hint = RoleHint::Contract;
            contracts.push(ex);
        } else {
            ex.address.role_hint = RoleHint::Wallet;
            wallets.push(ex);
        }
    }

    let transfer_hits = find_literals(&sources, &TRANSFER_PATTERNS);
    let steal = contracts.len() >= min_contracts.max(1) && !transfer_hits.is_empty();

    let connect_hits = find_literals(&sources, &WALLET_CONNECT);
    let mut payment_hits = Vec::new();
    for (file, text) in &sources {
        for (name, re) in payment_res() {
            for m in re.find_iter(text.as_bytes()) {
                payment_hits.push(Evidence {
                    file: file.clone(),
                    offset: m.start(),
                    pattern: name.to_string(),
                });
            }
        }
    }
    let fund = !connect_hits.is_empty() && !wallets.is_empty() && !payment_hits.is_empty();

    let occurrence_evidence = |list: &[ExtractedAddress], tag: &str| -> Vec<Evidence> {
        list.iter()
            .flat_map(|ex| {
                ex.occurrences.iter().map(move |loc| Evidence {
                    file: loc.file.clone(),
                    offset: loc.offset,
                    pattern: format!("{tag}:{}", ex.address.normalized()),
                })
            })
            .collect()
    };

    let (vector, mut evidence) = if steal {
        let mut ev = transfer_hits;
        ev.extend(occurrence_evidence(&contracts, "known_contract"));
        (AttackVector::TokenSteal, ev)
    } else if fund {
        let mut ev = connect_hits;
        ev.extend(payment_hits);
        ev.extend(occurrence_evidence(&wallets, "wallet"));
        (AttackVector::FundTransfer, ev)
    } else {
        (AttackVector::None, Vec::new())
    };
    sort_evidence(&mut evidence);
    AttackVectorReport {
        vector,
        wallet_addresses: wallets.into_iter().map(|e| e.address).collect(),
        embedded_contract_count: contracts.len(),
        evidence,
        dual_evidence: steal && fund,
    }
}

/// Everything the analyzer says about one snapshot; one line of
/// `analysis.ndjson`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteAnalysis {
    pub snapshot_id: String,
    pub url: String,
    pub claimed_slug: Option<String>,
    pub addresses: Vec<ExtractedAddress>,
    pub links: LinkAudit,
    pub attack: AttackVectorReport,
}

pub fn analyze(
    snapshot: &SiteSnapshot,
    registry: &CollectionRegistry,
    claimed_hint: Option<&str>,
    min_contracts: usize,
) -> SiteAnalysis {
    let claimed = infer_claimed(snapshot, registry, claimed_hint);
    SiteAnalysis {
        snapshot_id: snapshot.snapshot_id.clone(),
        url: snapshot.url.clone(),
        claimed_slug: claimed.map(|c| c.slug.clone()),
        addresses: extract_chain_addresses(snapshot),
        links: audit_links(snapshot, claimed),
        attack: classify_attack_vector(snapshot, registry, min_contracts),
    }
}
