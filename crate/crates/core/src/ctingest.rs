//! Certificate-transparency stream parsing and candidate filtering.
//!
//! Each stream line is a JSON message shaped like the public CT firehose:
//! `{"data":{"leaf_cert":{"all_domains":[..],"not_before":<epoch>,"issuer":{"O":".."}},"seen":<epoch>}}`.
//! A certificate's `not_before` stands in for the registration date of the
//! domains it covers.

use std::io::BufRead;

use chrono::{DateTime, TimeZone, Utc};
use serde_json::{json, Value};
use thiserror::Error;

use crate::psl;
use crate::squatgen::{
    is_dns_valid, is_nft_related, CandidateDomain, CandidateSet, CandidateSource,
};

/// Allowed lead of `not_before` over the receipt time.
pub const CLOCK_SKEW_SECS: i64 = 300;

#[derive(Debug, Error, PartialEq)]
pub enum CtParseError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {field} has the wrong type")]
    WrongType { field: &'static str },
    #[error("certificate lists no domains")]
    EmptyDomains,
    #[error("not_before {not_before} is more than {CLOCK_SKEW_SECS}s after receipt at {seen_at}")]
    FutureCertificate {
        not_before: DateTime<Utc>,
        seen_at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtRecord {
    /// Lowercased, wildcard-stripped, deduplicated in first-seen order.
    pub all_domains: Vec<String>,
    pub not_before: DateTime<Utc>,
    pub issuer: String,
    pub seen_at: DateTime<Utc>,
}

fn field<'a>(v: &'a Value, path: &[&str], name: &'static str) -> Result<&'a Value, CtParseError> {
    let mut cur = v;
    for p in path {
        cur = cur.get(p).ok_or(CtParseError::MissingField(name))?;
    }
    if cur.is_null() {
        return Err(CtParseError::MissingField(name));
    }
    Ok(cur)
}

fn epoch_millis(v: &Value, name: &'static str) -> Result<DateTime<Utc>, CtParseError> {
    let secs = v.as_f64().ok_or(CtParseError::WrongType { field: name })?;
    let millis = (secs * 1000.0).round() as i64;
    Utc.timestamp_millis_opt(millis)
        .single()
        .ok_or(CtParseError::WrongType { field: name })
}

/// Parses one stream line. `received_at` is used as the receipt time when
/// the message carries no `data.seen`.
pub fn parse_ct_record(line: &str, received_at: DateTime<Utc>) -> Result<CtRecord, CtParseError> {
    let v: Value = serde_json::from_str(line).map_err(|e| CtParseError::Json(e.to_string()))?;
    let leaf = ["data", "leaf_cert"];
    let domains = field(
        &v,
        &[&leaf[..], &["all_domains"]].concat(),
        "data.leaf_cert.all_domains",
    )?
    .as_array()
    .ok_or(CtParseError::WrongType {
        field: "data.leaf_cert.all_domains",
    })?;
    let mut all_domains: Vec<String> = Vec::with_capacity(domains.len());
    for d in domains {
        let d = d.as_str().ok_or(CtParseError::WrongType {
            field: "data.leaf_cert.all_domains",
        })?;
        let d = d
            .trim()
            .trim_start_matches("*.")
            .trim_end_matches('.')
            .to_ascii_lowercase();
        if !d.is_empty() && !all_domains.contains(&d) {
            all_domains.push(d);
        }
    }
    if all_domains.is_empty() {
        return Err(CtParseError::EmptyDomains);
    }
    let not_before = epoch_millis(
        field(
            &v,
            &[&leaf[..], &["not_before"]].concat(),
            "data.leaf_cert.not_before",
        )?,
        "data.leaf_cert.not_before",
    )?;
    let issuer = field(
        &v,
        &[&leaf[..], &["issuer", "O"]].concat(),
        "data.leaf_cert.issuer.O",
    )?
    .as_str()
    .ok_or(CtParseError::WrongType {
        field: "data.leaf_cert.issuer.O",
    })?
    .to_string();
    let seen_at = match v.pointer("/data/seen") {
        Some(s) if !s.is_null() => epoch_millis(s, "data.seen")?,
        _ => received_at,
    };
    if (not_before - seen_at).num_seconds() > CLOCK_SKEW_SECS {
        return Err(CtParseError::FutureCertificate {
            not_before,
            seen_at,
        });
    }
    Ok(CtRecord {
        all_domains,
        not_before,
        issuer,
        seen_at,
    })
}

fn epoch_value(t: DateTime<Utc>) -> Value {
    let ms = t.timestamp_millis();
    if ms % 1000 == 0 {
        json!(ms / 1000)
    } else {
        json!(ms as f64 / 1000.0)
    }
}

/// Renders a record in the wire format accepted by [`parse_ct_record`].
pub fn to_wire_line(r: &CtRecord) -> String {
    json!({
        "data": {
            "leaf_cert": {
                "all_domains": r.all_domains,
                "not_before": epoch_value(r.not_before),
                "issuer": { "O": r.issuer },
            },
            "seen": epoch_value(r.seen_at),
        }
    })
    .to_string()
}

/// Lazily parses an NDJSON stream, skipping blank lines.
pub fn read_stream<R: BufRead>(
    reader: R,
    received_at: DateTime<Utc>,
) -> impl Iterator<Item = Result<CtRecord, CtParseError>> {
    reader.lines().filter_map(move |line| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(parse_ct_record(&l, received_at)),
        Err(e) => Some(Err(CtParseError::Json(e.to_string()))),
    })
}

/// What the filter is looking for.
#[derive(Debug, Clone)]
pub struct Watch<'a> {
    pub candidates: &'a CandidateSet,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub records: usize,
    pub malformed: usize,
    pub emitted: usize,
}

/// The part of a domain a term match is checked against: everything left
/// of the public suffix.
fn name_part(domain: &str) -> &str {
    match psl::SuffixList::bundled().public_suffix(domain) {
        Some(sfx) if sfx.len() < domain.len() => &domain[..domain.len() - sfx.len() - 1],
        _ => domain,
    }
}

/// Emits one CT-sourced candidate per domain that was certified at or after
/// `since` and is either a known squat candidate or contains a watch term.
/// Output follows stream order; later repeats of a domain are dropped.
pub fn filter_stream<I>(
    records: I,
    watch: &Watch<'_>,
    since: DateTime<Utc>,
) -> (Vec<CandidateDomain>, FilterStats)
where
    I: IntoIterator<Item = Result<CtRecord, CtParseError>>,
{
    let mut stats = FilterStats::default();
    let mut emitted = std::collections::HashSet::new();
    let mut out = Vec::new();
    for rec in records {
        stats.records += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                log::debug!("skipping CT record: {e}");
                stats.malformed += 1;
                continue;
            }
        };
        if rec.not_before < since {
            continue;
        }
        for domain in &rec.all_domains {
            if emitted.contains(domain) || !is_dns_valid(domain) {
                continue;
            }
            let known = watch.candidates.get(domain);
            if known.is_none() && !is_nft_related(name_part(domain), &watch.terms) {
                continue;
            }
            emitted.insert(domain.clone());
            out.push(CandidateDomain {
                domain: domain.clone(),
                source: CandidateSource::CtStream,
                seed: known.and_then(|k| k.seed.clone()),
                rule: known.and_then(|k| k.rule),
                first_seen: rec.seen_at,
            });
        }
    }
    stats.emitted = out.len();
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squatgen::RuleKind;
    use proptest::prelude::*;

    fn t(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    fn line(domains: &[&str], not_before: i64) -> String {
        json!({"data":{"leaf_cert":{"all_domains":domains,"not_before":not_before,"issuer":{"O":"Let's Encrypt"}}}})
            .to_string()
    }

    #[test]
    fn wildcard_strip_and_dedup() {
        let r =
            parse_ct_record(&line(&["*.mint-azuki.xyz", "mint-azuki.xyz"], 100), t(200)).unwrap();
        assert_eq!(r.all_domains, vec!["mint-azuki.xyz"]);
        assert_eq!(r.issuer, "Let's Encrypt");
        assert_eq!(r.seen_at, t(200));
    }

    #[test]
    fn three_domains() {
        let r = parse_ct_record(&line(&["A.io", "b.io", "c.io"], 100), t(200)).unwrap();
        assert_eq!(r.all_domains, vec!["a.io", "b.io", "c.io"]);
    }

    #[test]
    fn missing_not_before_names_field() {
        let l = r#"{"data":{"leaf_cert":{"all_domains":["a.io"],"issuer":{"O":"x"}}}}"#;
        let e = parse_ct_record(l, t(0)).unwrap_err();
        assert_eq!(e, CtParseError::MissingField("data.leaf_cert.not_before"));
        assert!(e.to_string().contains("not_before"));
    }

    #[test]
    fn other_errors() {
        assert!(matches!(
            parse_ct_record("{nope", t(0)),
            Err(CtParseError::Json(_))
        ));
        assert_eq!(
            parse_ct_record(&line(&[], 1), t(0)),
            Err(CtParseError::EmptyDomains)
        );
        assert_eq!(
            parse_ct_record(&line(&["*."], 1), t(0)),
            Err(CtParseError::EmptyDomains)
        );
        let l = r#"{"data":{"leaf_cert":{"not_before":1,"issuer":{"O":"x"}}}}"#;
        assert_eq!(
            parse_ct_record(l, t(0)),
            Err(CtParseError::MissingField("data.leaf_cert.all_domains"))
        );
        assert!(matches!(
            parse_ct_record(&line(&["a.io"], 1000), t(0)),
            Err(CtParseError::FutureCertificate { .. })
        ));
        assert!(parse_ct_record(&line(&["a.io"], 300), t(0)).is_ok());
    }

    fn watch_set() -> CandidateSet {
        [CandidateDomain {
            domain: "azukii.com".into(),
            source: CandidateSource::Fuzzer,
            seed: Some("azuki".into()),
            rule: Some(RuleKind::Repetition),
            first_seen: t(0),
        }]
        .into_iter()
        .collect()
    }

    #[test]
    fn filter_examples() {
        let cands = watch_set();
        let watch = Watch {
            candidates: &cands,
            terms: vec!["nft".into(), "claim".into(), "mint".into()],
        };
        let since = t(1000);
        let stream = vec![
            parse_ct_record(&line(&["azukii.com"], 500), t(2000)),
            parse_ct_record(&line(&["azukii.com"], 1500), t(2000)),
            parse_ct_record(&line(&["nftgiveaway.top", "www.bank.com"], 1500), t(2000)),
            Err(CtParseError::EmptyDomains),
            parse_ct_record(&line(&["nftgiveaway.top"], 1600), t(2100)),
        ];
        let (out, stats) = filter_stream(stream, &watch, since);
        let got: Vec<_> = out.iter().map(|c| c.domain.as_str()).collect();
        assert_eq!(got, vec!["azukii.com", "nftgiveaway.top"]);
        assert_eq!(out[0].seed.as_deref(), Some("azuki"));
        assert_eq!(out[0].rule, Some(RuleKind::Repetition));
        assert_eq!(out[0].source, CandidateSource::CtStream);
        assert_eq!(out[1].first_seen, t(2000));
        assert_eq!(
            stats,
            FilterStats {
                records: 5,
                malformed: 1,
                emitted: 2
            }
        );
    }

    #[test]
    fn term_in_suffix_alone_does_not_match() {
        let cands = CandidateSet::new();
        let watch = Watch {
            candidates: &cands,
            terms: vec!["app".into()],
        };
        let (out, _) = filter_stream(
            vec![parse_ct_record(&line(&["shop.app"], 5), t(10))],
            &watch,
            t(0),
        );
        assert!(out.is_empty());
    }

    proptest! {
        #[test]
        fn wire_round_trip(
            domains in proptest::collection::btree_set("[a-z0-9]{1,10}\\.(com|xyz|io)", 1..5),
            nb in 0i64..2_000_000_000,
            lead in 0i64..1_000_000_000,
            issuer in "[A-Za-z' ]{0,20}",
        ) {
            let r = CtRecord {
                all_domains: domains.into_iter().collect(),
                not_before: Utc.timestamp_opt(nb, 0).unwrap(),
                issuer,
                seen_at: Utc.timestamp_millis_opt(nb * 1000 + lead).unwrap(),
            };
            prop_assert_eq!(parse_ct_record(&to_wire_line(&r), t(0)).unwrap(), r);
        }
    }
}
