//! Giveaway-tweet recognition driven by a pattern file.

use std::collections::BTreeSet;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PromoError;

const BUNDLED_PATTERNS: &str = include_str!("../../data/promo_patterns.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Follow,
    Retweet,
    Like,
    Tag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prize {
    pub amount: f64,
    pub currency: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionTweet {
    pub tweet_id: String,
    pub promoter: String,
    pub promotee: String,
    pub prize: Option<Prize>,
    pub deadline_secs: Option<u64>,
    pub actions: BTreeSet<Action>,
}

/// A tweet as read from the NDJSON input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub author: String,
    pub text: String,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

pub fn read_tweets(reader: impl BufRead) -> Result<Vec<Tweet>, PromoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PromoError::Json {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Prize,
    Follow,
    Retweet,
    Like,
    Tag,
    Deadline,
}

#[derive(Debug, Clone)]
pub struct PromoGrammar {
    patterns: Vec<(Kind, Regex)>,
    handle: Regex,
}

impl PromoGrammar {
    /// The grammar shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_PATTERNS).expect("bundled pattern file is valid")
    }

    pub fn parse(text: &str) -> Result<Self, PromoError> {
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| PromoError::Pattern {
                line: i + 1,
                reason,
            };
            let (kind, re) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("missing regex".into()))?;
            let kind = match kind {
                "prize" => Kind::Prize,
                "follow" => Kind::Follow,
                "retweet" => Kind::Retweet,
                "like" => Kind::Like,
                "tag" => Kind::Tag,
                "deadline" => Kind::Deadline,
                other => return Err(bad(format!("unknown kind {other:?}"))),
            };
            let re = Regex::new(re.trim()).map_err(|e| bad(e.to_string()))?;
            let names: Vec<&str> = re.capture_names().flatten().collect();
            let required: &[&str] = match kind {
                Kind::Prize => &["amount", "currency"],
                Kind::Deadline => &["n", "unit"],
                _ => &[],
            };
            if let Some(missing) = required.iter().find(|g| !names.contains(g)) {
                return Err(bad(format!("pattern lacks group {missing:?}")));
            }
            patterns.push((kind, re));
        }
        Ok(PromoGrammar {
            patterns,
            handle: Regex::new(r"@([A-Za-z0-9_]{1,15})").expect("static regex"),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PromoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn of_kind(&self, kind: Kind) -> impl Iterator<Item = &Regex> {
        self.patterns
            .iter()
            .filter(move |(k, _)| *k == kind)
            .map(|(_, r)| r)
    }

    /// Earliest match of any pattern of `kind`; ties go to the earlier pattern.
    fn first<'t>(&self, kind: Kind, text: &'t str) -> Option<regex::Captures<'t>> {
        let mut best: Option<regex::Captures<'t>> = None;
        for re in self.of_kind(kind) {
            if let Some(c) = re.captures(text) {
                let start = c.get(0).expect("group 0").start();
                if best
                    .as_ref()
                    .is_none_or(|b| start < b.get(0).expect("group 0").start())
                {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn present(&self, kind: Kind, text: &str) -> bool {
        self.of_kind(kind).any(|re| re.is_match(text))
    }

    /// Handles named in follow directives, in text order.
    fn follow_handles(&self, text: &str) -> Vec<String> {
        let mut spans: Vec<(usize, usize)> = self
            .of_kind(Kind::Follow)
            .flat_map(|re| re.find_iter(text).map(|m| (m.start(), m.end())))
            .collect();
        spans.sort();
        let mut out: Vec<String> = Vec::new();
        for (s, e) in spans {
            for c in self.handle.captures_iter(&text[s..e]) {
                let h = c[1].to_string();
                if !out.iter().any(|o| o.eq_ignore_ascii_case(&h)) {
                    out.push(h);
                }
            }
        }
        out
    }

    /// Recognizes a giveaway. The promotee is the first followed handle that
    /// is not the author.
    pub fn parse_tweet(&self, tweet_id: &str, author: &str, text: &str) -> Option<PromotionTweet> {
        let author = author.trim_start_matches('@');
        let prize_caps = self.first(Kind::Prize, text)?;
        if !self.present(Kind::Retweet, text) {
            return None;
        }
        let promotee = self
            .follow_handles(text)
            .into_iter()
            .find(|h| !h.eq_ignore_ascii_case(author))?;
        let prize = prize_from(&prize_caps);
        let deadline_secs = self
            .first(Kind::Deadline, text)
            .and_then(|c| deadline_from(&c));
        let mut actions: BTreeSet<Action> = [Action::Follow, Action::Retweet].into();
        if self.present(Kind::Like, text) {
            actions.insert(Action::Like);
        }
        if self.present(Kind::Tag, text) {
            actions.insert(Action::Tag);
        }
        Some(PromotionTweet {
            tweet_id: tweet_id.to_string(),
            promoter: author.to_string(),
            promotee,
            prize,
            deadline_secs,
            actions,
        })
    }
}

fn prize_from(c: &regex::Captures<'_>) -> Option<Prize> {
    let raw = c.name("amount")?.as_str();
    let mut amount = match raw.to_ascii_lowercase().as_str() {
        "a" | "an" | "one" => 1.0,
        s => s.replace(',', ".").parse().ok()?,
    };
    if c.get(0)?.as_str().to_ascii_lowercase().ends_with('k') {
        amount *= 1000.0;
    }
    let cur = c.name("currency")?.as_str();
    let currency = match cur {
        "$" | "€" | "£" => cur.to_string(),
        other => {
            let up = other.to_ascii_uppercase();
            if up.starts_with("NFT") {
                "NFT".to_string()
            } else if up.starts_with("WL") || up.starts_with("WHITELIST") {
                "WL".to_string()
            } else {
                up
            }
        }
    };
    Some(Prize { amount, currency })
}

fn deadline_from(c: &regex::Captures<'_>) -> Option<u64> {
    let n: u64 = c.name("n")?.as_str().parse().ok()?;
    let unit = c.name("unit")?.as_str().to_ascii_lowercase();
    let secs = match unit.chars().next()? {
        'm' => 60,
        'h' => 3_600,
        'd' => 86_400,
        'w' => 7 * 86_400,
        _ => return None,
    };
    n.checked_mul(secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> PromoGrammar {
        PromoGrammar::bundled()
    }

    #[test]
    fn sweepstake_example() {
        let t = g()
            .parse_tweet(
                "1",
                "promoter",
                "🎁 $50 in 24 hours! Follow @CoolApes and RT to enter",
            )
            .unwrap();
        assert_eq!(t.promotee, "CoolApes");
        assert_eq!(
            t.prize,
            Some(Prize {
                amount: 50.0,
                currency: "$".into()
            })
        );
        assert_eq!(t.deadline_secs, Some(24 * 3600));
        assert_eq!(t.actions, [Action::Follow, Action::Retweet].into());
    }

    #[test]
    fn first_follow_directive_wins() {
        let t = g()
            .parse_tweet("2", "promoter", "Follow @X, follow @Y, RT = win 0.1 ETH")
            .unwrap();
        assert_eq!(t.promotee, "X");
        assert_eq!(
            t.prize,
            Some(Prize {
                amount: 0.1,
                currency: "ETH".into()
            })
        );
        assert_eq!(t.deadline_secs, None);
    }

    #[test]
    fn chatter_does_not_match() {
        assert!(g().parse_tweet("3", "a", "gm everyone").is_none());
        // no retweet directive
        assert!(g().parse_tweet("4", "a", "Win $100! Follow @Foo").is_none());
        // no follow handle
        assert!(g().parse_tweet("5", "a", "Win $100! RT this").is_none());
    }

    #[test]
    fn author_skipped_as_promotee() {
        let t = g()
            .parse_tweet(
                "6",
                "@Host",
                "Follow @host & @MoonCats, like + RT. 2 NFTs to 2 winners, ends in 3 days",
            )
            .unwrap();
        assert_eq!(t.promotee, "MoonCats");
        assert_eq!(
            t.prize,
            Some(Prize {
                amount: 2.0,
                currency: "NFT".into()
            })
        );
        assert_eq!(t.deadline_secs, Some(3 * 86_400));
        assert!(t.actions.contains(&Action::Like));
    }

    #[test]
    fn pattern_file_errors() {
        assert!(PromoGrammar::parse("prize (?P<amount>\\d+)").is_err());
        assert!(PromoGrammar::parse("bogus x").is_err());
        assert!(PromoGrammar::parse("follow (").is_err());
    }
}
