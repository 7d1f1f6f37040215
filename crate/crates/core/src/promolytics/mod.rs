//! Promotion-ecosystem analytics: giveaway tweets, bot participation,
//! follower gains, rank-sum comparisons and rule-based labeling of promoted
//! collections.

mod ranksum;
mod tweets;

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{ecdf, Descriptive};

pub use ranksum::{
    doubled_midranks, wilcoxon_rank_sum, RankSumMode, RankSumResult, EXACT_MAX_POOLED,
};
pub use tweets::{read_tweets, Action, Prize, PromoGrammar, PromotionTweet, Tweet};

/// Days without a tweet after a missed mint date before a collection counts
/// as abandoned.
pub const ABANDON_AFTER_DAYS: i64 = 60;

/// Bot-score cut-off used in the headline figures.
pub const DEFAULT_BOT_THRESHOLD: f64 = 0.43;

#[derive(Debug, Error)]
pub enum PromoError {
    #[error("no engagement records")]
    EmptyRecords,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("line {line}: bot score {score} outside [0, 1]")]
    InvalidScore { line: usize, score: f64 },
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("samples contain non-finite values")]
    NonFinite,
    #[error("exact mode supports at most {max} pooled values, got {pooled}", max = EXACT_MAX_POOLED)]
    ExactTooLarge { pooled: usize },
    #[error("group {0:?} has no values")]
    EmptyGroup(String),
    #[error("pattern file line {line}: {reason}")]
    Pattern { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Json { line: usize, reason: String },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Retweeter,
    FollowerDuring,
    FollowerAfter,
    Liker,
    Replier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub account_id: String,
    pub bot_score: f64,
    pub relation: Relation,
}

/// Reads an `account_id,bot_score,relation` CSV.
pub fn read_engagement(reader: impl Read) -> Result<Vec<EngagementRecord>, PromoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<EngagementRecord>().enumerate() {
        let r = rec?;
        if !(0.0..=1.0).contains(&r.bot_score) {
            return Err(PromoError::InvalidScore {
                line: i + 2,
                score: r.bot_score,
            });
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BotShare {
    pub total: usize,
    pub bots: usize,
    pub fraction: f64,
}

impl BotShare {
    fn of<'a>(scores: impl Iterator<Item = &'a f64>, t: f64) -> Self {
        let (mut total, mut bots) = (0, 0);
        for s in scores {
            total += 1;
            if *s >= t {
                bots += 1;
            }
        }
        let fraction = if total == 0 {
            0.0
        } else {
            bots as f64 / total as f64
        };
        BotShare {
            total,
            bots,
            fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotBreakdown {
    pub threshold: f64,
    pub overall: BotShare,
    pub by_relation: BTreeMap<Relation, BotShare>,
}

fn check_threshold(t: f64) -> Result<(), PromoError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(PromoError::InvalidThreshold(t))
    }
}

/// Share of accounts with `bot_score >= t`, overall and per relation.
pub fn bot_fraction(records: &[EngagementRecord], t: f64) -> Result<BotBreakdown, PromoError> {
    check_threshold(t)?;
    if records.is_empty() {
        return Err(PromoError::EmptyRecords);
    }
    let mut per: BTreeMap<Relation, Vec<f64>> = BTreeMap::new();
    for r in records {
        per.entry(r.relation).or_default().push(r.bot_score);
    }
    Ok(BotBreakdown {
        threshold: t,
        overall: BotShare::of(records.iter().map(|r| &r.bot_score), t),
        by_relation: per
            .iter()
            .map(|(rel, s)| (*rel, BotShare::of(s.iter(), t)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub bots: usize,
    pub total: usize,
}

/// Bot counts at each threshold, in the order given.
pub fn threshold_sweep(
    records: &[EngagementRecord],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, PromoError> {
    thresholds
        .iter()
        .map(|&t| {
            check_threshold(t)?;
            let share = BotShare::of(records.iter().map(|r| &r.bot_score), t);
            Ok(SweepPoint {
                threshold: t,
                bots: share.bots,
                total: share.total,
            })
        })
        .collect()
}

/// `0.00, 0.05, ..., 1.00`.
pub fn default_sweep() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainStats {
    pub group: String,
    pub stats: Descriptive,
    pub cdf: Vec<(f64, f64)>,
}

/// Descriptive statistics and empirical CDF of follower gains per group.
pub fn follower_gain_stats(
    groups: &BTreeMap<String, Vec<u64>>,
) -> Result<Vec<GainStats>, PromoError> {
    groups
        .iter()
        .map(|(g, gains)| {
            let v: Vec<f64> = gains.iter().map(|&x| x as f64).collect();
            let stats = Descriptive::of(&v).ok_or_else(|| PromoError::EmptyGroup(g.clone()))?;
            Ok(GainStats {
                group: g.clone(),
                stats,
                cdf: ecdf(&v),
            })
        })
        .collect()
}

/// Reads a `collection,status,gain` CSV into per-status gain lists.
pub fn read_gains(reader: impl Read) -> Result<BTreeMap<String, Vec<u64>>, PromoError> {
    #[derive(Deserialize)]
    struct Row {
        #[allow(dead_code)]
        collection: String,
        status: String,
        gain: u64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for rec in rdr.deserialize::<Row>() {
        let r = rec?;
        out.entry(r.status).or_default().push(r.gain);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountStatus {
    Active,
    Removed,
    Suspended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionEvidence {
    pub collection: String,
    pub status: AccountStatus,
    pub mint_completed: bool,
    pub mint_date: Option<DateTime<Utc>>,
    pub last_tweet_at: Option<DateTime<Utc>>,
    pub website_alive: bool,
    pub marketplace_alive: bool,
    pub shares_phishing_link: bool,
    pub premint_full_rights: bool,
}

pub fn read_evidence(reader: impl Read) -> Result<Vec<CollectionEvidence>, PromoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(PromoError::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FraudLabel {
    Phishing,
    Rugpull,
    AbandonedPremint,
    Legitimate,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRules {
    /// Require both the website and the marketplace page to be gone for a
    /// rug pull. When false either one suffices.
    pub rugpull_requires_both: bool,
    pub abandon_after_days: i64,
}

impl Default for LabelRules {
    fn default() -> Self {
        LabelRules {
            rugpull_requires_both: true,
            abandon_after_days: ABANDON_AFTER_DAYS,
        }
    }
}

/// First matching rule wins: phishing link, rug pull, abandoned pre-mint,
/// then active accounts are legitimate and everything else unknown.
pub fn label_collection(
    e: &CollectionEvidence,
    now: DateTime<Utc>,
    rules: &LabelRules,
) -> FraudLabel {
    if e.shares_phishing_link {
        return FraudLabel::Phishing;
    }
    let dead = if rules.rugpull_requires_both {
        !e.website_alive && !e.marketplace_alive
    } else {
        !e.website_alive || !e.marketplace_alive
    };
    if e.mint_completed && dead {
        return FraudLabel::Rugpull;
    }
    let missed_mint = e.mint_date.is_some_and(|d| d < now) && !e.mint_completed;
    // no recorded tweet gives no evidence of silence
    let silent = e
        .last_tweet_at
        .is_some_and(|t| now - t >= Duration::days(rules.abandon_after_days));
    if missed_mint && silent {
        return FraudLabel::AbandonedPremint;
    }
    match e.status {
        AccountStatus::Active => FraudLabel::Legitimate,
        _ => FraudLabel::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(score: f64, relation: Relation) -> EngagementRecord {
        EngagementRecord {
            account_id: "a".into(),
            bot_score: score,
            relation,
        }
    }

    #[test]
    fn inclusive_bot_rule() {
        let r: Vec<_> = [0.5, 0.3, 0.43]
            .iter()
            .map(|&s| rec(s, Relation::Retweeter))
            .collect();
        assert_eq!(bot_fraction(&r, 0.43).unwrap().overall.fraction, 2.0 / 3.0);
        assert_eq!(bot_fraction(&r, 0.0).unwrap().overall.fraction, 1.0);
        assert_eq!(bot_fraction(&r, 1.0).unwrap().overall.fraction, 0.0);
        assert!(bot_fraction(&r, 1.0 + f64::EPSILON).is_err());
        assert!(matches!(
            bot_fraction(&[], 0.5),
            Err(PromoError::EmptyRecords)
        ));
    }

    #[test]
    fn per_relation_split() {
        let r = vec![
            rec(0.9, Relation::FollowerDuring),
            rec(0.1, Relation::FollowerDuring),
            rec(0.1, Relation::FollowerAfter),
        ];
        let b = bot_fraction(&r, 0.43).unwrap();
        assert_eq!(b.by_relation[&Relation::FollowerDuring].fraction, 0.5);
        assert_eq!(b.by_relation[&Relation::FollowerAfter].fraction, 0.0);
        assert!(!b.by_relation.contains_key(&Relation::Liker));
    }

    #[test]
    fn sweep_examples() {
        let r: Vec<_> = (0..7).map(|_| rec(0.5, Relation::Liker)).collect();
        let s = threshold_sweep(&r, &[0.4, 0.6]).unwrap();
        assert_eq!((s[0].bots, s[1].bots), (7, 0));
        assert!(threshold_sweep(&r, &[]).unwrap().is_empty());
    }

    #[test]
    fn gain_rows() {
        let mut g = BTreeMap::new();
        g.insert("active".to_string(), vec![2, 2601, 37087]);
        g.insert("single".to_string(), vec![9]);
        g.insert("even".to_string(), vec![1, 2, 3, 4]);
        let rows = follower_gain_stats(&g).unwrap();
        let active = &rows[0];
        assert_eq!(
            (active.stats.min, active.stats.max, active.stats.median),
            (2.0, 37087.0, 2601.0)
        );
        assert_eq!(rows[1].stats.median, 2.5);
        assert_eq!(rows[2].cdf, vec![(9.0, 1.0)]);
        g.insert("empty".to_string(), vec![]);
        assert!(matches!(
            follower_gain_stats(&g),
            Err(PromoError::EmptyGroup(_))
        ));
    }

    fn now() -> DateTime<Utc> {
        "2022-12-01T00:00:00Z".parse().unwrap()
    }

    fn evidence() -> CollectionEvidence {
        CollectionEvidence {
            collection: "c".into(),
            status: AccountStatus::Active,
            mint_completed: false,
            mint_date: None,
            last_tweet_at: None,
            website_alive: true,
            marketplace_alive: true,
            shares_phishing_link: false,
            premint_full_rights: false,
        }
    }

    #[test]
    fn labeling_examples() {
        let rules = LabelRules::default();
        let e = CollectionEvidence {
            shares_phishing_link: true,
            ..evidence()
        };
        assert_eq!(label_collection(&e, now(), &rules), FraudLabel::Phishing);
        let e = CollectionEvidence {
            mint_completed: true,
            website_alive: false,
            marketplace_alive: false,
            ..evidence()
        };
        assert_eq!(label_collection(&e, now(), &rules), FraudLabel::Rugpull);
        let e = CollectionEvidence {
            mint_date: Some(now() - Duration::days(100)),
            last_tweet_at: Some(now() - Duration::days(70)),
            ..evidence()
        };
        assert_eq!(
            label_collection(&e, now(), &rules),
            FraudLabel::AbandonedPremint
        );
        let e = CollectionEvidence {
            last_tweet_at: Some(now() - Duration::days(59)),
            ..e
        };
        assert_eq!(label_collection(&e, now(), &rules), FraudLabel::Legitimate);
        let e = CollectionEvidence {
            status: AccountStatus::Suspended,
            ..e
        };
        assert_eq!(label_collection(&e, now(), &rules), FraudLabel::Unknown);
    }

    #[test]
    fn rugpull_strictness_flag() {
        let e = CollectionEvidence {
            mint_completed: true,
            website_alive: false,
            ..evidence()
        };
        assert_eq!(
            label_collection(&e, now(), &LabelRules::default()),
            FraudLabel::Legitimate
        );
        let loose = LabelRules {
            rugpull_requires_both: false,
            ..Default::default()
        };
        assert_eq!(label_collection(&e, now(), &loose), FraudLabel::Rugpull);
    }

    #[test]
    fn labeling_is_total() {
        let rules = LabelRules::default();
        let when = [
            None,
            Some(now() - Duration::days(90)),
            Some(now() + Duration::days(5)),
        ];
        for bits in 0u32..64 {
            for status in [
                AccountStatus::Active,
                AccountStatus::Removed,
                AccountStatus::Suspended,
            ] {
                for md in when {
                    for lt in when {
                        let e = CollectionEvidence {
                            collection: "c".into(),
                            status,
                            mint_completed: bits & 1 != 0,
                            mint_date: md,
                            last_tweet_at: lt,
                            website_alive: bits & 2 != 0,
                            marketplace_alive: bits & 4 != 0,
                            shares_phishing_link: bits & 8 != 0,
                            premint_full_rights: bits & 16 != 0,
                        };
                        let l = label_collection(&e, now(), &rules);
                        // each rule's precondition holds for the label chosen
                        match l {
                            FraudLabel::Phishing => assert!(e.shares_phishing_link),
                            FraudLabel::Rugpull => assert!(
                                e.mint_completed && !e.website_alive && !e.marketplace_alive
                            ),
                            FraudLabel::AbandonedPremint => {
                                assert!(!e.mint_completed && md.is_some() && lt.is_some())
                            }
                            FraudLabel::Legitimate => assert_eq!(status, AccountStatus::Active),
                            FraudLabel::Unknown => assert_ne!(status, AccountStatus::Active),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reads_csv_inputs() {
        let r = read_engagement(
            "account_id,bot_score,relation\n1,0.5,retweeter\n2,0.1,follower_during\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(r[1].relation, Relation::FollowerDuring);
        assert!(
            read_engagement("account_id,bot_score,relation\n1,1.5,liker\n".as_bytes()).is_err()
        );
        let ev = read_evidence(
            "collection,status,mint_completed,mint_date,last_tweet_at,website_alive,marketplace_alive,shares_phishing_link,premint_full_rights\n\
             apes,removed,true,2022-05-01T00:00:00Z,,false,false,false,false\n"
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(ev[0].status, AccountStatus::Removed);
        assert_eq!(ev[0].last_tweet_at, None);
    }
}
