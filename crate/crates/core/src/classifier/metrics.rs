//! Confusion counts, derived rates and rank-based ROC AUC.

use serde::{Deserialize, Serialize};

use super::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Undefined when the evaluated rows contain a single class.
    pub roc_auc: Option<f64>,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion, roc_auc: Option<f64>) -> Self {
        Metrics {
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            roc_auc,
            confusion,
        }
    }

    pub fn from_predictions(labels: &[bool], preds: &[Prediction]) -> Self {
        let mut c = Confusion::default();
        for (&y, p) in labels.iter().zip(preds) {
            match (y, p.phishing) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        let scores: Vec<f64> = preds.iter().map(|p| p.probability).collect();
        Metrics::from_confusion(c, roc_auc(labels, &scores))
    }

    /// Field-wise mean; the AUC mean covers only folds where it is defined.
    /// Confusion counts are summed.
    pub fn mean(all: &[Metrics]) -> Option<Metrics> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        let aucs: Vec<f64> = all.iter().filter_map(|m| m.roc_auc).collect();
        let mut confusion = Confusion::default();
        for m in all {
            confusion.tp += m.confusion.tp;
            confusion.fp += m.confusion.fp;
            confusion.tn += m.confusion.tn;
            confusion.fn_ += m.confusion.fn_;
        }
        Some(Metrics {
            accuracy: avg(|m| m.accuracy),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            roc_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
            confusion,
        })
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic over midranks:
/// the probability that a random positive outscores a random negative,
/// ties counting one half.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled midranks stay integral
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u64;
        pos_rank_sum2 += midrank2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    // U = R_pos - p(p+1)/2, doubled on both sides
    let u2 = pos_rank_sum2 - p * (p + 1);
    Some(u2 as f64 / (2 * p * q) as f64)
}
