//! CART trees grown on Gini impurity.
//!
//! Split quality is compared exactly. For a split into left/right with class
//! counts `l` and `r`, minimising the weighted child impurity is the same as
//! maximising `Σl²/|l| + Σr²/|r|`, which is compared by cross-multiplying in
//! 128-bit integers so no two splits ever tie or order differently because
//! of rounding.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: u32,
        /// Sample-weighted Gini decrease `n·g - nL·gL - nR·gR`.
        decrease: f64,
    },
    Leaf {
        /// `[benign, phishing]` sample counts.
        counts: [u32; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Seed of the generator that drew this tree's bootstrap sample and
    /// feature subsets.
    pub seed: u64,
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { counts } => return *counts,
            }
        }
    }

    /// Phishing fraction of the leaf `x` lands in.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let [b, p] = self.leaf_for(x);
        if b + p == 0 {
            0.0
        } else {
            p as f64 / (b + p) as f64
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

pub fn gini(counts: [u64; 2]) -> f64 {
    let n = counts[0] + counts[1];
    if n == 0 {
        return 0.0;
    }
    let (a, b) = (counts[0] as f64 / n as f64, counts[1] as f64 / n as f64);
    1.0 - a * a - b * b
}

/// Exact split score `Σl²/nl + Σr²/nr` kept as a fraction.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn new(l: [u64; 2], r: [u64; 2]) -> Self {
        let nl = (l[0] + l[1]) as u128;
        let nr = (r[0] + r[1]) as u128;
        let sl = (l[0] as u128).pow(2) + (l[1] as u128).pow(2);
        let sr = (r[0] as u128).pow(2) + (r[1] as u128).pow(2);
        Score {
            num: sl * nr + sr * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub left_counts: [u64; 2],
    pub right_counts: [u64; 2],
}

/// Best `(feature, midpoint threshold)` over `features` for the sample
/// multiset `idx`; ties go to the lower feature index, then the lower
/// threshold. `None` when no feature admits a split leaving at least
/// `min_leaf` samples on each side.
pub fn best_split(
    data: &Dataset,
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let min_leaf = min_leaf.max(1) as u64;
    let mut total = [0u64; 2];
    for &i in idx {
        total[data.labels[i] as usize] += 1;
    }
    let mut best: Option<(Score, SplitChoice)> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| data.rows[a][f].total_cmp(&data.rows[b][f]));
        let mut left = [0u64; 2];
        for w in 0..order.len().saturating_sub(1) {
            left[data.labels[order[w]] as usize] += 1;
            let (lo, hi) = (data.rows[order[w]][f], data.rows[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            if left[0] + left[1] < min_leaf || right[0] + right[1] < min_leaf {
                continue;
            }
            let mut threshold = (lo + hi) / 2.0;
            if threshold >= hi {
                // adjacent floats: the midpoint rounds up onto `hi`
                threshold = lo;
            }
            let cand = SplitChoice {
                feature: f,
                threshold,
                left_counts: left,
                right_counts: right,
            };
            let score = Score::new(left, right);
            let better = match &best {
                None => true,
                Some((bs, bc)) => match score.cmp(bs) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => (cand.feature, cand.threshold) < (bc.feature, bc.threshold),
                },
            };
            if better {
                best = Some((score, cand));
            }
        }
    }
    best.map(|(_, c)| c)
}

pub struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub mtry: usize,
}

/// Grows one tree on the sample multiset `idx`.
pub fn grow<R: Rng>(
    data: &Dataset,
    idx: Vec<usize>,
    params: &GrowParams,
    seed: u64,
    rng: &mut R,
) -> Tree {
    let mut nodes = Vec::new();
    let mut stack = vec![(idx, 0usize, usize::MAX, false)];
    // iterative build; each entry is (samples, depth, parent, is_right)
    while let Some((idx, depth, parent, is_right)) = stack.pop() {
        let me = nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_right {
                    *right = me;
                } else {
                    *left = me;
                }
            }
        }
        let mut counts = [0u64; 2];
        for &i in &idx {
            counts[data.labels[i] as usize] += 1;
        }
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        let choice = if pure || depth_capped || idx.len() < 2 * params.min_leaf.max(1) {
            None
        } else {
            let features = sample_features(data, &idx, params.mtry, rng);
            best_split(data, &idx, &features, params.min_leaf)
        };
        match choice {
            None => nodes.push(Node::Leaf {
                counts: [counts[0] as u32, counts[1] as u32],
            }),
            Some(c) => {
                let n = idx.len() as f64;
                let (nl, nr) = (
                    (c.left_counts[0] + c.left_counts[1]) as f64,
                    (c.right_counts[0] + c.right_counts[1]) as f64,
                );
                let decrease =
                    (n * gini(counts) - nl * gini(c.left_counts) - nr * gini(c.right_counts))
                        .max(0.0);
                nodes.push(Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: usize::MAX,
                    right: usize::MAX,
                    samples: idx.len() as u32,
                    decrease,
                });
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| data.rows[i][c.feature] <= c.threshold);
                stack.push((r, depth + 1, me, true));
                stack.push((l, depth + 1, me, false));
            }
        }
    }
    Tree { seed, nodes }
}

/// Up to `mtry` features, in random order, that are not constant over
/// `idx`, returned sorted.
fn sample_features<R: Rng>(data: &Dataset, idx: &[usize], mtry: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..data.n_features()).collect();
    all.shuffle(rng);
    let mut picked = Vec::with_capacity(mtry);
    for f in all {
        if picked.len() == mtry {
            break;
        }
        let first = data.rows[idx[0]][f];
        if idx.iter().any(|&i| data.rows[i][f] != first) {
            picked.push(f);
        }
    }
    picked.sort_unstable();
    picked
}
