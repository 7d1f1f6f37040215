//! Two-sample Wilcoxon rank-sum (Mann-Whitney) test.
//!
//! Ranks are mid-ranks over the pooled sample. Internally every rank is
//! doubled so tied ranks stay integral and the exact null distribution can
//! be counted without floating-point error.

use serde::{Deserialize, Serialize};

use super::PromoError;

/// Largest pooled size accepted by the exact mode.
pub const EXACT_MAX_POOLED: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMode {
    Exact,
    Normal,
}

impl RankSumMode {
    /// Exact when the pooled sample is small enough, normal otherwise.
    pub fn auto(n_x: usize, n_y: usize) -> Self {
        if n_x + n_y <= EXACT_MAX_POOLED {
            RankSumMode::Exact
        } else {
            RankSumMode::Normal
        }
    }
}

impl std::str::FromStr for RankSumMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(RankSumMode::Exact),
            "normal" => Ok(RankSumMode::Normal),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    pub n_x: usize,
    pub n_y: usize,
    pub u_x: f64,
    pub u_y: f64,
    /// `min(u_x, u_y)`.
    pub u: f64,
    /// Two-sided.
    pub p_value: f64,
    pub mode: RankSumMode,
}

/// Doubled mid-ranks of `pooled`, in input order.
pub fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share (i+1 + j+1)/2; doubled that is i+j+2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_rank_sum(
    x: &[f64],
    y: &[f64],
    mode: RankSumMode,
) -> Result<RankSumResult, PromoError> {
    if x.is_empty() || y.is_empty() {
        return Err(PromoError::EmptySample);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(PromoError::NonFinite);
    }
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let rank_sum_x2: u64 = ranks[..n].iter().sum();
    // U_x = R_x - n(n+1)/2, kept doubled
    let u_x2 = rank_sum_x2 - (n * (n + 1)) as u64;
    let nm2 = (2 * n * m) as u64;
    let u_x = u_x2 as f64 / 2.0;
    let u_y = (nm2 - u_x2) as f64 / 2.0;
    let p_value = match mode {
        RankSumMode::Exact => {
            if n + m > EXACT_MAX_POOLED {
                return Err(PromoError::ExactTooLarge { pooled: n + m });
            }
            exact_p(&ranks, n, rank_sum_x2)
        }
        RankSumMode::Normal => normal_p(&pooled, n, m, u_x),
    };
    Ok(RankSumResult {
        n_x: n,
        n_y: m,
        u_x,
        u_y,
        u: u_x.min(u_y),
        p_value,
        mode,
    })
}

/// Fraction of size-`n` subsets of `ranks` whose rank sum lies at least as
/// far from its null mean as the observed one.
fn exact_p(ranks: &[u64], n: usize, observed2: u64) -> f64 {
    let total_sum: u64 = ranks.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s
    let mut ways = vec![vec![0u64; total_sum as usize + 1]; n + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=n).rev() {
            for s in (r..=total_sum as usize).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    // null mean of the doubled sum is n(N+1); compare distances doubled again
    let centre2 = (n as i64) * (ranks.len() as i64 + 1);
    let dist = |s: i64| (s - centre2).abs();
    let d_obs = dist(observed2 as i64);
    let all: u64 = ways[n].iter().sum();
    let extreme: u64 = ways[n]
        .iter()
        .enumerate()
        .filter(|(s, _)| dist(*s as i64) >= d_obs)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / all as f64
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(pooled: &[f64], n: usize, m: usize, u_x: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let variance = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u_x - nf * mf / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_pairs() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0], RankSumMode::Exact).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.p_value, 2.0 / 6.0);
    }

    #[test]
    fn identical_samples() {
        let v = [1.0, 5.0, 5.0, 9.0];
        assert_eq!(
            wilcoxon_rank_sum(&v, &v, RankSumMode::Exact)
                .unwrap()
                .p_value,
            1.0
        );
        assert_eq!(
            wilcoxon_rank_sum(&v, &v, RankSumMode::Normal)
                .unwrap()
                .p_value,
            1.0
        );
    }

    #[test]
    fn midranks() {
        assert_eq!(
            doubled_midranks(&[10.0, 20.0, 10.0, 30.0]),
            vec![3, 6, 3, 8]
        );
    }

    #[test]
    fn exact_size_limit() {
        let x: Vec<f64> = (0..11).map(f64::from).collect();
        assert!(matches!(
            wilcoxon_rank_sum(&x, &x[..10], RankSumMode::Exact),
            Err(PromoError::ExactTooLarge { pooled: 21 })
        ));
        assert!(wilcoxon_rank_sum(&x, &x[..10], RankSumMode::Normal).is_ok());
        assert!(matches!(
            wilcoxon_rank_sum(&[], &[1.0], RankSumMode::Normal),
            Err(PromoError::EmptySample)
        ));
    }

    #[test]
    fn swap_and_monotone_transform() {
        let x = [0.3, 1.7, 2.2, 2.2, 5.0];
        let y = [0.1, 2.2, 3.3, 8.0];
        let a = wilcoxon_rank_sum(&x, &y, RankSumMode::Exact).unwrap();
        let b = wilcoxon_rank_sum(&y, &x, RankSumMode::Exact).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.u, b.u);
        let tx: Vec<f64> = x.iter().map(|v| v * v * v + 4.0).collect();
        let ty: Vec<f64> = y.iter().map(|v| v * v * v + 4.0).collect();
        assert_eq!(
            wilcoxon_rank_sum(&tx, &ty, RankSumMode::Exact)
                .unwrap()
                .p_value,
            a.p_value
        );
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }
}
