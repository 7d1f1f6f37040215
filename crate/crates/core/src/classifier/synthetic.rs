//! Seeded synthetic feature matrices that follow the feature semantics:
//! phishing pages sit off the official domain, link unofficial accounts,
//! embed many addresses and point at young, small accounts; official pages
//! look the other way round.

use rand::distributions::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::features::{FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub phishing_fraction: f64,
    /// Fraction of rows whose features are partly drawn from the other
    /// class while keeping their label.
    pub noise: f64,
    /// Features overwritten in a noisy row.
    pub noisy_features: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rows: 1200,
            phishing_fraction: 0.43,
            noise: 0.10,
            noisy_features: 3,
            seed: 0,
        }
    }
}

fn bern<R: Rng>(rng: &mut R, p: f64) -> f64 {
    if rng.gen_bool(p) {
        1.0
    } else {
        0.0
    }
}

fn draw<R: Rng>(rng: &mut R, phishing: bool) -> [f64; FEATURE_COUNT] {
    let mut v = [0.0; FEATURE_COUNT];
    if phishing {
        v[0] = 0.0;
        v[1] = bern(rng, 0.35);
        v[2] = Uniform::new_inclusive(3u32, 15).sample(rng) as f64;
        v[3] = bern(rng, 0.6);
        v[4] = bern(rng, 0.3);
        v[5] = 0.0;
        v[6] = 0.0;
        v[7] = Uniform::new_inclusive(0u32, 800).sample(rng) as f64;
        v[8] = (Uniform::new(0.0, 150.0).sample(rng) * 10.0f64).round() / 10.0;
        v[9] = bern(rng, 0.3);
    } else {
        v[0] = 1.0;
        v[1] = bern(rng, 0.85);
        v[2] = Uniform::new_inclusive(0u32, 2).sample(rng) as f64;
        v[3] = bern(rng, 0.95);
        v[4] = bern(rng, 0.97);
        v[5] = bern(rng, 0.9);
        v[6] = bern(rng, 0.85);
        v[7] = Uniform::new_inclusive(2_000u32, 400_000).sample(rng) as f64;
        v[8] = (Uniform::new(200.0, 1500.0).sample(rng) * 10.0f64).round() / 10.0;
        v[9] = bern(rng, 0.9);
    }
    v
}

/// Restores the cross-feature invariants: no account data without a link,
/// and a known contract is always resolvable.
fn enforce_invariants(v: &mut [f64; FEATURE_COUNT]) {
    if v[3] == 0.0 {
        v[4] = 0.0;
        v[5] = 0.0;
        v[7] = 0.0;
        v[8] = 0.0;
    }
    if v[1] != 0.0 {
        v[9] = 1.0;
    }
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_phish = (spec.rows as f64 * spec.phishing_fraction).round() as usize;
    let mut rows = Vec::with_capacity(spec.rows);
    let mut labels = Vec::with_capacity(spec.rows);
    for i in 0..spec.rows {
        let phishing = i < n_phish;
        let mut v = draw(&mut rng, phishing);
        if rng.gen_bool(spec.noise) {
            let other = draw(&mut rng, !phishing);
            for f in sample(
                &mut rng,
                FEATURE_COUNT,
                spec.noisy_features.min(FEATURE_COUNT),
            ) {
                v[f] = other[f];
            }
        }
        enforce_invariants(&mut v);
        rows.push(v.to_vec());
        labels.push(phishing);
    }
    Dataset::new(
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
    )
    .expect("generated rows are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_invariants() {
        let d = synthetic_dataset(&SyntheticSpec::default());
        assert_eq!(d.len(), 1200);
        assert_eq!(d.labels.iter().filter(|&&l| l).count(), 516);
        for r in &d.rows {
            if r[3] == 0.0 {
                assert_eq!((r[4], r[5], r[7], r[8]), (0.0, 0.0, 0.0, 0.0));
            }
            if r[1] == 1.0 {
                assert_eq!(r[9], 1.0);
            }
        }
    }

    #[test]
    fn seeded() {
        let s = SyntheticSpec {
            rows: 50,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(synthetic_dataset(&s), synthetic_dataset(&s));
    }
}
