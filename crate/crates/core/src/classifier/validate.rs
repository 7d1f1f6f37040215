//! Stratified k-fold cross-validation and a stratified 70:30 holdout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, ClassifierError, Dataset, ForestParams, Metrics};

/// Row indices of each fold. Each class is shuffled with `seed`, the
/// classes are laid end to end and rows are dealt to folds round-robin,
/// so fold sizes differ by at most one and every fold gets its share of
/// each class. Returns a warning when a class has fewer rows than folds.
pub fn stratified_folds(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, Option<String>), ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::InvalidParams(
            "k must be at least 2".into(),
        ));
    }
    if k > labels.len() {
        return Err(ClassifierError::TooManyFolds {
            folds: k,
            rows: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let warning = [("phishing", pos.len()), ("benign", neg.len())]
        .iter()
        .filter(|(_, n)| *n < k)
        .map(|(name, n)| {
            format!("class {name} has {n} rows for {k} folds; some folds will lack it")
        })
        .reduce(|a, b| format!("{a}; {b}"));
    let mut folds = vec![Vec::new(); k];
    for (j, i) in pos.into_iter().chain(neg).enumerate() {
        folds[j % k].push(i);
    }
    Ok((folds, warning))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub split_seed: u64,
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Trains on k−1 folds and tests on the remaining one, k times.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    split_seed: u64,
    params: &ForestParams,
) -> Result<CvReport, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let (folds, warning) = stratified_folds(&data.labels, k, split_seed)?;
    let mut warnings: Vec<String> = warning.into_iter().collect();
    if let Some(w) = warnings.first() {
        log::warn!("{w}");
    }
    let mut per_fold = Vec::with_capacity(k);
    for (f, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let model = match train(&data.subset(&train_idx), params) {
            Ok(m) => m,
            Err(ClassifierError::SingleClass) => {
                warnings.push(format!(
                    "fold {f}: training rows hold a single class; fold skipped"
                ));
                continue;
            }
            Err(e) => return Err(e),
        };
        per_fold.push(model.evaluate(&data.subset(test_idx))?);
    }
    let mean = Metrics::mean(&per_fold).ok_or(ClassifierError::SingleClass)?;
    Ok(CvReport {
        k,
        split_seed,
        folds: per_fold,
        mean,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub train_rows: usize,
    pub test_rows: usize,
    pub metrics: Metrics,
}

/// Stratified split with `train_fraction` of each class used for
/// training, evaluated on the rest.
pub fn holdout(
    data: &Dataset,
    train_fraction: f64,
    split_seed: u64,
    params: &ForestParams,
) -> Result<HoldoutReport, ClassifierError> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(ClassifierError::InvalidParams(
            "train fraction must be in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * train_fraction).round() as usize;
        test_idx.extend_from_slice(&idx[cut..]);
        train_idx.extend_from_slice(&idx[..cut]);
    }
    let model = train(&data.subset(&train_idx), params)?;
    let metrics = model.evaluate(&data.subset(&test_idx))?;
    Ok(HoldoutReport {
        train_rows: train_idx.len(),
        test_rows: test_idx.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_rows_five_folds() {
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let (folds, w) = stratified_folds(&labels, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        assert!(w.is_none());
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sizes_differ_by_at_most_one() {
        for n in 10..40 {
            let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            let (folds, _) = stratified_folds(&labels, 7.min(n), 4).unwrap();
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn imbalanced_classes_warn() {
        let labels: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let (folds, w) = stratified_folds(&labels, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        assert!(w.unwrap().contains("benign"));
        let labels: Vec<bool> = (0..100).map(|i| i < 70).collect();
        let (folds, w) = stratified_folds(&labels, 10, 3).unwrap();
        assert!(w.is_none());
        assert!(folds
            .iter()
            .all(|f| f.iter().filter(|&&i| labels[i]).count() == 7));
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(
            stratified_folds(&[true, false], 3, 0),
            Err(ClassifierError::TooManyFolds { .. })
        ));
        assert!(stratified_folds(&[true, false], 1, 0).is_err());
    }

    #[test]
    fn separable_cv_is_perfect() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 1).collect();
        let d = Dataset::new(vec!["x".into()], rows, labels).unwrap();
        let p = ForestParams {
            n_trees: 5,
            mtry: 1,
            ..Default::default()
        };
        let r = cross_validate(&d, 5, 1, &p).unwrap();
        assert_eq!(r.mean.accuracy, 1.0);
        let h = holdout(&d, 0.7, 1, &p).unwrap();
        assert_eq!((h.train_rows, h.test_rows), (28, 12));
        assert_eq!(h.metrics.accuracy, 1.0);
    }
}
