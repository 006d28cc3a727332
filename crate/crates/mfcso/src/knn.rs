//! 1-nearest-neighbor classification over a feature mask, the balanced
//! error rate, and the pooled cross-validated error used by the fitness.

use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::num::{real, Real};

/// Bit vector over a feature space plus the set-bit (column) list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    bits: Vec<bool>,
    ones: Vec<usize>,
}

impl FeatureMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let ones = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        FeatureMask { bits, ones }
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; len];
        for &i in indices {
            bits[i] = true;
        }
        FeatureMask {
            bits,
            ones: indices.to_vec(),
        }
    }

    pub fn full(len: usize) -> Self {
        FeatureMask {
            bits: vec![true; len],
            ones: (0..len).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ones.is_empty()
    }

    /// Number of selected features (S).
    pub fn count(&self) -> usize {
        self.ones.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ones(&self) -> &[usize] {
        &self.ones
    }
}

/// Squared Euclidean distance over the masked columns. Comparisons are done
/// on squared distances; the ordering is the same as for the rooted metric.
#[inline]
fn masked_sq_dist<T: Real>(a: &[T], b: &[T], columns: &[usize]) -> T {
    let mut sq = T::zero();
    for &j in columns {
        let d = a[j] - b[j];
        sq = sq + d * d;
    }
    sq
}

/// Label of the nearest training row under the masked Euclidean distance;
/// distance ties break by lowest training-row index.
pub fn nn1_classify<T: Real>(
    train: &Dataset<T>,
    query: &[T],
    mask: &FeatureMask,
) -> Result<usize> {
    if mask.is_empty() {
        return Err(Error::validation("empty feature mask"));
    }
    if train.n_samples() == 0 {
        return Err(Error::validation("empty training set"));
    }
    let mut best = T::infinity();
    let mut best_label = 0usize;
    for i in 0..train.n_samples() {
        let d = masked_sq_dist(train.row(i), query, mask.ones());
        if d < best {
            best = d;
            best_label = train.labels()[i];
        }
    }
    Ok(best_label)
}

/// Balanced error report: one minus the mean per-class recall over the
/// classes present in the truth vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport<T> {
    pub error: T,
    /// Per-class recall; `None` for classes absent from the truth vector.
    pub tpr: Vec<Option<T>>,
    /// confusion[truth][pred]
    pub confusion: Vec<Vec<usize>>,
}

pub fn balanced_error_rate<T: Real>(
    pred: &[usize],
    truth: &[usize],
    n_classes: usize,
) -> Result<ErrorReport<T>> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let mut tpr = Vec::with_capacity(n_classes);
    let mut sum = T::zero();
    let mut present = 0usize;
    for c in 0..n_classes {
        let total: usize = confusion[c].iter().sum();
        if total == 0 {
            tpr.push(None);
        } else {
            let r = real::<T>(confusion[c][c] as f64 / total as f64);
            tpr.push(Some(r));
            sum = sum + r;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::validation("no samples to score"));
    }
    Ok(ErrorReport {
        error: T::one() - sum / real::<T>(present as f64),
        tpr,
        confusion,
    })
}

/// Cross-validated balanced error: each fold is classified by 1-NN against
/// the remaining samples, predictions are pooled in (fold, sample) order,
/// and the balanced error is computed once over the pool.
pub fn masked_cv_error<T: Real>(
    train: &Dataset<T>,
    mask: &FeatureMask,
    folds: &FoldAssignment,
) -> Result<T> {
    if mask.is_empty() {
        return Err(Error::validation("empty feature mask"));
    }
    let mut pred = Vec::with_capacity(train.n_samples());
    let mut truth = Vec::with_capacity(train.n_samples());
    let fold_of = folds.fold_of();
    for f in 0..folds.k() {
        for i in 0..train.n_samples() {
            if fold_of[i] != f {
                continue;
            }
            // 1-NN against every row outside fold f, ties by lowest index.
            let mut best = T::infinity();
            let mut best_label = 0usize;
            for j in 0..train.n_samples() {
                if fold_of[j] == f {
                    continue;
                }
                let d = masked_sq_dist(train.row(j), train.row(i), mask.ones());
                if d < best {
                    best = d;
                    best_label = train.labels()[j];
                }
            }
            pred.push(best_label);
            truth.push(train.labels()[i]);
        }
    }
    Ok(balanced_error_rate::<T>(&pred, &truth, train.n_classes())?.error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_kfold, Dataset};

    fn ds(labels: &[usize], rows: Vec<Vec<f64>>) -> Dataset<f64> {
        Dataset::new("t", rows, labels.to_vec()).unwrap()
    }

    #[test]
    fn nn1_single_row_and_exact_match() {
        let d = ds(&[0, 1], vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let mask = FeatureMask::full(2);
        assert_eq!(nn1_classify(&d, &[0.1, 0.1], &mask).unwrap(), 0);
        assert_eq!(nn1_classify(&d, &[1.0, 1.0], &mask).unwrap(), 1);

        let single = d.subset_rows(&[1]);
        assert_eq!(nn1_classify(&single, &[0.0, 0.0], &mask).unwrap(), 1);
    }

    #[test]
    fn nn1_tie_breaks_by_lowest_row_index() {
        let d = ds(&[1, 0], vec![vec![0.5], vec![0.5]]);
        let mask = FeatureMask::full(1);
        assert_eq!(nn1_classify(&d, &[0.5], &mask).unwrap(), 1);
    }

    #[test]
    fn nn1_rejects_empty_mask() {
        let d = ds(&[0, 1], vec![vec![0.0], vec![1.0]]);
        let mask = FeatureMask::from_bits(vec![false]);
        assert!(nn1_classify(&d, &[0.0], &mask).is_err());
    }

    #[test]
    fn balanced_error_arithmetic_cases() {
        let all_right = balanced_error_rate::<f64>(&[0, 1, 0], &[0, 1, 0], 2).unwrap();
        assert_eq!(all_right.error, 0.0);
        let all_wrong = balanced_error_rate::<f64>(&[1, 0, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(all_wrong.error, 1.0);
        // class 0 fully correct, class 1 fully wrong -> 1 - (1+0)/2
        let half = balanced_error_rate::<f64>(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(half.error, 0.5);
    }

    #[test]
    fn balanced_error_excludes_absent_classes() {
        let r = balanced_error_rate::<f64>(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(r.error, 0.0);
        assert!(r.tpr[1].is_none());
        assert!(r.tpr[2].is_none());
    }

    #[test]
    fn balanced_error_length_mismatch() {
        assert!(balanced_error_rate::<f64>(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn cv_error_zero_on_label_equal_feature() {
        let d = ds(
            &[0, 1, 0, 1],
            vec![
                vec![0.0, 0.7],
                vec![1.0, 0.2],
                vec![0.0, 0.9],
                vec![1.0, 0.1],
            ],
        );
        let folds = stratified_kfold(d.labels(), 2, 1).unwrap();
        let mask = FeatureMask::from_indices(2, &[0]);
        assert_eq!(masked_cv_error(&d, &mask, &folds).unwrap(), 0.0);
    }

    #[test]
    fn cv_error_symmetric_pairs_by_hand() {
        // Two samples per class on a line: 0.0, 0.4 (class 0), 0.6, 1.0
        // (class 1). Stratified 2-fold splits each class, leaving two
        // assignments. Folds {0.0, 1.0} / {0.4, 0.6}: every held-out
        // sample's nearest training neighbor is its own class -> E = 0.
        // Folds {0.0, 0.6} / {0.4, 1.0}: held-out 0.6 snaps to 0.4 and
        // held-out 0.4 snaps to 0.6 (both wrong) -> E = 0.5.
        let d = ds(
            &[0, 0, 1, 1],
            vec![vec![0.0], vec![0.4], vec![0.6], vec![1.0]],
        );
        let mask = FeatureMask::full(1);
        let find = |same_fold: bool| {
            (0..100)
                .map(|s| stratified_kfold(d.labels(), 2, s).unwrap())
                .find(|f| (f.fold_of()[0] == f.fold_of()[3]) == same_fold)
                .unwrap()
        };
        assert_eq!(masked_cv_error(&d, &mask, &find(true)).unwrap(), 0.0);
        assert_eq!(masked_cv_error(&d, &mask, &find(false)).unwrap(), 0.5);
    }

    #[test]
    fn cv_error_near_chance_on_shuffled_labels() {
        // Labels independent of features -> E around 1 - 1/c.
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let reps = 100;
        for _ in 0..reps {
            let rows: Vec<Vec<f64>> = (0..24)
                .map(|i| vec![(i as f64 * 0.7919) % 1.0, (i as f64 * 0.3571) % 1.0])
                .collect();
            let mut labels: Vec<usize> = (0..24).map(|i| i % 2).collect();
            labels.shuffle(&mut rng);
            let d = ds(&labels, rows);
            let folds = stratified_kfold(d.labels(), 4, 7).unwrap();
            total += masked_cv_error(&d, &FeatureMask::full(2), &folds).unwrap();
        }
        let mean = total / reps as f64;
        assert!((mean - 0.5).abs() < 0.1, "mean chance error {mean}");
    }
}
