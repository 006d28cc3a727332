//! Dataset ingestion, min-max normalization and stratified fold assignment.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::{real, Real};

/// A sample matrix with integer class labels.
///
/// Rows are samples, columns are features. `feature_ids` tag each column
/// with its original index so columns survive subsetting.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    name: String,
    values: Vec<T>, // row-major, n_samples x n_features
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
    feature_ids: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        rows: Vec<Vec<T>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n_samples = rows.len();
        if n_samples == 0 {
            return Err(Error::validation("dataset has no samples"));
        }
        if labels.len() != n_samples {
            return Err(Error::DimensionMismatch {
                expected: n_samples,
                found: labels.len(),
            });
        }
        let n_features = rows[0].len();
        let mut values = Vec::with_capacity(n_samples * n_features);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected {} values, found {}", n_features, row.len()),
                });
            }
            for v in &row {
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: "non-finite feature value".into(),
                    });
                }
            }
            values.extend(row);
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("labels are not densely indexed"));
        }
        if n_classes < 2 {
            return Err(Error::validation(
                "dataset has a single class; classification undefined",
            ));
        }
        Ok(Dataset {
            name: name.into(),
            values,
            n_features,
            labels,
            n_classes,
            feature_ids: (0..n_features).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_ids(&self) -> &[usize] {
        &self.feature_ids
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[i * self.n_features + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_samples()).map(move |i| self.value(i, j))
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name.clone(),
            values,
            n_features: self.n_features,
            labels,
            n_classes: self.n_classes,
            feature_ids: self.feature_ids.clone(),
        }
    }
}

/// Per-feature min/max fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationModel<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T> NormalizationModel<T> {
    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }
}

pub fn min_max_fit<T: Real>(train: &Dataset<T>) -> NormalizationModel<T> {
    let n = train.n_features();
    let mut min = vec![T::infinity(); n];
    let mut max = vec![T::neg_infinity(); n];
    for i in 0..train.n_samples() {
        let row = train.row(i);
        for j in 0..n {
            if row[j] < min[j] {
                min[j] = row[j];
            }
            if row[j] > max[j] {
                max[j] = row[j];
            }
        }
    }
    NormalizationModel { min, max }
}

/// Rescale every value to `(x - min) / (max - min)`, clamped to `[0, 1]`.
/// Constant features (max == min) map to 0.
pub fn min_max_apply<T: Real>(model: &NormalizationModel<T>, d: &Dataset<T>) -> Result<Dataset<T>> {
    if model.len() != d.n_features() {
        return Err(Error::DimensionMismatch {
            expected: d.n_features(),
            found: model.len(),
        });
    }
    let mut out = d.clone();
    let n = d.n_features();
    for i in 0..d.n_samples() {
        for j in 0..n {
            let range = model.max[j] - model.min[j];
            let v = if range == T::zero() {
                T::zero()
            } else {
                ((d.value(i, j) - model.min[j]) / range)
                    .max(T::zero())
                    .min(T::one())
            };
            out.values[i * n + j] = v;
        }
    }
    Ok(out)
}

/// Stratified fold assignment: per class, samples are shuffled by seed and
/// dealt round-robin, so per-class fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_indices(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == f)
            .collect()
    }

    pub fn complement_indices(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != f)
            .collect()
    }
}

/// The effective fold count is `min(k, smallest class size)` so every fold
/// holds at least one sample of every class.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::validation("fold count must be at least 2"));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < 2 {
        return Err(Error::validation(
            "smallest class has fewer than 2 samples; cannot stratify",
        ));
    }
    let k = k.min(smallest);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Load a CSV dataset: comma-separated, label in the last column, optional
/// header (detected by a non-numeric feature cell in the first row). Labels
/// are densely re-indexed in order of first appearance.
pub fn load_dataset<T: Real>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&name, &text)
}

pub fn parse_csv<T: Real>(name: &str, text: &str) -> Result<Dataset<T>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return Err(Error::validation("empty dataset file"));
    }

    // Header heuristic: a non-numeric cell among the first row's feature
    // columns (the label column may legitimately be a string).
    let first_cells: Vec<&str> = lines[0].1.split(',').map(str::trim).collect();
    if first_cells.len() < 2 {
        return Err(Error::Parse {
            row: lines[0].0,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let has_header = first_cells[..first_cells.len() - 1]
        .iter()
        .any(|c| c.parse::<f64>().is_err());
    let data_lines = if has_header { &lines[1..] } else { &lines[..] };
    if data_lines.is_empty() {
        return Err(Error::validation("no data rows after header"));
    }

    let n_cols = data_lines[0].1.split(',').count();
    let n_features = n_cols - 1;
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(data_lines.len());
    let mut labels: Vec<usize> = Vec::with_capacity(data_lines.len());
    let mut label_names: Vec<String> = Vec::new();
    for &(line_no, line) in data_lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols {
            return Err(Error::Parse {
                row: line_no,
                message: format!("expected {} columns, found {}", n_cols, cells.len()),
            });
        }
        let mut row = Vec::with_capacity(n_features);
        for cell in &cells[..n_features] {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line_no,
                message: format!("non-numeric feature value '{}'", cell),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line_no,
                    message: format!("non-finite feature value '{}'", cell),
                });
            }
            row.push(real::<T>(v));
        }
        let label_cell = cells[n_features];
        let label = match label_names.iter().position(|n| n == label_cell) {
            Some(idx) => idx,
            None => {
                label_names.push(label_cell.to_string());
                label_names.len() - 1
            }
        };
        rows.push(row);
        labels.push(label);
    }
    Dataset::new(name, rows, labels)
}
