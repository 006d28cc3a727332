//! Filter rankings (Relief-F, term variance, Pearson correlation), the
//! knee-point cutoff on the sorted score curve, and task-set assembly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::num::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterMethod {
    ReliefF,
    Tv,
    Pcc,
}

/// Per-feature importance scores under one filter. For PCC the stored score
/// is the raw signed coefficient; ranking uses its absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights<T> {
    pub method: FilterMethod,
    pub weights: Vec<T>,
}

impl<T: Real> FeatureWeights<T> {
    /// The score actually used for ranking.
    pub fn ranking_score(&self, j: usize) -> T {
        match self.method {
            FilterMethod::Pcc => self.weights[j].abs(),
            _ => self.weights[j],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliefFParams {
    /// Neighbor count per class.
    pub h: usize,
    /// Number of sampled reference instances; `None` means one full pass
    /// over all samples in seed-shuffled order.
    pub passes: Option<usize>,
    pub seed: u64,
}

impl Default for ReliefFParams {
    fn default() -> Self {
        ReliefFParams {
            h: 10,
            passes: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskSource {
    Full,
    ReliefF,
    Tv,
    Pcc,
}

impl TaskSource {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSource::Full => "Full",
            TaskSource::ReliefF => "ReliefF",
            TaskSource::Tv => "TV",
            TaskSource::Pcc => "PCC",
        }
    }
}

/// One feature-selection task: a sorted set of column indices plus the
/// transfer weight used when its winners are aggregated for other tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub task_id: usize,
    pub feature_indices: Vec<usize>,
    pub transfer_weight: f64,
    pub source: TaskSource,
}

impl TaskDefinition {
    pub fn dim(&self) -> usize {
        self.feature_indices.len()
    }
}

/// Ordered task list: the full-feature task first, then one task per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<TaskDefinition>,
}

impl TaskSet {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn full_only(n_features: usize) -> Self {
        TaskSet {
            tasks: vec![TaskDefinition {
                task_id: 0,
                feature_indices: (0..n_features).collect(),
                transfer_weight: 1.0,
                source: TaskSource::Full,
            }],
        }
    }
}

/// Relief-F weights per Kira/Kononenko's multiclass update: for each
/// reference sample, subtract the mean normalized hit difference and add the
/// prior-weighted mean miss difference per other class. `diff` uses the
/// global per-feature range over the training set; constant features get
/// diff 0 and therefore weight exactly 0.
pub fn relieff_weights<T: Real>(d: &Dataset<T>, p: &ReliefFParams) -> Result<FeatureWeights<T>> {
    let h_samples = d.n_samples();
    let n = d.n_features();
    let counts = d.class_counts();
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::validation(
            "Relief-F needs at least 2 samples per class",
        ));
    }
    if p.h == 0 {
        return Err(Error::validation("Relief-F neighbor count must be >= 1"));
    }
    let passes = p.passes.unwrap_or(h_samples);
    if passes == 0 {
        return Err(Error::validation("Relief-F pass count must be >= 1"));
    }

    // Global per-feature range for diff().
    let mut range = vec![T::zero(); n];
    for j in 0..n {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for v in d.column(j) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        range[j] = hi - lo;
    }

    let priors: Vec<T> = counts
        .iter()
        .map(|&c| real::<T>(c as f64 / h_samples as f64))
        .collect();

    let mut order: Vec<usize> = (0..h_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    order.shuffle(&mut rng);

    let diff = |a: usize, s1: usize, s2: usize| -> T {
        if range[a] == T::zero() {
            T::zero()
        } else {
            (d.value(s1, a) - d.value(s2, a)).abs() / range[a]
        }
    };

    let t = real::<T>(passes as f64);
    let mut weights = vec![T::zero(); n];
    for pass in 0..passes {
        let r = order[pass % h_samples];
        let r_class = d.labels()[r];
        // Distances to every other sample, Euclidean over all features.
        let mut by_class: Vec<Vec<(T, usize)>> = vec![Vec::new(); d.n_classes()];
        for s in 0..h_samples {
            if s == r {
                continue;
            }
            let mut sq = T::zero();
            for j in 0..n {
                let delta = d.value(r, j) - d.value(s, j);
                sq = sq + delta * delta;
            }
            by_class[d.labels()[s]].push((sq.sqrt(), s));
        }
        for members in &mut by_class {
            members.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }

        // Hit term.
        let hits = &by_class[r_class];
        let h_used = p.h.min(hits.len());
        let denom_hit = t * real::<T>(h_used as f64);
        for a in 0..n {
            let mut sum = T::zero();
            for &(_, s) in &hits[..h_used] {
                sum = sum + diff(a, r, s);
            }
            weights[a] = weights[a] - sum / denom_hit;
        }

        // Miss term, prior-weighted per other class.
        for c in 0..d.n_classes() {
            if c == r_class {
                continue;
            }
            let misses = &by_class[c];
            let m_used = p.h.min(misses.len());
            let coeff = priors[c] / (T::one() - priors[r_class]);
            let denom = t * real::<T>(m_used as f64);
            for a in 0..n {
                let mut sum = T::zero();
                for &(_, s) in &misses[..m_used] {
                    sum = sum + diff(a, r, s);
                }
                weights[a] = weights[a] + coeff * sum / denom;
            }
        }
    }
    Ok(FeatureWeights {
        method: FilterMethod::ReliefF,
        weights,
    })
}

/// Term variance: population variance per feature (divisor = sample count).
pub fn tv_weights<T: Real>(d: &Dataset<T>) -> FeatureWeights<T> {
    let h = real::<T>(d.n_samples() as f64);
    let weights = (0..d.n_features())
        .map(|j| {
            let mean = d.column(j).sum::<T>() / h;
            d.column(j).map(|v| (v - mean) * (v - mean)).sum::<T>() / h
        })
        .collect();
    FeatureWeights {
        method: FilterMethod::Tv,
        weights,
    }
}

/// Pearson correlation between each feature and the numeric class index.
/// A zero denominator (constant feature or constant labels) scores 0.
pub fn pcc_weights<T: Real>(d: &Dataset<T>) -> FeatureWeights<T> {
    let h = real::<T>(d.n_samples() as f64);
    let y: Vec<T> = d.labels().iter().map(|&l| real::<T>(l as f64)).collect();
    let y_mean = y.iter().copied().sum::<T>() / h;
    let y_var = y.iter().map(|&v| (v - y_mean) * (v - y_mean)).sum::<T>();
    let weights = (0..d.n_features())
        .map(|j| {
            let x_mean = d.column(j).sum::<T>() / h;
            let mut cov = T::zero();
            let mut x_var = T::zero();
            for (i, x) in d.column(j).enumerate() {
                cov = cov + (x - x_mean) * (y[i] - y_mean);
                x_var = x_var + (x - x_mean) * (x - x_mean);
            }
            let denom = (x_var * y_var).sqrt();
            if denom == T::zero() {
                T::zero()
            } else {
                cov / denom
            }
        })
        .collect();
    FeatureWeights {
        method: FilterMethod::Pcc,
        weights,
    }
}

/// Rank order of features under a weight vector: indices sorted by
/// descending ranking score, ties by ascending original index.
fn ranking_order<T: Real>(w: &FeatureWeights<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.weights.len()).collect();
    order.sort_by(|&a, &b| {
        w.ranking_score(b)
            .partial_cmp(&w.ranking_score(a))
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Knee-point cut: on the descending curve (j, r_j) the knee maximizes the
/// perpendicular distance to the chord from the first to the last point,
/// ties broken by smallest rank index. Features ranked at or above the knee
/// are selected and returned in original-index order. A flat curve (all
/// scores equal) selects the single top-ranked feature.
pub fn knee_select<T: Real>(w: &FeatureWeights<T>) -> Result<Vec<usize>> {
    let n = w.weights.len();
    if n == 0 {
        return Err(Error::validation("knee selection needs at least 1 feature"));
    }
    if n == 1 {
        return Ok(vec![0]);
    }
    let order = ranking_order(w);
    let scores: Vec<T> = order.iter().map(|&i| w.ranking_score(i)).collect();
    let first = scores[0];
    let last = scores[n - 1];
    let knee = if first == last {
        0
    } else {
        // Unnormalized point-to-chord distance: the chord length is common
        // to every point, so only the numerator is compared.
        let dx = real::<T>((n - 1) as f64);
        let dy = last - first;
        let mut best = 0usize;
        let mut best_dist = T::neg_infinity();
        for (j, &s) in scores.iter().enumerate() {
            let dist = (dy * real::<T>(j as f64) - dx * (s - first)).abs();
            if dist > best_dist {
                best_dist = dist;
                best = j;
            }
        }
        best
    };
    let mut selected: Vec<usize> = order[..=knee].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskGenConfig {
    pub relieff: ReliefFParams,
    /// Transfer weight of the full-feature task.
    pub g_full: f64,
    /// Transfer weight of each filter task.
    pub g_filter: f64,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        TaskGenConfig {
            relieff: ReliefFParams::default(),
            g_full: 0.1,
            g_filter: 0.45,
        }
    }
}

/// Computed weights bundled with the tasks they produced, for reporting.
#[derive(Debug, Clone)]
pub struct TaskGeneration<T> {
    pub weights: Vec<FeatureWeights<T>>,
    pub task_set: TaskSet,
}

/// Build the task set: the full task first, then the knee-selected subsets
/// of Relief-F, TV and PCC in that order.
pub fn generate_tasks<T: Real>(d: &Dataset<T>, cfg: &TaskGenConfig) -> Result<TaskGeneration<T>> {
    let relieff = relieff_weights(d, &cfg.relieff)?;
    let tv = tv_weights(d);
    let pcc = pcc_weights(d);
    let mut tasks = vec![TaskDefinition {
        task_id: 0,
        feature_indices: (0..d.n_features()).collect(),
        transfer_weight: cfg.g_full,
        source: TaskSource::Full,
    }];
    for (idx, (w, source)) in [
        (&relieff, TaskSource::ReliefF),
        (&tv, TaskSource::Tv),
        (&pcc, TaskSource::Pcc),
    ]
    .into_iter()
    .enumerate()
    {
        tasks.push(TaskDefinition {
            task_id: idx + 1,
            feature_indices: knee_select(w)?,
            transfer_weight: cfg.g_filter,
            source,
        });
    }
    Ok(TaskGeneration {
        weights: vec![relieff, tv, pcc],
        task_set: TaskSet { tasks },
    })
}
