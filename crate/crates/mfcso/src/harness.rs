//! Outer-protocol orchestration: train/test splitting by stratified outer
//! folds, multi-run aggregation, synthetic dataset generation, and the
//! rank-sum significance comparison.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, min_max_apply, min_max_fit, stratified_kfold, Dataset};
use crate::engine::{self, AlgorithmConfig};
use crate::error::{Error, Result};
use crate::knn::{balanced_error_rate, nn1_classify, FeatureMask};
use crate::mix_seed;
use crate::num::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_informative: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_informative > self.n_features {
            return Err(Error::validation(
                "n_informative must not exceed n_features",
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::validation("need at least 2 classes"));
        }
        if self.n_samples < 2 * self.n_classes {
            return Err(Error::validation("need at least 2 samples per class"));
        }
        if self.noise < 0.0 {
            return Err(Error::validation("noise must be non-negative"));
        }
        Ok(())
    }
}

/// Class-conditional Gaussian clusters on the informative features
/// (class means separated by at least twice the noise level), pure noise on
/// the rest; labels assigned round-robin. Returns the dataset and the
/// ground-truth informative column set.
pub fn synth_dataset<T: Real>(spec: &SyntheticSpec) -> Result<(Dataset<T>, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut columns: Vec<usize> = (0..spec.n_features).collect();
    columns.shuffle(&mut rng);
    let mut informative: Vec<usize> = columns[..spec.n_informative].to_vec();
    informative.sort_unstable();
    let is_informative: Vec<bool> = {
        let mut v = vec![false; spec.n_features];
        for &j in &informative {
            v[j] = true;
        }
        v
    };
    let separation = (2.0 * spec.noise).max(1.0);
    let mut rows = Vec::with_capacity(spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let class = i % spec.n_classes;
        let row: Vec<T> = (0..spec.n_features)
            .map(|j| {
                let jitter: f64 = rng.sample(StandardNormal);
                let v = if is_informative[j] {
                    class as f64 * separation + spec.noise * jitter
                } else {
                    spec.noise * jitter
                };
                real::<T>(v)
            })
            .collect();
        rows.push(row);
        labels.push(class);
    }
    let name = format!("synthetic_{}", spec.seed);
    Ok((Dataset::new(name, rows, labels)?, informative))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Path(String),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub algorithm: AlgorithmConfig,
    pub outer_folds: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub output: Option<String>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn new(source: DataSource, algorithm: AlgorithmConfig) -> Self {
        ExperimentConfig {
            source,
            algorithm,
            outer_folds: 10,
            runs: 30,
            base_seed: 0,
            output: None,
            format: OutputFormat::Json,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::validation("need at least one run"));
        }
        if self.outer_folds < 2 {
            return Err(Error::validation("need at least 2 outer folds"));
        }
        self.algorithm.validate()
    }
}

/// One (run, outer fold) cell. Wall time is kept in memory but never
/// serialized, so reports are byte-comparable across machines and thread
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub run: usize,
    pub fold: usize,
    /// base_seed + run; the per-cell engine seed is derived from it and the
    /// fold index.
    pub run_seed: u64,
    pub test_error: f64,
    pub n_selected: usize,
    pub selected: Vec<usize>,
    /// trace[task][generation] = best fitness.
    pub trace: Vec<Vec<f64>>,
    #[serde(skip)]
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_error_pct: f64,
    pub std_error_pct: f64,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub variant: String,
    pub config: ExperimentConfig,
    pub records: Vec<CellRecord>,
    pub aggregates: Aggregates,
}

pub fn compute_aggregates(records: &[CellRecord]) -> Aggregates {
    let n = records.len() as f64;
    let errors: Vec<f64> = records.iter().map(|r| r.test_error * 100.0).collect();
    let mean = errors.iter().sum::<f64>() / n;
    let std = if records.len() > 1 {
        (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mean_selected = records.iter().map(|r| r.n_selected as f64).sum::<f64>() / n;
    Aggregates {
        mean_error_pct: mean,
        std_error_pct: std,
        mean_selected,
    }
}

pub fn resolve_dataset(source: &DataSource) -> Result<Dataset<f64>> {
    match source {
        DataSource::Path(p) => load_dataset(p),
        DataSource::Synthetic(spec) => Ok(synth_dataset::<f64>(spec)?.0),
    }
}

/// Balanced test error of 1-NN over the selected columns, with the
/// (normalized) outer-train split as the reference set.
fn test_error(
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    selected: &[usize],
) -> Result<f64> {
    let mask = FeatureMask::from_indices(train.n_features(), selected);
    let mut pred = Vec::with_capacity(test.n_samples());
    for i in 0..test.n_samples() {
        pred.push(nn1_classify(train, test.row(i), &mask)?);
    }
    Ok(balanced_error_rate::<f64>(&pred, test.labels(), test.n_classes())?.error)
}

fn run_cell(
    data: &Dataset<f64>,
    cfg: &ExperimentConfig,
    run: usize,
    fold_assignment: &crate::data::FoldAssignment,
    fold: usize,
) -> Result<CellRecord> {
    let start = std::time::Instant::now();
    let train_idx = fold_assignment.complement_indices(fold);
    let test_idx = fold_assignment.fold_indices(fold);
    let train_raw = data.subset_rows(&train_idx);
    let test_raw = data.subset_rows(&test_idx);
    // Normalization is fitted on the outer-train split only.
    let model = min_max_fit(&train_raw);
    let train = min_max_apply(&model, &train_raw)?;
    let test = min_max_apply(&model, &test_raw)?;

    let run_seed = cfg.base_seed.wrapping_add(run as u64);
    let mut algo = cfg.algorithm.clone();
    algo.seed = mix_seed(run_seed, 10 + fold as u64);
    let result = engine::run(&algo, &train)?;
    let err = test_error(&train, &test, &result.selected)?;
    let trace = result.trace_f64();
    Ok(CellRecord {
        run,
        fold,
        run_seed,
        test_error: err,
        n_selected: result.selected.len(),
        selected: result.selected,
        trace,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Run the full outer protocol: `runs` independent repetitions, each with
/// freshly drawn stratified outer folds; every (run, fold) cell trains the
/// optimizer on the outer-train split and scores the decoded best mask on
/// the held-out split. Cells execute in parallel; records are ordered by
/// (run, fold).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = resolve_dataset(&cfg.source)?;
    let mut cells: Vec<(usize, std::sync::Arc<crate::data::FoldAssignment>, usize)> = Vec::new();
    for r in 0..cfg.runs {
        let run_seed = cfg.base_seed.wrapping_add(r as u64);
        let folds = std::sync::Arc::new(stratified_kfold(
            data.labels(),
            cfg.outer_folds,
            run_seed,
        )?);
        for f in 0..folds.k() {
            cells.push((r, folds.clone(), f));
        }
    }
    let records: Vec<Result<CellRecord>> = cells
        .par_iter()
        .map(|(r, folds, f)| {
            run_cell(&data, cfg, *r, folds, *f).map_err(|e| {
                Error::validation(format!("run {r} fold {f} failed: {e}"))
            })
        })
        .collect();
    let records: Vec<CellRecord> = records.into_iter().collect::<Result<_>>()?;
    let aggregates = compute_aggregates(&records);
    Ok(ExperimentReport {
        dataset: data.name().to_string(),
        variant: cfg.algorithm.variant.name().to_string(),
        config: cfg.clone(),
        records,
        aggregates,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One record per row; selected indices are semicolon-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,fold,run_seed,test_error,n_selected,selected\n");
        for r in &self.records {
            let sel = r
                .selected
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.run, r.fold, r.run_seed, r.test_error, r.n_selected, sel
            ));
        }
        out
    }

    /// Convergence traces for external plotting:
    /// (run, fold, generation, task, best_fitness).
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("run,fold,generation,task,best_fitness\n");
        for r in &self.records {
            for (task, trace) in r.trace.iter().enumerate() {
                for (generation, fitness) in trace.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        r.run, r.fold, generation, task, fitness
                    ));
                }
            }
        }
        out
    }

    pub fn test_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_error).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The first sample is significantly lower (better, errors being
    /// minimized).
    FirstBetter,
    SecondBetter,
    Similar,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::FirstBetter => f.write_str("+"),
            Verdict::SecondBetter => f.write_str("-"),
            Verdict::Similar => f.write_str("~"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumTest {
    /// Two-sided p-value.
    pub p: f64,
    /// Rank sum of the first sample (midranks).
    pub statistic: f64,
    pub verdict: Verdict,
}

/// Midranks of the pooled sample, then per-group rank sums.
fn midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0usize))
        .chain(b.iter().map(|&v| (v, 1usize)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let n = pooled.len();
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = rank;
        }
        i = j;
    }
    let r_a: f64 = ranks
        .iter()
        .zip(&pooled)
        .filter(|(_, (_, g))| *g == 0)
        .map(|(r, _)| *r)
        .sum();
    (ranks, r_a)
}

/// Exact two-sided p by dynamic programming over the doubled-midrank
/// multiset: the conditional distribution of the first group's rank sum
/// under random assignment, ties handled exactly.
fn exact_rank_sum_p(ranks: &[f64], n_a: usize, r_obs: f64) -> f64 {
    let doubled: Vec<u64> = ranks.iter().map(|&r| (2.0 * r).round() as u64).collect();
    let total: u64 = doubled.iter().sum();
    let max_sum = total as usize;
    // ways[j][s] = number of j-subsets of the processed items with doubled
    // rank sum s.
    let mut ways = vec![vec![0u64; max_sum + 1]; n_a + 1];
    ways[0][0] = 1;
    for &d in &doubled {
        for j in (1..=n_a).rev() {
            for s in (d as usize..=max_sum).rev() {
                ways[j][s] += ways[j - 1][s - d as usize];
            }
        }
    }
    let n = ranks.len();
    let mu = n_a as f64 * (n + 1) as f64 / 2.0;
    let dev = (r_obs - mu).abs();
    let mut extreme = 0u64;
    let mut count = 0u64;
    for (s, &w) in ways[n_a].iter().enumerate() {
        if w == 0 {
            continue;
        }
        count += w;
        let r = s as f64 / 2.0;
        if (r - mu).abs() >= dev - 1e-9 {
            extreme += w;
        }
    }
    extreme as f64 / count as f64
}

fn normal_cdf(z: f64) -> f64 {
    // Abramowitz & Stegun 7.1.26, |error| < 1.5e-7.
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x < 0.0 { -erf } else { erf };
    0.5 * (1.0 + erf)
}

/// Two-sided Mann-Whitney / Wilcoxon rank-sum test. Small pooled samples
/// (here, up to 40 values) use the exact conditional distribution; larger
/// ones use the normal approximation with tie correction and continuity
/// correction. The verdict is oriented for minimized quantities: lower
/// values are better.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumTest> {
    let (n_a, n_b) = (a.len(), b.len());
    if n_a < 3 || n_b < 3 {
        return Err(Error::validation("rank-sum test needs >= 3 samples per group"));
    }
    let (ranks, r_a) = midranks(a, b);
    let n = n_a + n_b;

    // Degenerate pool: every value equal.
    let all_equal = ranks.windows(2).all(|w| w[0] == w[1]);
    let p = if all_equal {
        1.0
    } else if n <= 40 {
        exact_rank_sum_p(&ranks, n_a, r_a)
    } else {
        let mu = n_a as f64 * (n + 1) as f64 / 2.0;
        // Tie correction on the variance.
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < ranks.len() {
            let mut j = i + 1;
            while j < ranks.len() && ranks[j] == ranks[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let var = (n_a * n_b) as f64 / 12.0
            * ((n + 1) as f64 - tie_term / (n as f64 * (n as f64 - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = ((r_a - mu).abs() - 0.5) / var.sqrt();
            (2.0 * (1.0 - normal_cdf(z.max(0.0)))).min(1.0)
        }
    };

    let verdict = if p >= 0.05 {
        Verdict::Similar
    } else {
        let mean_a = r_a / n_a as f64;
        let mean_b = (ranks.iter().sum::<f64>() - r_a) / n_b as f64;
        if mean_a < mean_b {
            Verdict::FirstBetter
        } else {
            Verdict::SecondBetter
        }
    };
    Ok(RankSumTest {
        p,
        statistic: r_a,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub variant: String,
    pub mean_error_pct: f64,
    pub mean_selected: f64,
    /// Verdict of this variant against the reference (first) report;
    /// `None` for the reference row itself.
    pub verdict: Option<Verdict>,
    pub p_value: Option<f64>,
}

/// Comparison table: the first report is the reference; each following
/// report is rank-sum tested against it on the per-record test errors.
pub fn aggregate(reports: &[&ExperimentReport]) -> Result<Vec<ComparisonRow>> {
    let reference = reports
        .first()
        .ok_or_else(|| Error::validation("no reports to aggregate"))?;
    for r in reports.iter().skip(1) {
        if r.dataset != reference.dataset
            || r.config.runs != reference.config.runs
            || r.config.outer_folds != reference.config.outer_folds
        {
            return Err(Error::validation(format!(
                "protocol mismatch between '{}' and '{}'",
                reference.variant, r.variant
            )));
        }
    }
    let ref_errors = reference.test_errors();
    let mut rows = Vec::with_capacity(reports.len());
    for (i, report) in reports.iter().enumerate() {
        let (verdict, p_value) = if i == 0 {
            (None, None)
        } else {
            let test = wilcoxon_rank_sum(&report.test_errors(), &ref_errors)?;
            (Some(test.verdict), Some(test.p))
        };
        rows.push(ComparisonRow {
            dataset: report.dataset.clone(),
            variant: report.variant.clone(),
            mean_error_pct: report.aggregates.mean_error_pct,
            mean_selected: report.aggregates.mean_selected,
            verdict,
            p_value,
        });
    }
    Ok(rows)
}
