//! The multi-swarm competitive optimizer: pairwise competition, plain and
//! transfer updates, polynomial mutation of winners, and the main loop with
//! its ablation variants.
//!
//! RNG discipline: every stochastic draw happens on one `ChaCha8Rng` stream
//! in a fixed order — initialization (task, particle, gene), then per
//! generation: competition shuffles in task order, per-loser draws in
//! (task, pair) order (branch draw, source-winner picks in ascending other
//! task order, then r1/r2/r3), then mutation draws in (task, winner, gene)
//! order. Fitness evaluations never touch the stream, so they can run in
//! parallel without changing results.

use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_kfold, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::filters::{generate_tasks, ReliefFParams, TaskDefinition, TaskGenConfig, TaskSet};
use crate::knn::{masked_cv_error, FeatureMask};
use crate::mix_seed;
use crate::num::{real, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    MfCso,
    EmtNoKt,
    MfCsoR,
    MfPso,
    CsoFsSingleTask,
    FullNoSelection,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::MfCso => "MF_CSO",
            Variant::EmtNoKt => "EMT_noKT",
            Variant::MfCsoR => "MF_CSO_R",
            Variant::MfPso => "MF_PSO",
            Variant::CsoFsSingleTask => "CSO_FS_single_task",
            Variant::FullNoSelection => "FULL_no_selection",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MF_CSO" => Ok(Variant::MfCso),
            "EMT_noKT" => Ok(Variant::EmtNoKt),
            "MF_CSO_R" => Ok(Variant::MfCsoR),
            "MF_PSO" => Ok(Variant::MfPso),
            "CSO_FS_single_task" => Ok(Variant::CsoFsSingleTask),
            "FULL_no_selection" => Ok(Variant::FullNoSelection),
            other => Err(Error::validation(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    /// Total population, split evenly over the tasks.
    pub population: usize,
    pub iterations: usize,
    /// Probability of the plain (no-transfer) branch per loser update.
    pub p_trans: f64,
    /// Decoding threshold: a gene is selected iff strictly above delta.
    pub delta: f64,
    /// Error-vs-size weight of the fitness.
    pub alpha: f64,
    /// Coefficient of the swarm-mean term in the plain update.
    pub phi: f64,
    /// Polynomial mutation distribution index.
    pub eta_m: f64,
    /// Per-gene mutation rate; `None` means 1 / task dimensionality.
    pub mutation_rate: Option<f64>,
    pub relieff_h: usize,
    pub relieff_passes: Option<usize>,
    pub inner_folds: usize,
    /// Restrict the task set to the full-feature task.
    pub single_task: bool,
    pub seed: u64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            variant: Variant::MfCso,
            population: 300,
            iterations: 70,
            p_trans: 0.5,
            delta: 0.5,
            alpha: 0.999999,
            phi: 0.0,
            eta_m: 20.0,
            mutation_rate: None,
            relieff_h: 10,
            relieff_passes: None,
            inner_folds: 10,
            single_task: false,
            seed: 0,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_trans) {
            return Err(Error::validation("p_trans must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::validation("delta must lie in [0,1]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("alpha must lie in (0,1)"));
        }
        if let Some(rate) = self.mutation_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::validation("mutation rate must lie in [0,1]"));
            }
        }
        if self.inner_folds < 2 {
            return Err(Error::validation("inner fold count must be >= 2"));
        }
        Ok(())
    }
}

/// A position/velocity pair over one task's feature subspace with cached
/// fitness. `pbest_*` is maintained only by the PSO ablation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle<T> {
    pub position: Vec<T>,
    pub velocity: Vec<T>,
    pub fitness: T,
    pub error: T,
    pub n_selected: usize,
    pub pbest_position: Vec<T>,
    pub pbest_fitness: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm<T> {
    pub task: TaskDefinition,
    pub particles: Vec<Particle<T>>,
    pub mean_position: Vec<T>,
}

impl<T: Real> Swarm<T> {
    fn refresh_mean(&mut self) {
        let dim = self.task.dim();
        let n = real::<T>(self.particles.len() as f64);
        let mut mean = vec![T::zero(); dim];
        for p in &self.particles {
            for j in 0..dim {
                mean[j] = mean[j] + p.position[j];
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        self.mean_position = mean;
    }

    /// Index of the lowest-fitness particle, ties by lowest index.
    pub fn best_index(&self) -> usize {
        let mut best = 0usize;
        for i in 1..self.particles.len() {
            if self.particles[i].fitness < self.particles[best].fitness {
                best = i;
            }
        }
        best
    }
}

pub struct MultiSwarm<T> {
    pub swarms: Vec<Swarm<T>>,
    pub generation: usize,
    rng: ChaCha8Rng,
}

/// Everything a fitness evaluation needs; fixed for the whole run.
pub struct FitnessContext<'a, T> {
    pub train: &'a Dataset<T>,
    pub folds: &'a FoldAssignment,
    pub delta: f64,
    pub alpha: f64,
    /// D in the size term: the full original feature count for every task,
    /// so fitness is comparable across tasks.
    pub n_full: usize,
}

/// Threshold decoding: bit j is set iff `position[j] > delta` (strict).
pub fn decode_mask<T: Real>(position: &[T], delta: f64) -> FeatureMask {
    let delta = real::<T>(delta);
    FeatureMask::from_bits(position.iter().map(|&x| x > delta).collect())
}

impl<'a, T: Real> FitnessContext<'a, T> {
    /// Fitness of a position: `alpha * E + (1 - alpha) * S / D`. An empty
    /// mask scores the worst possible value (E = 1, S = 0, fitness = 1).
    pub fn evaluate(&self, position: &[T], task: &TaskDefinition) -> Result<(T, T, usize)> {
        let mask = decode_mask(position, self.delta);
        if mask.is_empty() {
            return Ok((T::one(), T::one(), 0));
        }
        let columns: Vec<usize> = mask
            .ones()
            .iter()
            .map(|&j| task.feature_indices[j])
            .collect();
        let col_mask = FeatureMask::from_indices(self.train.n_features(), &columns);
        let error = masked_cv_error(self.train, &col_mask, self.folds)?;
        let s = mask.count();
        let alpha = real::<T>(self.alpha);
        let fitness =
            alpha * error + (T::one() - alpha) * real::<T>(s as f64 / self.n_full as f64);
        Ok((fitness, error, s))
    }
}

/// Shuffle the swarm and pair consecutively; in each pair the lower-fitness
/// particle wins, ties going to the first of the pair. Returns
/// (winner, loser) index pairs.
pub fn pairwise_compete<T: Real>(
    particles: &[Particle<T>],
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    debug_assert!(particles.len() % 2 == 0);
    let mut order: Vec<usize> = (0..particles.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    order
        .chunks(2)
        .map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            if particles[b].fitness < particles[a].fitness {
                (b, a)
            } else {
                (a, b)
            }
        })
        .collect()
}

/// Plain loser update:
/// `V <- r1*V + r2*(Xw - Xl) + phi*r3*(mean - Xl)`, `X <- clamp(X + V)`.
pub fn cso_plain_update<T: Real>(
    position: &mut [T],
    velocity: &mut [T],
    winner: &[T],
    mean: &[T],
    phi: f64,
    (r1, r2, r3): (T, T, T),
) {
    let phi = real::<T>(phi);
    for j in 0..position.len() {
        velocity[j] = r1 * velocity[j]
            + r2 * (winner[j] - position[j])
            + phi * r3 * (mean[j] - position[j]);
        position[j] = (position[j] + velocity[j]).max(T::zero()).min(T::one());
    }
}

/// Transfer loser update:
/// `V <- r1*V + r2*(Xw - Xl) + r3*(Xwa - Xl)`, `X <- clamp(X + V)`.
pub fn cso_transfer_update<T: Real>(
    position: &mut [T],
    velocity: &mut [T],
    winner: &[T],
    aggregated: &[T],
    (r1, r2, r3): (T, T, T),
) {
    for j in 0..position.len() {
        velocity[j] = r1 * velocity[j]
            + r2 * (winner[j] - position[j])
            + r3 * (aggregated[j] - position[j]);
        position[j] = (position[j] + velocity[j]).max(T::zero()).min(T::one());
    }
}

/// Aggregate one winner per other task into the target task's coordinates.
///
/// For each target feature, the weights of the source tasks that contain it
/// are renormalized to sum to 1; a feature covered by no source keeps the
/// loser's own value, which makes the transfer term vanish there. When every
/// source covers a feature and the raw weights already sum to 1, this is the
/// unweighted formula unchanged.
pub fn aggregate_winner<T: Real>(
    target: &TaskDefinition,
    sources: &[(&TaskDefinition, &[T])],
    loser_position: &[T],
) -> Vec<T> {
    let mut out = Vec::with_capacity(target.dim());
    for (j, &orig) in target.feature_indices.iter().enumerate() {
        let mut num = T::zero();
        let mut den = T::zero();
        for (task, pos) in sources {
            if let Ok(dim) = task.feature_indices.binary_search(&orig) {
                let g = real::<T>(task.transfer_weight);
                num = num + g * pos[dim];
                den = den + g;
            }
        }
        if den > T::zero() {
            out.push(num / den);
        } else {
            out.push(loser_position[j]);
        }
    }
    out
}

/// Bounded polynomial mutation on [0,1], per gene with probability `rate`.
/// Returns whether any gene changed.
pub fn polynomial_mutation<T: Real>(
    position: &mut [T],
    rng: &mut ChaCha8Rng,
    eta_m: f64,
    rate: f64,
) -> bool {
    let eta = real::<T>(eta_m);
    let exponent = T::one() / (eta + T::one());
    let mut changed = false;
    for x in position.iter_mut() {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        let u = real::<T>(rng.gen::<f64>());
        let two = real::<T>(2.0);
        let delta = if u <= real::<T>(0.5) {
            let d1 = *x; // (x - lo) / (hi - lo) with bounds [0,1]
            (two * u + (T::one() - two * u) * (T::one() - d1).powf(eta + T::one())).powf(exponent)
                - T::one()
        } else {
            let d2 = T::one() - *x;
            T::one()
                - (two * (T::one() - u)
                    + two * (u - real::<T>(0.5)) * (T::one() - d2).powf(eta + T::one()))
                .powf(exponent)
        };
        let nx = (*x + delta).max(T::zero()).min(T::one());
        if nx != *x {
            changed = true;
        }
        *x = nx;
    }
    changed
}

/// Best particle across all tasks: minimum fitness, ties broken by lowest
/// task id then lowest particle index.
pub fn select_global_best<T: Real>(ms: &MultiSwarm<T>) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut best_fit = ms.swarms[0].particles[0].fitness;
    for (si, swarm) in ms.swarms.iter().enumerate() {
        for (pi, p) in swarm.particles.iter().enumerate() {
            if p.fitness < best_fit {
                best_fit = p.fitness;
                best = (si, pi);
            }
        }
    }
    best
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub task_set: TaskSet,
    pub best_per_task: Vec<Particle<T>>,
    pub best_task: usize,
    /// Selected feature ids of the training dataset, ascending.
    pub selected: Vec<usize>,
    /// trace[task][generation] = best fitness (generation 0 = initial).
    pub trace: Vec<Vec<T>>,
    pub evaluations: usize,
    pub wall: Duration,
}

impl<T: Real> RunResult<T> {
    pub fn best(&self) -> &Particle<T> {
        &self.best_per_task[self.best_task]
    }

    pub fn trace_f64(&self) -> Vec<Vec<f64>> {
        self.trace
            .iter()
            .map(|t| t.iter().map(|&v| to_f64(v)).collect())
            .collect()
    }
}

struct PendingUpdate<T> {
    swarm: usize,
    particle: usize,
    position: Vec<T>,
    velocity: Vec<T>,
}

impl<T: Real> MultiSwarm<T> {
    fn init(
        task_set: TaskSet,
        per_task: usize,
        seed: u64,
        ctx: &FitnessContext<'_, T>,
    ) -> Result<(Self, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut swarms = Vec::with_capacity(task_set.len());
        for task in task_set.tasks {
            let dim = task.dim();
            let mut particles = Vec::with_capacity(per_task);
            for _ in 0..per_task {
                let position: Vec<T> = (0..dim).map(|_| real::<T>(rng.gen::<f64>())).collect();
                particles.push(Particle {
                    pbest_position: position.clone(),
                    position,
                    velocity: vec![T::zero(); dim],
                    fitness: T::one(),
                    error: T::one(),
                    n_selected: 0,
                    pbest_fitness: T::one(),
                });
            }
            swarms.push(Swarm {
                task,
                particles,
                mean_position: vec![T::zero(); dim],
            });
        }
        let mut ms = MultiSwarm {
            swarms,
            generation: 0,
            rng,
        };
        let all: Vec<(usize, usize)> = (0..ms.swarms.len())
            .flat_map(|s| (0..per_task).map(move |p| (s, p)))
            .collect();
        let count = all.len();
        ms.evaluate_batch(ctx, &all)?;
        for swarm in &mut ms.swarms {
            for p in &mut swarm.particles {
                p.pbest_fitness = p.fitness;
            }
        }
        Ok((ms, count))
    }

    /// Re-evaluate the listed particles. Evaluations are pure, so they run
    /// in parallel and commit in list order.
    fn evaluate_batch(
        &mut self,
        ctx: &FitnessContext<'_, T>,
        items: &[(usize, usize)],
    ) -> Result<()> {
        let results: Vec<Result<(T, T, usize)>> = items
            .par_iter()
            .map(|&(s, p)| ctx.evaluate(&self.swarms[s].particles[p].position, &self.swarms[s].task))
            .collect();
        for (&(s, p), res) in items.iter().zip(results) {
            let (fitness, error, n_selected) = res?;
            let particle = &mut self.swarms[s].particles[p];
            particle.fitness = fitness;
            particle.error = error;
            particle.n_selected = n_selected;
        }
        Ok(())
    }

    fn best_fitness_per_task(&self) -> Vec<T> {
        self.swarms
            .iter()
            .map(|s| s.particles[s.best_index()].fitness)
            .collect()
    }

    fn step_cso(&mut self, ctx: &FitnessContext<'_, T>, cfg: &AlgorithmConfig) -> Result<usize> {
        let n_swarms = self.swarms.len();

        // Competition, task order; swarm means are frozen before any update.
        let mut pairs: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n_swarms);
        for i in 0..n_swarms {
            self.swarms[i].refresh_mean();
            let p = pairwise_compete(&self.swarms[i].particles, &mut self.rng);
            pairs.push(p);
        }

        // Loser updates, (task, pair) order. New states are buffered so the
        // winners read during transfer are the pre-update positions.
        let mut updates: Vec<PendingUpdate<T>> = Vec::new();
        for i in 0..n_swarms {
            for &(w, l) in &pairs[i] {
                let u = self.rng.gen::<f64>();
                // A draw below p_trans means no transfer.
                let transfer = match cfg.variant {
                    Variant::MfCso | Variant::MfCsoR => u >= cfg.p_trans,
                    _ => false,
                };
                let loser = &self.swarms[i].particles[l];
                let winner_pos = &self.swarms[i].particles[w].position;
                let mut position = loser.position.clone();
                let mut velocity = loser.velocity.clone();
                if transfer {
                    let aggregated = match cfg.variant {
                        Variant::MfCsoR => {
                            // One winner from one uniformly chosen other task.
                            let others: Vec<usize> =
                                (0..n_swarms).filter(|&k| k != i).collect();
                            if others.is_empty() {
                                loser.position.clone()
                            } else {
                                let k = others[self.rng.gen_range(0..others.len())];
                                let (wk, _) = pairs[k][self.rng.gen_range(0..pairs[k].len())];
                                single_source_map(
                                    &self.swarms[i].task,
                                    &self.swarms[k].task,
                                    &self.swarms[k].particles[wk].position,
                                    &loser.position,
                                )
                            }
                        }
                        _ => {
                            // One winner per other task, ascending task order.
                            let mut sources: Vec<(&TaskDefinition, &[T])> = Vec::new();
                            for k in 0..n_swarms {
                                if k == i {
                                    continue;
                                }
                                let (wk, _) = pairs[k][self.rng.gen_range(0..pairs[k].len())];
                                sources.push((
                                    &self.swarms[k].task,
                                    &self.swarms[k].particles[wk].position,
                                ));
                            }
                            aggregate_winner(&self.swarms[i].task, &sources, &loser.position)
                        }
                    };
                    let rs = (
                        real::<T>(self.rng.gen::<f64>()),
                        real::<T>(self.rng.gen::<f64>()),
                        real::<T>(self.rng.gen::<f64>()),
                    );
                    cso_transfer_update(&mut position, &mut velocity, winner_pos, &aggregated, rs);
                } else {
                    let rs = (
                        real::<T>(self.rng.gen::<f64>()),
                        real::<T>(self.rng.gen::<f64>()),
                        real::<T>(self.rng.gen::<f64>()),
                    );
                    cso_plain_update(
                        &mut position,
                        &mut velocity,
                        winner_pos,
                        &self.swarms[i].mean_position,
                        cfg.phi,
                        rs,
                    );
                }
                updates.push(PendingUpdate {
                    swarm: i,
                    particle: l,
                    position,
                    velocity,
                });
            }
        }
        let mut changed: Vec<(usize, usize)> = Vec::new();
        for up in updates {
            let p = &mut self.swarms[up.swarm].particles[up.particle];
            p.position = up.position;
            p.velocity = up.velocity;
            changed.push((up.swarm, up.particle));
        }

        // Winners evolve by polynomial mutation only, (task, winner) order.
        for i in 0..n_swarms {
            let rate = cfg
                .mutation_rate
                .unwrap_or(1.0 / self.swarms[i].task.dim() as f64);
            for pair_idx in 0..pairs[i].len() {
                let w = pairs[i][pair_idx].0;
                let mut position = self.swarms[i].particles[w].position.clone();
                if polynomial_mutation(&mut position, &mut self.rng, cfg.eta_m, rate) {
                    self.swarms[i].particles[w].position = position;
                    changed.push((i, w));
                }
            }
        }

        let count = changed.len();
        self.evaluate_batch(ctx, &changed)?;

        // Recombine: winners first, then losers, in pair order.
        for i in 0..n_swarms {
            let order: Vec<usize> = pairs[i]
                .iter()
                .map(|&(w, _)| w)
                .chain(pairs[i].iter().map(|&(_, l)| l))
                .collect();
            let mut taken: Vec<Option<Particle<T>>> =
                self.swarms[i].particles.drain(..).map(Some).collect();
            self.swarms[i].particles = order
                .into_iter()
                .map(|idx| taken[idx].take().expect("recombination permutation"))
                .collect();
        }

        self.generation += 1;
        Ok(count)
    }

    /// Inertia-weight PSO ablation: every particle moves toward its personal
    /// best, the task best, and (with probability 1 - p_trans) the best of
    /// another task mapped by feature identity.
    fn step_pso(&mut self, ctx: &FitnessContext<'_, T>, cfg: &AlgorithmConfig) -> Result<usize> {
        const C: f64 = 1.49445;
        let n_swarms = self.swarms.len();
        let w = real::<T>(0.9 - 0.5 * self.generation as f64 / cfg.iterations.max(1) as f64);
        let c = real::<T>(C);

        let gbest: Vec<Vec<T>> = self
            .swarms
            .iter()
            .map(|s| s.particles[s.best_index()].position.clone())
            .collect();

        let mut updates: Vec<PendingUpdate<T>> = Vec::new();
        for i in 0..n_swarms {
            for p_idx in 0..self.swarms[i].particles.len() {
                let u = self.rng.gen::<f64>();
                let transfer = n_swarms > 1 && u >= cfg.p_trans;
                let foreign = if transfer {
                    let others: Vec<usize> = (0..n_swarms).filter(|&k| k != i).collect();
                    let k = others[self.rng.gen_range(0..others.len())];
                    Some(single_source_map(
                        &self.swarms[i].task,
                        &self.swarms[k].task,
                        &gbest[k],
                        &self.swarms[i].particles[p_idx].position,
                    ))
                } else {
                    None
                };
                let r1 = real::<T>(self.rng.gen::<f64>());
                let r2 = real::<T>(self.rng.gen::<f64>());
                let r3 = real::<T>(self.rng.gen::<f64>());
                let particle = &self.swarms[i].particles[p_idx];
                let mut position = particle.position.clone();
                let mut velocity = particle.velocity.clone();
                for j in 0..position.len() {
                    let mut v = w * velocity[j]
                        + c * r1 * (particle.pbest_position[j] - position[j])
                        + c * r2 * (gbest[i][j] - position[j]);
                    if let Some(fg) = &foreign {
                        v = v + c * r3 * (fg[j] - position[j]);
                    }
                    velocity[j] = v;
                    position[j] = (position[j] + v).max(T::zero()).min(T::one());
                }
                updates.push(PendingUpdate {
                    swarm: i,
                    particle: p_idx,
                    position,
                    velocity,
                });
            }
        }
        let mut changed = Vec::with_capacity(updates.len());
        for up in updates {
            let p = &mut self.swarms[up.swarm].particles[up.particle];
            p.position = up.position;
            p.velocity = up.velocity;
            changed.push((up.swarm, up.particle));
        }
        let count = changed.len();
        self.evaluate_batch(ctx, &changed)?;
        for swarm in &mut self.swarms {
            for p in &mut swarm.particles {
                if p.fitness < p.pbest_fitness {
                    p.pbest_fitness = p.fitness;
                    p.pbest_position = p.position.clone();
                }
            }
        }
        self.generation += 1;
        Ok(count)
    }

    pub fn step(&mut self, ctx: &FitnessContext<'_, T>, cfg: &AlgorithmConfig) -> Result<usize> {
        match cfg.variant {
            Variant::MfPso => self.step_pso(ctx, cfg),
            _ => self.step_cso(ctx, cfg),
        }
    }
}

/// Map a single source position onto the target task's coordinates by
/// feature identity; uncovered coordinates keep the fallback value.
fn single_source_map<T: Real>(
    target: &TaskDefinition,
    source: &TaskDefinition,
    source_position: &[T],
    fallback: &[T],
) -> Vec<T> {
    target
        .feature_indices
        .iter()
        .enumerate()
        .map(|(j, orig)| match source.feature_indices.binary_search(orig) {
            Ok(dim) => source_position[dim],
            Err(_) => fallback[j],
        })
        .collect()
}

fn build_task_set<T: Real>(cfg: &AlgorithmConfig, train: &Dataset<T>) -> Result<TaskSet> {
    if cfg.single_task
        || matches!(
            cfg.variant,
            Variant::CsoFsSingleTask | Variant::FullNoSelection
        )
    {
        return Ok(TaskSet::full_only(train.n_features()));
    }
    let gen_cfg = TaskGenConfig {
        relieff: ReliefFParams {
            h: cfg.relieff_h,
            passes: cfg.relieff_passes,
            seed: mix_seed(cfg.seed, 2),
        },
        ..TaskGenConfig::default()
    };
    Ok(generate_tasks(train, &gen_cfg)?.task_set)
}

/// Run the full optimizer on a normalized training set.
pub fn run<T: Real>(cfg: &AlgorithmConfig, train: &Dataset<T>) -> Result<RunResult<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let task_set = build_task_set(cfg, train)?;
    let folds = stratified_kfold(train.labels(), cfg.inner_folds, mix_seed(cfg.seed, 1))?;
    let ctx = FitnessContext {
        train,
        folds: &folds,
        delta: cfg.delta,
        alpha: cfg.alpha,
        n_full: train.n_features(),
    };

    if cfg.variant == Variant::FullNoSelection {
        return run_full_baseline(train, &ctx, task_set, start);
    }

    let n_tasks = task_set.len();
    if cfg.population == 0 || cfg.population % n_tasks != 0 {
        return Err(Error::validation(format!(
            "population {} is not divisible by the task count {}",
            cfg.population, n_tasks
        )));
    }
    let per_task = cfg.population / n_tasks;
    if per_task % 2 != 0 {
        return Err(Error::validation(format!(
            "per-task population {per_task} must be even"
        )));
    }

    let (mut ms, mut evaluations) =
        MultiSwarm::init(task_set, per_task, mix_seed(cfg.seed, 3), &ctx)?;
    let mut trace: Vec<Vec<T>> = ms
        .best_fitness_per_task()
        .into_iter()
        .map(|f| vec![f])
        .collect();
    for _ in 0..cfg.iterations {
        evaluations += ms.step(&ctx, cfg)?;
        for (t, f) in ms.best_fitness_per_task().into_iter().enumerate() {
            trace[t].push(f);
        }
    }

    let (best_task, best_particle) = select_global_best(&ms);
    let best_per_task: Vec<Particle<T>> = ms
        .swarms
        .iter()
        .map(|s| s.particles[s.best_index()].clone())
        .collect();
    let winning_task = &ms.swarms[best_task].task;
    let mask = decode_mask(&ms.swarms[best_task].particles[best_particle].position, cfg.delta);
    let mut selected: Vec<usize> = mask
        .ones()
        .iter()
        .map(|&j| train.feature_ids()[winning_task.feature_indices[j]])
        .collect();
    selected.sort_unstable();

    Ok(RunResult {
        task_set: TaskSet {
            tasks: ms.swarms.iter().map(|s| s.task.clone()).collect(),
        },
        best_per_task,
        best_task,
        selected,
        trace,
        evaluations,
        wall: start.elapsed(),
    })
}

/// The no-selection baseline: a single all-ones particle on the full task.
fn run_full_baseline<T: Real>(
    train: &Dataset<T>,
    ctx: &FitnessContext<'_, T>,
    task_set: TaskSet,
    start: Instant,
) -> Result<RunResult<T>> {
    let n = train.n_features();
    let position = vec![T::one(); n];
    let task = &task_set.tasks[0];
    let (fitness, error, n_selected) = ctx.evaluate(&position, task)?;
    let particle = Particle {
        pbest_position: position.clone(),
        position,
        velocity: vec![T::zero(); n],
        fitness,
        error,
        n_selected,
        pbest_fitness: fitness,
    };
    Ok(RunResult {
        task_set: task_set.clone(),
        best_per_task: vec![particle],
        best_task: 0,
        selected: train.feature_ids().to_vec(),
        trace: vec![vec![fitness]],
        evaluations: 1,
        wall: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn task(id: usize, indices: &[usize], g: f64) -> TaskDefinition {
        TaskDefinition {
            task_id: id,
            feature_indices: indices.to_vec(),
            transfer_weight: g,
            source: crate::filters::TaskSource::Full,
        }
    }

    #[test]
    fn decode_mask_rules() {
        let m = decode_mask(&[1.0f64, 1.0], 0.5);
        assert_eq!(m.count(), 2);
        // exact threshold stays clear (strict inequality)
        let m = decode_mask(&[0.5f64], 0.5);
        assert_eq!(m.count(), 0);
        let m = decode_mask(&[0.6f64, 0.4, 0.51], 0.5);
        assert_eq!(m.bits(), &[true, false, true]);
        assert_eq!(m.count(), 2);
    }

    #[test]
    fn fitness_arithmetic() {
        // E=0.1, S=5, N=100, alpha=0.999999
        let alpha = 0.999999f64;
        let fitness = alpha * 0.1 + (1.0 - alpha) * 5.0 / 100.0;
        assert!((fitness - 0.09999995).abs() < 1e-15);
    }

    #[test]
    fn fitness_empty_mask_is_worst() {
        let d = Dataset::new(
            "t",
            vec![vec![0.0f64, 1.0], vec![1.0, 0.0], vec![0.1, 0.9], vec![0.9, 0.1]],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let folds = stratified_kfold(d.labels(), 2, 0).unwrap();
        let ctx = FitnessContext {
            train: &d,
            folds: &folds,
            delta: 0.5,
            alpha: 0.999999,
            n_full: 2,
        };
        let t = task(0, &[0, 1], 1.0);
        let (f, e, s) = ctx.evaluate(&[0.1, 0.1], &t).unwrap();
        assert_eq!((f, e, s), (1.0, 1.0, 0));
    }

    #[test]
    fn fitness_monotone_in_size_at_equal_error() {
        let alpha = 0.999999f64;
        let n = 100.0;
        let f3 = alpha * 0.2 + (1.0 - alpha) * 3.0 / n;
        let f7 = alpha * 0.2 + (1.0 - alpha) * 7.0 / n;
        assert!(f3 < f7);
    }

    fn particle(dim: usize, fitness: f64) -> Particle<f64> {
        Particle {
            position: vec![0.5; dim],
            velocity: vec![0.0; dim],
            fitness,
            error: fitness,
            n_selected: dim,
            pbest_position: vec![0.5; dim],
            pbest_fitness: fitness,
        }
    }

    #[test]
    fn compete_partitions_and_orders() {
        let particles = vec![
            particle(1, 0.9),
            particle(1, 0.1),
            particle(1, 0.5),
            particle(1, 0.5),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = pairwise_compete(&particles, &mut rng);
        assert_eq!(pairs.len(), 2);
        let mut seen: Vec<usize> = pairs.iter().flat_map(|&(w, l)| [w, l]).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        for &(w, l) in &pairs {
            assert!(particles[w].fitness <= particles[l].fitness);
        }
    }

    #[test]
    fn compete_two_particles_lower_fitness_wins() {
        for seed in 0..8 {
            let particles = vec![particle(1, 0.1), particle(1, 0.9)];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = pairwise_compete(&particles, &mut rng);
            assert_eq!(pairs[0].0, 0);
        }
    }

    #[test]
    fn plain_update_fixed_point_and_attraction() {
        // X_L = X_W, V = 0, phi = 0 -> unchanged.
        let mut pos = vec![0.3f64];
        let mut vel = vec![0.0f64];
        cso_plain_update(&mut pos, &mut vel, &[0.3], &[0.9], 0.0, (0.7, 0.2, 0.4));
        assert_eq!(pos, vec![0.3]);

        // V = 0, r2 = 1 -> full attraction to the winner.
        let mut pos = vec![0.2f64];
        let mut vel = vec![0.0f64];
        cso_plain_update(&mut pos, &mut vel, &[0.8], &[0.0], 0.0, (0.5, 1.0, 0.5));
        assert!((pos[0] - 0.8).abs() < 1e-15);

        // Hand arithmetic: V' = 0.5*0.1 + 0.5*0.6 = 0.35, X' = 0.55.
        let mut pos = vec![0.2f64];
        let mut vel = vec![0.1f64];
        cso_plain_update(&mut pos, &mut vel, &[0.8], &[0.0], 0.0, (0.5, 0.5, 0.9));
        assert!((vel[0] - 0.35).abs() < 1e-15);
        assert!((pos[0] - 0.55).abs() < 1e-15);
    }

    #[test]
    fn transfer_update_hand_arithmetic() {
        // Fixed point.
        let mut pos = vec![0.4f64];
        let mut vel = vec![0.0f64];
        cso_transfer_update(&mut pos, &mut vel, &[0.4], &[0.4], (0.3, 0.6, 0.9));
        assert_eq!(pos, vec![0.4]);

        // V=0, r2=0, r3=1 -> lands on the aggregated position.
        let mut pos = vec![0.7f64];
        let mut vel = vec![0.0f64];
        cso_transfer_update(&mut pos, &mut vel, &[0.2], &[0.15], (0.5, 0.0, 1.0));
        assert!((pos[0] - 0.15).abs() < 1e-15);

        // V' = 0.5*0.2 + 0.5*(-0.4) = -0.1, X' = 0.4.
        let mut pos = vec![0.5f64];
        let mut vel = vec![0.0f64];
        cso_transfer_update(&mut pos, &mut vel, &[0.7], &[0.1], (0.5, 0.5, 0.5));
        assert!((vel[0] + 0.1).abs() < 1e-15);
        assert!((pos[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn aggregate_identity_and_weighting() {
        let t1 = task(0, &[0, 1, 2, 3], 0.1);
        let t2 = task(1, &[0, 1], 0.45);
        let t3 = task(2, &[0, 2], 0.45);
        let t4 = task(3, &[0, 3], 0.45);

        // All sources share value p on feature 0 -> aggregate equals p.
        let p1 = vec![0.7f64, 0.2];
        let p3 = vec![0.7f64, 0.3];
        let p4 = vec![0.7f64, 0.4];
        let loser = vec![0.5f64, 0.5];
        let agg = aggregate_winner(
            &t2,
            &[(&t3, &p1[..]), (&t4, &p3[..]), (&t1, &p4[..])],
            &loser,
        );
        assert!((agg[0] - 0.7).abs() < 1e-15);

        // Target = Task 2, sources share coverage of feature 0 with weights
        // 0.1 + 0.45 + 0.45 = 1 -> plain weighted sum.
        let full_pos = vec![0.1f64, 0.2, 0.3, 0.4];
        let t3_pos = vec![0.5f64, 0.6];
        let t4_pos = vec![0.9f64, 0.8];
        let agg = aggregate_winner(
            &t2,
            &[
                (&t1, &full_pos[..]),
                (&t3, &t3_pos[..]),
                (&t4, &t4_pos[..]),
            ],
            &loser,
        );
        let expected0 = 0.1 * 0.1 + 0.45 * 0.5 + 0.45 * 0.9;
        assert!((agg[0] - expected0).abs() < 1e-15);
        // Feature 1 is covered only by the full task -> renormalized to it.
        assert!((agg[1] - 0.2).abs() < 1e-15);

        // Feature in no source task -> loser's own value.
        let t_only = task(0, &[5], 0.1);
        let agg = aggregate_winner(&t_only, &[(&t2, &t3_pos[..])], &[0.33]);
        assert!((agg[0] - 0.33).abs() < 1e-15);
    }

    #[test]
    fn mutation_rate_zero_is_identity() {
        let mut pos = vec![0.1f64, 0.5, 0.9];
        let orig = pos.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let changed = polynomial_mutation(&mut pos, &mut rng, 20.0, 0.0);
        assert!(!changed);
        assert_eq!(pos, orig);
    }

    #[test]
    fn mutation_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mut pos = vec![rng.gen::<f64>(); 4];
            polynomial_mutation(&mut pos, &mut rng, 20.0, 1.0);
            for &x in &pos {
                assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn mutation_symmetric_about_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let mut pos = vec![0.5f64];
            polynomial_mutation(&mut pos, &mut rng, 20.0, 1.0);
            sum += pos[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    fn small_train() -> Dataset<f64> {
        Dataset::new(
            "t",
            vec![
                vec![0.0, 0.8, 0.3],
                vec![0.1, 0.2, 0.7],
                vec![1.0, 0.9, 0.4],
                vec![0.9, 0.1, 0.6],
                vec![0.05, 0.5, 0.5],
                vec![0.95, 0.6, 0.2],
            ],
            vec![0, 0, 1, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn run_zero_iterations_returns_initial_best() {
        let cfg = AlgorithmConfig {
            population: 8,
            iterations: 0,
            inner_folds: 3,
            relieff_h: 1,
            seed: 5,
            ..AlgorithmConfig::default()
        };
        let r = run(&cfg, &small_train()).unwrap();
        assert_eq!(r.trace[0].len(), 1);
        assert_eq!(r.evaluations, 8);
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = AlgorithmConfig {
            population: 8,
            iterations: 3,
            inner_folds: 3,
            relieff_h: 1,
            seed: 11,
            ..AlgorithmConfig::default()
        };
        let d = small_train();
        let a = run(&cfg, &d).unwrap();
        let b = run(&cfg, &d).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.best_per_task, b.best_per_task);
    }

    #[test]
    fn run_swarm_sizes_preserved() {
        let cfg = AlgorithmConfig {
            population: 8,
            iterations: 2,
            inner_folds: 3,
            relieff_h: 1,
            seed: 1,
            ..AlgorithmConfig::default()
        };
        let d = small_train();
        let r = run(&cfg, &d).unwrap();
        assert_eq!(r.best_per_task.len(), r.task_set.len());
    }

    #[test]
    fn run_population_split_validation() {
        let cfg = AlgorithmConfig {
            population: 10, // not divisible by 4 tasks
            inner_folds: 3,
            relieff_h: 1,
            ..AlgorithmConfig::default()
        };
        assert!(run(&cfg, &small_train()).is_err());
    }

    #[test]
    fn full_baseline_selects_everything() {
        let cfg = AlgorithmConfig {
            variant: Variant::FullNoSelection,
            inner_folds: 3,
            ..AlgorithmConfig::default()
        };
        let d = small_train();
        let r = run(&cfg, &d).unwrap();
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn global_best_tie_break_prefers_lower_task() {
        let d = small_train();
        let cfg = AlgorithmConfig {
            population: 8,
            iterations: 0,
            inner_folds: 3,
            relieff_h: 1,
            seed: 2,
            ..AlgorithmConfig::default()
        };
        let r = run(&cfg, &d).unwrap();
        let best_fit = r.best().fitness;
        for (t, p) in r.best_per_task.iter().enumerate() {
            if p.fitness == best_fit {
                assert!(r.best_task <= t);
                break;
            }
        }
    }
}
