use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::advantage::{AdvantageBatch, AdvantageConfig};
use super::importance::{importance_weight, IsConfig};
use super::metrics::{IterationMetrics, TrainingLog};
use super::rollout::{rollout, Rollout, RolloutConfig};
use crate::env::TaskInstance;
use crate::mdp::Trajectory;
use crate::error::{Error, Result};
use crate::policy::{GradientAccumulator, SoftmaxSequencePolicy};
use crate::seeding;

const STREAM_ROLLOUT: u64 = 1;
const STREAM_EPOCH: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub iterations: usize,
    /// When set, overrides `iterations` with whole passes over the task set.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    /// Rollouts per drawn task; trajectories of one draw form a group.
    pub group_size: usize,
    /// Sequential updates per rollout refresh.
    pub minibatches: usize,
    pub learning_rate: f64,
    /// Temperature of the training-side log-probabilities; defaults to the
    /// sampling temperature.
    pub train_temperature: Option<f64>,
    pub seed: u64,
    pub rollout: RolloutConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            epochs: None,
            batch_size: 64,
            group_size: 1,
            minibatches: 1,
            learning_rate: 1e-2,
            train_temperature: None,
            seed: 0,
            rollout: RolloutConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if self.batch_size == 0 {
            v.push(("batch_size".into(), "batch_size must be positive".into()));
        }
        if self.group_size == 0 || (self.batch_size > 0 && !self.batch_size.is_multiple_of(self.group_size)) {
            v.push(("group_size".into(), "group_size must be positive and divide batch_size".into()));
        }
        if self.minibatches == 0 || self.minibatches > self.batch_size.max(1) {
            v.push(("minibatches".into(), "minibatches must lie in 1..=batch_size".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(("learning_rate".into(), "learning_rate must be positive and finite".into()));
        }
        if !(self.rollout.temperature > 0.0 && self.rollout.temperature.is_finite()) {
            v.push(("temperature".into(), "temperature must be positive and finite".into()));
        }
        if let Some(t) = self.train_temperature {
            if !(t > 0.0 && t.is_finite()) {
                v.push(("train_temperature".into(), "train_temperature must be positive and finite".into()));
            }
        }
        if self.rollout.window == 0 {
            v.push(("window".into(), "window must be at least 1 turn".into()));
        }
        v
    }

    pub fn train_temperature(&self) -> f64 {
        self.train_temperature.unwrap_or(self.rollout.temperature)
    }

    pub fn tasks_per_iteration(&self) -> usize {
        self.batch_size / self.group_size.max(1)
    }

    pub fn total_iterations(&self, n_tasks: usize) -> usize {
        match self.epochs {
            Some(e) => e * n_tasks.div_ceil(self.tasks_per_iteration().max(1)),
            None => self.iterations,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: SoftmaxSequencePolicy,
    pub log: TrainingLog,
    /// Iterate with the highest training success rate.
    pub best_iteration: usize,
    pub best_policy: SoftmaxSequencePolicy,
}

/// Training stopped on a non-finite update; `policy` is the last good iterate.
#[derive(Debug, thiserror::Error)]
#[error("training aborted at iteration {iteration}: {error}")]
pub struct TrainAbort {
    pub iteration: usize,
    pub error: Error,
    pub log: TrainingLog,
    pub policy: SoftmaxSequencePolicy,
}

/// Task indices for iteration `iter`, walking seeded per-epoch permutations.
fn draw_tasks(n: usize, per_iter: usize, iter: usize, seed: u64) -> Vec<usize> {
    let mut cache: Option<(usize, Vec<usize>)> = None;
    (0..per_iter)
        .map(|j| {
            let p = iter * per_iter + j;
            let epoch = p / n;
            if cache.as_ref().map(|c| c.0) != Some(epoch) {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut seeding::rng(seeding::derive(seed, &[STREAM_EPOCH, epoch as u64])));
                cache = Some((epoch, order));
            }
            cache.as_ref().expect("filled above").1[p % n]
        })
        .collect()
}

/// Roll out one iteration's batch against a frozen policy.
pub fn collect_batch(
    policy: &SoftmaxSequencePolicy,
    tasks: &[TaskInstance],
    cfg: &TrainerConfig,
    iter: usize,
) -> Result<(Vec<Rollout>, Vec<usize>)> {
    let drawn = draw_tasks(tasks.len(), cfg.tasks_per_iteration(), iter, cfg.seed);
    let jobs: Vec<(usize, usize)> =
        drawn.iter().enumerate().flat_map(|(g, &t)| (0..cfg.group_size).map(move |_| (g, t))).collect();
    let rollouts = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, &(_, t))| {
            let seed = seeding::derive(cfg.seed, &[STREAM_ROLLOUT, iter as u64, idx as u64]);
            rollout(policy, &tasks[t], &cfg.rollout, seed, &mut seeding::rng(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rollouts, jobs.iter().map(|j| j.0).collect()))
}

/// Per-minibatch importance-weight and gradient statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub turns: usize,
    pub tokens: usize,
    pub masked: usize,
    pub truncated: usize,
    pub grad_norm: f64,
}

/// Fills `acc` with the token-mean gradient of the surrogate
/// `Σ_turns w·A·Σ_i log π(a_i)` over the `members` trajectories, with the
/// importance weight `w` and advantage `A` held constant. Records each turn's
/// weight and coefficient back into `batch`. Accumulation is sequential so
/// the result does not depend on thread count.
pub fn accumulate_policy_gradient(
    policy: &SoftmaxSequencePolicy,
    acc: &mut GradientAccumulator,
    rollouts: &[Rollout],
    batch: &mut AdvantageBatch,
    members: std::ops::Range<usize>,
    is: &IsConfig,
    temperature: f64,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    acc.clear();
    for r in batch.records.iter_mut().filter(|r| members.contains(&r.trajectory)) {
        let ro = &rollouts[r.trajectory];
        let step = &ro.trajectory.steps[r.turn];
        let mut weight = None;
        policy.logprob_and_accumulate(acc, &ro.features[r.turn], &step.action_tokens, temperature, |train| {
            let w = importance_weight(train, &step.behavior_logprobs, is)?;
            weight = Some(w);
            Ok(w.w * r.advantage)
        })?;
        let w = weight.expect("coefficient closure ran");
        r.weight = w.w;
        r.coefficient = w.w * r.advantage;
        stats.turns += 1;
        stats.masked += usize::from(w.masked);
        stats.truncated += usize::from(w.truncated);
        stats.tokens += step.action_tokens.len();
    }
    // Token-mean aggregation.
    acc.scale(1.0 / stats.tokens.max(1) as f64);
    stats.grad_norm = acc.norm();
    Ok(stats)
}

fn update(
    policy: &mut SoftmaxSequencePolicy,
    acc: &mut GradientAccumulator,
    rollouts: &[Rollout],
    batch: &mut AdvantageBatch,
    members: std::ops::Range<usize>,
    is: &IsConfig,
    cfg: &TrainerConfig,
) -> Result<UpdateStats> {
    let stats = accumulate_policy_gradient(policy, acc, rollouts, batch, members, is, cfg.train_temperature())?;
    policy.apply_gradient(acc, cfg.learning_rate)?;
    Ok(stats)
}

/// Batch REINFORCE with mixed normalized advantages and importance weights.
pub fn train(
    mut policy: SoftmaxSequencePolicy,
    tasks: &[TaskInstance],
    cfg: &TrainerConfig,
    adv: &AdvantageConfig,
    is: &IsConfig,
) -> std::result::Result<TrainOutcome, Box<TrainAbort>> {
    let mut log = TrainingLog::default();
    let abort = |iteration, error, log: TrainingLog, policy| Box::new(TrainAbort { iteration, error, log, policy });
    let problems: Vec<String> = cfg
        .violations()
        .into_iter()
        .chain(adv.violations())
        .chain(is.violations())
        .map(|(k, m)| format!("{k}: {m}"))
        .collect();
    if !problems.is_empty() || tasks.is_empty() {
        let msg = if tasks.is_empty() { "no training tasks".to_string() } else { problems.join("; ") };
        return Err(abort(0, Error::Domain(msg), log, policy));
    }
    let mut best = (0usize, f64::NEG_INFINITY, policy.clone());
    let mut acc = GradientAccumulator::zeros(&policy);
    for iter in 0..cfg.total_iterations(tasks.len()) {
        let snapshot = policy.clone();
        let step = (|| -> Result<IterationMetrics> {
            let (rollouts, groups) = collect_batch(&snapshot, tasks, cfg, iter)?;
            let trajectories: Vec<&Trajectory> = rollouts.iter().map(|r| &r.trajectory).collect();
            let mut batch = AdvantageBatch::compute(&trajectories, &groups, adv)?;
            let positions: usize = rollouts.iter().map(|r| r.entropies.len()).sum();
            let entropy = rollouts.iter().flat_map(|r| &r.entropies).sum::<f64>() / positions.max(1) as f64;
            let n = rollouts.len();
            let mut turns = 0;
            let mut masked = 0;
            let mut truncated = 0;
            let mut grad_norm = 0.0;
            for m in 0..cfg.minibatches {
                let members = m * n / cfg.minibatches..(m + 1) * n / cfg.minibatches;
                let s = update(&mut policy, &mut acc, &rollouts, &mut batch, members, is, cfg)?;
                turns += s.turns;
                masked += s.masked;
                truncated += s.truncated;
                grad_norm += s.grad_norm / cfg.minibatches as f64;
            }
            Ok(IterationMetrics::from_batch(iter, &rollouts, &batch, entropy, masked, truncated, turns, grad_norm))
        })();
        match step {
            Ok(m) => {
                if m.success_rate > best.1 {
                    best = (iter, m.success_rate, snapshot);
                }
                log.iterations.push(m);
            }
            Err(e) => {
                log::warn!("iteration {iter} aborted: {e}");
                return Err(abort(iter, e, log, snapshot));
            }
        }
    }
    Ok(TrainOutcome { policy, log, best_iteration: best.0, best_policy: best.2 })
}
