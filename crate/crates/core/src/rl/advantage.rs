use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{discounted_return, Trajectory};

pub const DEFAULT_GAMMA: f64 = 0.995;
pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_FORMAT_PENALTY: f64 = -0.5;
pub const DEFAULT_VALIDITY_PENALTY: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Batch,
    /// Trajectory component normalized within each task group; the step
    /// component stays batch-normalized.
    Group,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvantageConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub normalization: Normalization,
    pub epsilon: f64,
    /// Cut trajectories at subgoal events and compute returns per segment.
    pub segmented: bool,
    pub format_penalty: f64,
    pub validity_penalty: f64,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
            normalization: Normalization::Batch,
            epsilon: DEFAULT_EPSILON,
            segmented: false,
            format_penalty: DEFAULT_FORMAT_PENALTY,
            validity_penalty: DEFAULT_VALIDITY_PENALTY,
        }
    }
}

impl AdvantageConfig {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push(("gamma".into(), "gamma must lie in (0,1]".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            v.push(("alpha".into(), "alpha must be a nonnegative finite number".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            v.push(("epsilon".into(), "epsilon must be positive".into()));
        }
        if !(self.format_penalty <= 0.0 && self.format_penalty.is_finite()) {
            v.push(("format_penalty".into(), "format_penalty must be a finite value <= 0".into()));
        }
        if !(self.validity_penalty <= 0.0 && self.validity_penalty.is_finite()) {
            v.push(("validity_penalty".into(), "validity_penalty must be a finite value <= 0".into()));
        }
        v
    }
}

/// Per-step `(r_traj, r_step)`: discounted env return from each step, and
/// the step's own penalties.
pub fn decompose_rewards(trajectory: &Trajectory, gamma: f64) -> Result<Vec<(f64, f64)>> {
    if trajectory.steps.is_empty() {
        return Err(Error::domain("trajectory has no steps"));
    }
    let g = discounted_return(&trajectory.env_rewards(), gamma)?;
    Ok(g.into_iter().zip(&trajectory.steps).map(|(r, s)| (r, s.step_reward())).collect())
}

/// Step index ranges, each ending at a step with a subgoal event (the last
/// range may end without one).
pub fn segment_by_subgoal(trajectory: &Trajectory) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, s) in trajectory.steps.iter().enumerate() {
        if !s.subgoal_events.is_empty() {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < trajectory.steps.len() {
        out.push(start..trajectory.steps.len());
    }
    out
}

/// `r_traj` where returns restart after every subgoal event.
pub fn segmented_returns(trajectory: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    let rewards = trajectory.env_rewards();
    let mut out = Vec::with_capacity(rewards.len());
    for seg in segment_by_subgoal(trajectory) {
        out.extend(discounted_return(&rewards[seg], gamma)?);
    }
    Ok(out)
}

/// Population mean and standard deviation.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(v - mean) / max(std, epsilon)` over the whole slice.
pub fn normalize_batch(values: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::domain("cannot normalize an empty batch"));
    }
    // The summed mean of equal values can miss them by an ulp.
    if values.iter().all(|&v| v == values[0]) {
        return Ok(vec![0.0; values.len()]);
    }
    let (mean, std) = moments(values);
    let d = std.max(epsilon);
    Ok(values.iter().map(|v| (v - mean) / d).collect())
}

/// Batch normalization applied separately within each group label.
pub fn normalize_groups(values: &[f64], groups: &[usize], epsilon: f64) -> Result<Vec<f64>> {
    if values.len() != groups.len() {
        return Err(Error::domain("one group label per value required"));
    }
    let mut out = vec![0.0; values.len()];
    let mut labels: Vec<usize> = groups.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for g in labels {
        let idx: Vec<usize> = (0..values.len()).filter(|&i| groups[i] == g).collect();
        let sub: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        for (i, v) in idx.into_iter().zip(normalize_batch(&sub, epsilon)?) {
            out[i] = v;
        }
    }
    Ok(out)
}

pub fn mix_advantage(r_traj_hat: f64, r_step_hat: f64, alpha: f64) -> f64 {
    r_traj_hat + alpha * r_step_hat
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub trajectory: usize,
    pub turn: usize,
    pub r_traj: f64,
    pub r_step: f64,
    pub r_traj_hat: f64,
    pub r_step_hat: f64,
    pub advantage: f64,
    /// Filled in at update time.
    pub weight: f64,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBatch {
    pub records: Vec<StepRecord>,
    pub batch_size: usize,
}

impl AdvantageBatch {
    /// Rewards → normalization → mixing for a batch. `groups[k]` labels the
    /// task group of trajectory `k`.
    pub fn compute<T: Borrow<Trajectory>>(trajectories: &[T], groups: &[usize], cfg: &AdvantageConfig) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::domain("empty trajectory batch"));
        }
        if groups.len() != trajectories.len() {
            return Err(Error::domain("one group label per trajectory required"));
        }
        let mut records = Vec::new();
        let mut step_groups = Vec::new();
        for (k, t) in trajectories.iter().map(Borrow::borrow).enumerate() {
            let r_traj = if cfg.segmented { segmented_returns(t, cfg.gamma)? } else { decompose_rewards(t, cfg.gamma)?.into_iter().map(|p| p.0).collect() };
            for (turn, (rt, s)) in r_traj.into_iter().zip(&t.steps).enumerate() {
                records.push(StepRecord {
                    trajectory: k,
                    turn,
                    r_traj: rt,
                    r_step: s.step_reward(),
                    r_traj_hat: rt,
                    r_step_hat: s.step_reward(),
                    advantage: 0.0,
                    weight: 1.0,
                    coefficient: 0.0,
                });
                step_groups.push(groups[k]);
            }
        }
        let rt: Vec<f64> = records.iter().map(|r| r.r_traj).collect();
        let rs: Vec<f64> = records.iter().map(|r| r.r_step).collect();
        let (rt_hat, rs_hat) = match cfg.normalization {
            Normalization::Batch => (normalize_batch(&rt, cfg.epsilon)?, normalize_batch(&rs, cfg.epsilon)?),
            Normalization::Group => (normalize_groups(&rt, &step_groups, cfg.epsilon)?, normalize_batch(&rs, cfg.epsilon)?),
            Normalization::None => (rt, rs),
        };
        for ((r, a), b) in records.iter_mut().zip(rt_hat).zip(rs_hat) {
            r.r_traj_hat = a;
            r.r_step_hat = b;
            r.advantage = mix_advantage(a, b, cfg.alpha);
            r.coefficient = r.advantage;
        }
        Ok(Self { records, batch_size: trajectories.len() })
    }

    pub fn mean_abs_advantage(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.advantage.abs()).sum::<f64>() / self.records.len() as f64
    }
}
