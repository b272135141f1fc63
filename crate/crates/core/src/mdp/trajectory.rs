use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::window::Context;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// Terminal state that can no longer reach the goal.
    Failure,
    BudgetExhausted,
}

/// One agent turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub context: Context,
    /// Sampled vocabulary indices, including the terminating stop token.
    pub action_tokens: Vec<u32>,
    /// Per-token log-probabilities under the sampling policy.
    pub behavior_logprobs: Vec<f64>,
    pub env_reward: f64,
    pub format_penalty: f64,
    pub validity_penalty: f64,
    pub subgoal_events: Vec<u32>,
}

impl Step {
    pub fn validate(&self) -> Result<()> {
        if self.action_tokens.is_empty() {
            return Err(Error::domain("step has no action tokens"));
        }
        if self.action_tokens.len() != self.behavior_logprobs.len() {
            return Err(Error::TokenCountMismatch {
                train: self.action_tokens.len(),
                behavior: self.behavior_logprobs.len(),
            });
        }
        Ok(())
    }

    pub fn step_reward(&self) -> f64 {
        self.format_penalty + self.validity_penalty
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
    pub seed: u64,
}

impl Trajectory {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn env_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.env_reward).collect()
    }
}

/// Write one JSON object per line.
pub fn write_trajectories<W: Write>(mut out: W, trajectories: &[Trajectory]) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest { line: i + 1, message: e.to_string() })?;
        for s in &t.steps {
            s.validate()?;
        }
        out.push(t);
    }
    Ok(out)
}
