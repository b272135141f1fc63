use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::advantage::AdvantageBatch;
use super::rollout::Rollout;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub success_rate: f64,
    /// Mean per-position entropy of the sampling snapshot, nats.
    pub entropy: f64,
    pub masked_fraction: f64,
    pub truncated_fraction: f64,
    pub mean_abs_advantage: f64,
    /// Turns with a format error or an invalid atom.
    pub invalid_action_ratio: f64,
    pub format_error_rate: f64,
    pub mean_turns: f64,
    pub grad_norm: f64,
}

impl IterationMetrics {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_batch(
        iteration: usize,
        rollouts: &[Rollout],
        batch: &AdvantageBatch,
        entropy: f64,
        masked: usize,
        truncated: usize,
        turns: usize,
        grad_norm: f64,
    ) -> Self {
        let n = rollouts.len().max(1) as f64;
        let all_turns: usize = rollouts.iter().map(|r| r.stats.turns).sum();
        let bad: usize = rollouts.iter().map(|r| r.stats.bad_turns).sum();
        let fmt: usize = rollouts.iter().map(|r| r.stats.format_errors).sum();
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            iteration,
            success_rate: rollouts.iter().filter(|r| r.trajectory.is_success()).count() as f64 / n,
            entropy,
            masked_fraction: frac(masked, turns),
            truncated_fraction: frac(truncated, turns),
            mean_abs_advantage: batch.mean_abs_advantage(),
            invalid_action_ratio: frac(bad, all_turns),
            format_error_rate: frac(fmt, all_turns),
            mean_turns: all_turns as f64 / n,
            grad_norm,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: Vec<IterationMetrics>,
}

impl TrainingLog {
    pub fn final_success(&self) -> Option<f64> {
        self.iterations.last().map(|m| m.success_rate)
    }

    /// Mean success over the last `k` iterations.
    pub fn tail_success(&self, k: usize) -> f64 {
        let tail = &self.iterations[self.iterations.len().saturating_sub(k)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().map(|m| m.success_rate).sum::<f64>() / tail.len() as f64
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for m in &self.iterations {
            serde_json::to_writer(&mut f, m)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::domain(e.to_string()))?;
        for m in &self.iterations {
            w.serialize(m).map_err(|e| Error::domain(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
