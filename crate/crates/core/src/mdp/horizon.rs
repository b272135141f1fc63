use serde::{Deserialize, Serialize};

use super::trajectory::{Outcome, Trajectory};

/// Goal distance, interaction budget and (for a successful run) the number of
/// environment turns the policy actually used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonProfile {
    /// Minimum number of atomic actions, certified by the environment oracle.
    pub goal_distance: u32,
    /// Maximum environment turns per episode.
    pub interaction_budget: u32,
    /// Turns used by a successful run.
    pub effective_horizon: Option<u32>,
}

impl HorizonProfile {
    pub fn new(goal_distance: u32, interaction_budget: u32) -> Self {
        Self { goal_distance, interaction_budget, effective_horizon: None }
    }

    pub fn with_run(mut self, trajectory: &Trajectory) -> Self {
        self.effective_horizon = effective_horizon(trajectory);
        self
    }

    /// Fewest turns any policy executing at most `atoms_per_turn` atoms per
    /// turn can need. `None` means unbounded macros.
    pub fn min_turns(&self, atoms_per_turn: Option<u32>) -> u32 {
        match atoms_per_turn {
            Some(n) => self.goal_distance.div_ceil(n.max(1)),
            None => u32::from(self.goal_distance > 0),
        }
    }

    /// Ordering check `min_turns <= effective_horizon <= interaction_budget`.
    /// With one atom per turn this is `d <= h <= H_max`.
    pub fn is_consistent(&self, atoms_per_turn: Option<u32>) -> bool {
        match self.effective_horizon {
            None => true,
            Some(h) => self.min_turns(atoms_per_turn) <= h && h <= self.interaction_budget,
        }
    }
}

/// Number of turns used by a successful trajectory; `None` otherwise.
pub fn effective_horizon(trajectory: &Trajectory) -> Option<u32> {
    match trajectory.outcome {
        Outcome::Success => Some(trajectory.steps.len() as u32),
        _ => None,
    }
}
