//! Synthetic branching chain with exact goal distance.
//!
//! At each position exactly one of `branching` choices is correct. A wrong
//! choice silently enters an absorbing failure region: the cursor keeps
//! advancing and observations look unchanged, but success is impossible.
//!
//! Each observation carries cues for the next `cue_span` positions
//! (`cue+k=c` means position `cursor+k` expects branch `c`). In windowed
//! mode cues appear only on signpost turns (`cursor % cue_span == 0`); the
//! other turns read `corridor`, so an agent must recall recent signposts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Observation, Transition};
use crate::error::{Error, Result};
use crate::grammar::{AtomicAction, Dialect, MacroAction};
use crate::seeding;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    #[default]
    Positional,
    Windowed,
}

pub const DEFAULT_CUE_SPAN: u32 = 4;
pub const DEFAULT_SUBGOAL_EVERY: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTask {
    pub depth: u32,
    pub branching: u16,
    pub correct_path: Vec<u16>,
    pub observation_mode: ObservationMode,
    pub cue_span: u32,
    /// A subgoal event fires every this many correct positions and at the end.
    pub subgoal_every: u32,
    pub seed: u64,
}

/// Random correct path, deterministic per seed.
pub fn generate_chain(depth: u32, branching: u16, seed: u64) -> Result<ChainTask> {
    if depth < 1 {
        return Err(Error::domain("chain depth must be at least 1"));
    }
    if branching < 2 {
        return Err(Error::domain("chain branching must be at least 2"));
    }
    let mut rng = seeding::rng(seed);
    let correct_path = (0..depth).map(|_| rng.random_range(0..branching)).collect();
    Ok(ChainTask {
        depth,
        branching,
        correct_path,
        observation_mode: ObservationMode::Positional,
        cue_span: DEFAULT_CUE_SPAN,
        subgoal_every: DEFAULT_SUBGOAL_EVERY,
        seed,
    })
}

impl ChainTask {
    pub fn with_mode(mut self, mode: ObservationMode) -> Self {
        self.observation_mode = mode;
        self
    }

    pub fn with_subgoal_every(mut self, every: u32) -> Self {
        self.subgoal_every = every.max(1);
        self
    }

    pub fn with_cue_span(mut self, span: u32) -> Self {
        self.cue_span = span.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.branching < 2 || self.cue_span < 1 || self.subgoal_every < 1 {
            return Err(Error::domain("chain task parameters out of range"));
        }
        if self.correct_path.len() != self.depth as usize || self.correct_path.iter().any(|&b| b >= self.branching) {
            return Err(Error::domain("chain correct_path inconsistent with depth/branching"));
        }
        Ok(())
    }
}

pub struct ChainEnv {
    task: ChainTask,
    cursor: u32,
    failed: bool,
}

impl ChainEnv {
    pub fn new(task: ChainTask) -> Self {
        Self { task, cursor: 0, failed: false }
    }

    pub fn cursor(&self) -> u32 {
        self.cursor
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    fn done(&self) -> bool {
        self.cursor >= self.task.depth
    }
}

impl Environment for ChainEnv {
    fn dialect(&self) -> Dialect {
        Dialect::Chain { branching: self.task.branching }
    }

    fn goal_distance(&self) -> u32 {
        self.task.depth
    }

    fn goal_text(&self) -> String {
        format!("choose the correct branch {} times in a row", self.task.depth)
    }

    fn observe(&self) -> Observation {
        let facets: Vec<String> = if self.done() {
            vec!["end".to_string()]
        } else if self.task.observation_mode == ObservationMode::Windowed && !self.cursor.is_multiple_of(self.task.cue_span) {
            vec!["corridor".to_string()]
        } else {
            let mut f = Vec::new();
            if self.task.observation_mode == ObservationMode::Windowed {
                f.push("signpost".to_string());
            }
            for k in 0..self.task.cue_span {
                let p = self.cursor + k;
                if p < self.task.depth {
                    f.push(format!("cue+{k}={}", self.task.correct_path[p as usize]));
                }
            }
            f
        };
        Observation { text: facets.join(" "), facets }
    }

    fn apply(&mut self, action: &MacroAction) -> Transition {
        let mut t = Transition::default();
        for atom in &action.atoms {
            let AtomicAction::Branch { index } = *atom else {
                t.valid.push(false);
                continue;
            };
            if index >= self.task.branching || self.is_success() {
                t.valid.push(false);
                continue;
            }
            t.valid.push(true);
            if self.done() {
                continue;
            }
            if index != self.task.correct_path[self.cursor as usize] {
                self.failed = true;
            }
            self.cursor += 1;
            if !self.failed && (self.cursor.is_multiple_of(self.task.subgoal_every) || self.done()) {
                t.subgoal_events.push((self.cursor - 1) / self.task.subgoal_every);
            }
        }
        t.success = self.is_success();
        t.terminal = t.success;
        t
    }

    fn is_success(&self) -> bool {
        self.done() && !self.failed
    }
}
