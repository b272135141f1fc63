//! Environments: a shared turn-level interface plus Sudoku, Rush Hour and a
//! synthetic branching chain.

pub mod chain;
pub mod rushhour;
pub mod sudoku;

use serde::{Deserialize, Serialize};

use crate::grammar::{Dialect, MacroAction};
pub use crate::mdp::Observation;

use chain::{ChainEnv, ChainTask};
use rushhour::{RushEnv, RushTask};
use sudoku::{SudokuEnv, SudokuTask};

/// How environment rewards are emitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// +1 on the turn that reaches the goal.
    #[default]
    Sparse,
    /// +1 per subgoal event; replaces the terminal reward.
    Dense,
}

/// Result of applying one macro action.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    /// One flag per atom, in order.
    pub valid: Vec<bool>,
    pub subgoal_events: Vec<u32>,
    pub terminal: bool,
    pub success: bool,
    /// Sudoku only: atoms that wrote the solution value.
    pub correct_atoms: Option<usize>,
}

impl Transition {
    pub fn invalid_atoms(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Environment reward for this turn.
    pub fn reward(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::Sparse => f64::from(u8::from(self.success)),
            RewardMode::Dense => self.subgoal_events.len() as f64,
        }
    }
}

/// A single-owner, turn-based environment instance.
pub trait Environment: Send {
    fn dialect(&self) -> Dialect;
    /// Oracle-certified minimum number of atomic actions.
    fn goal_distance(&self) -> u32;
    fn goal_text(&self) -> String;
    fn observe(&self) -> Observation;
    fn apply(&mut self, action: &MacroAction) -> Transition;
    fn is_success(&self) -> bool;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum TaskKind {
    Sudoku(SudokuTask),
    #[serde(rename = "rushhour")]
    RushHour(RushTask),
    Chain(ChainTask),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub goal_distance: u32,
    pub level: String,
}

impl TaskInstance {
    pub fn dialect(&self) -> Dialect {
        match &self.kind {
            TaskKind::Sudoku(t) => Dialect::Sudoku { size: t.board.size },
            TaskKind::RushHour(_) => Dialect::RushHour,
            TaskKind::Chain(t) => Dialect::Chain { branching: t.branching },
        }
    }

    pub fn env(&self) -> Box<dyn Environment> {
        match &self.kind {
            TaskKind::Sudoku(t) => Box::new(SudokuEnv::new(t.clone())),
            TaskKind::RushHour(t) => Box::new(RushEnv::new(t.clone())),
            TaskKind::Chain(t) => Box::new(ChainEnv::new(t.clone())),
        }
    }

    pub fn from_sudoku(id: impl Into<String>, task: SudokuTask) -> Self {
        Self { id: id.into(), goal_distance: task.empty_count, level: task.level.clone(), kind: TaskKind::Sudoku(task) }
    }

    pub fn from_rush(id: impl Into<String>, task: RushTask) -> Self {
        Self {
            id: id.into(),
            goal_distance: task.min_cell_moves,
            level: task.level_band.clone(),
            kind: TaskKind::RushHour(task),
        }
    }

    pub fn from_chain(id: impl Into<String>, task: ChainTask, level: impl Into<String>) -> Self {
        Self { id: id.into(), goal_distance: task.depth, level: level.into(), kind: TaskKind::Chain(task) }
    }
}
