//! Desk-scale laboratory for training agents on long-horizon puzzle tasks.
//!
//! The crate bundles three environments with certified goal distances
//! (Sudoku, Rush Hour and a synthetic signpost chain), a textual action
//! grammar with atomic and macro modes, a hashed linear softmax sequence
//! policy, and a REINFORCE trainer with batch-normalized mixed advantages and
//! masked/truncated importance weights.

pub mod config;
pub mod datasets;
pub mod env;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod mdp;
pub mod policy;
pub mod rl;
pub mod seeding;

pub use env::{Environment, Observation, RewardMode, TaskInstance, TaskKind, Transition};
pub use error::{Error, Result};
pub use grammar::{Dialect, EnvTag, FormatError, FormatErrorKind, MacroAction, MacroMode};
pub use mdp::{Context, ObservationWindow, Outcome, Step, Trajectory};
pub use policy::{GradientAccumulator, SoftmaxSequencePolicy};
