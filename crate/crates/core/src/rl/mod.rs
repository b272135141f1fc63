//! Training mathematics: reward decomposition, normalization, advantage
//! mixing, importance weights, subgoal segmentation and the trainer loop.

pub mod advantage;
pub mod importance;
pub mod metrics;
pub mod rollout;
pub mod trainer;

pub use advantage::{
    decompose_rewards, mix_advantage, normalize_batch, normalize_groups, segment_by_subgoal, segmented_returns,
    AdvantageBatch, AdvantageConfig, Normalization, StepRecord,
};
pub use importance::{importance_weight, ImportanceWeight, IsConfig, IsMode};
pub use metrics::{IterationMetrics, TrainingLog};
pub use rollout::{rollout, Budgets, Rollout, RolloutConfig, RolloutStats};
pub use trainer::{accumulate_policy_gradient, collect_batch, train, TrainAbort, TrainOutcome, TrainerConfig, UpdateStats};
