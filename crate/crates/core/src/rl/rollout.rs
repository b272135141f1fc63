use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{RewardMode, TaskInstance, TaskKind};
use crate::error::Result;
use crate::grammar::{parse_action, ActionText, MacroMode, END_TOKEN};
use crate::mdp::{build_window, Context, Outcome, Step, Trajectory, Turn};
use crate::policy::{Features, SoftmaxSequencePolicy};

/// Interaction budgets per environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub sudoku: u32,
    pub rushhour: u32,
    pub rushhour_macro: u32,
    /// Chain budget is `depth + chain_slack`.
    pub chain_slack: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { sudoku: 50, rushhour: 30, rushhour_macro: 20, chain_slack: 4 }
    }
}

impl Budgets {
    pub fn for_task(&self, task: &TaskInstance, mode: MacroMode) -> u32 {
        match &task.kind {
            TaskKind::Sudoku(_) => self.sudoku,
            TaskKind::RushHour(_) if mode == MacroMode::Atomic => self.rushhour,
            TaskKind::RushHour(_) => self.rushhour_macro,
            TaskKind::Chain(c) => c.depth + self.chain_slack,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub mode: MacroMode,
    pub temperature: f64,
    pub window: usize,
    pub reward_mode: RewardMode,
    pub format_penalty: f64,
    pub validity_penalty: f64,
    pub budgets: Budgets,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            mode: MacroMode::Atomic,
            temperature: 0.8,
            window: 2,
            reward_mode: RewardMode::Sparse,
            format_penalty: -0.5,
            validity_penalty: -0.5,
            budgets: Budgets::default(),
        }
    }
}

/// Per-episode counters the trajectory itself does not carry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub turns: usize,
    pub atoms: usize,
    pub invalid_atoms: usize,
    pub format_errors: usize,
    /// Turns with a format error or any invalid atom.
    pub bad_turns: usize,
    /// Sudoku only.
    pub correct_atoms: Option<usize>,
    pub budget: u32,
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub stats: RolloutStats,
    /// Feature hashes per step, aligned with `trajectory.steps`.
    pub features: Vec<Features>,
    /// Temperature-1 entropy at every sampled position.
    pub entropies: Vec<f64>,
}

/// One episode with `policy` at `cfg.temperature`.
pub fn rollout<R: Rng + ?Sized>(
    policy: &SoftmaxSequencePolicy,
    task: &TaskInstance,
    cfg: &RolloutConfig,
    seed: u64,
    rng: &mut R,
) -> Result<Rollout> {
    let mut env = task.env();
    let dialect = env.dialect();
    let goal = env.goal_text();
    let budget = cfg.budgets.for_task(task, cfg.mode);
    let vocab = policy.vocabulary();
    let mut history: Vec<Turn> = Vec::new();
    let mut steps = Vec::new();
    let mut features = Vec::new();
    let mut entropies = Vec::new();
    let mut stats = RolloutStats { budget, ..Default::default() };
    let is_sudoku = matches!(task.kind, TaskKind::Sudoku(_));
    if is_sudoku {
        stats.correct_atoms = Some(0);
    }
    let mut outcome = Outcome::BudgetExhausted;
    for _ in 0..budget {
        let observation = env.observe();
        let context = Context { window: build_window(&history, &goal, cfg.window), current: observation.clone() };
        let f = Features::new(&context);
        let (tokens, behavior, ent) = policy.sample_with_entropy(&f, cfg.temperature, rng)?;
        entropies.extend(ent);
        let text = vocab.detokenize(&tokens)?;
        let mut step = Step {
            context,
            action_tokens: tokens.clone(),
            behavior_logprobs: behavior,
            env_reward: 0.0,
            format_penalty: 0.0,
            validity_penalty: 0.0,
            subgoal_events: Vec::new(),
        };
        stats.turns += 1;
        let parsed = if tokens.last() == Some(&END_TOKEN) {
            parse_action(&ActionText::new(text.clone()), dialect, cfg.mode).ok()
        } else {
            None
        };
        let mut terminal = None;
        match parsed {
            None => {
                stats.format_errors += 1;
                stats.bad_turns += 1;
                step.format_penalty = cfg.format_penalty;
            }
            Some(action) => {
                let tr = env.apply(&action);
                stats.atoms += tr.valid.len();
                let invalid = tr.invalid_atoms();
                stats.invalid_atoms += invalid;
                if invalid > 0 {
                    stats.bad_turns += 1;
                    step.validity_penalty = cfg.validity_penalty;
                }
                if let (Some(c), Some(total)) = (tr.correct_atoms, stats.correct_atoms.as_mut()) {
                    *total += c;
                }
                step.env_reward = tr.reward(cfg.reward_mode);
                step.subgoal_events = tr.subgoal_events.clone();
                if tr.terminal {
                    terminal = Some(if tr.success { Outcome::Success } else { Outcome::Failure });
                }
            }
        }
        history.push(Turn { observation, thought: String::new(), reason: String::new(), action: text });
        steps.push(step);
        features.push(f);
        if let Some(o) = terminal {
            outcome = o;
            break;
        }
    }
    Ok(Rollout { trajectory: Trajectory { task_id: task.id.clone(), steps, outcome, seed }, stats, features, entropies })
}
