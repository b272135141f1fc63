use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use horizonlab_core::env::chain::generate_chain;
use horizonlab_core::env::rushhour::{generate_candidate, solve_min_moves, RushGenConfig};
use horizonlab_core::env::sudoku::{dig_puzzle, generate_solved_grid};
use horizonlab_core::grammar::{Dialect, MacroMode};
use horizonlab_core::rl::{
    accumulate_policy_gradient, collect_batch, train, AdvantageBatch, AdvantageConfig, IsConfig, RolloutConfig,
    TrainerConfig,
};
use horizonlab_core::{GradientAccumulator, RewardMode, SoftmaxSequencePolicy, TaskInstance};

fn rush_bfs(c: &mut Criterion) {
    let cfg = RushGenConfig::default();
    let boards: Vec<_> = (0..2000u64).filter_map(|s| generate_candidate(&cfg, s)).take(16).collect();
    c.bench_function("rush_bfs_16_boards", |b| {
        b.iter(|| boards.iter().map(|x| solve_min_moves(black_box(x)).unwrap_or(0)).sum::<u32>())
    });
}

fn sudoku_dig(c: &mut Criterion) {
    let grid = generate_solved_grid(9, 7).unwrap();
    c.bench_function("sudoku_dig_9x9_45", |b| b.iter(|| dig_puzzle(9, black_box(&grid), 45, 11).unwrap()));
}

fn chain_tasks(n: usize, depth: u32) -> Vec<TaskInstance> {
    (0..n)
        .map(|i| TaskInstance::from_chain(format!("c{i:03}"), generate_chain(depth, 2, i as u64).unwrap(), "D"))
        .collect()
}

fn chain_trainer(iterations: usize, mode: MacroMode) -> TrainerConfig {
    TrainerConfig {
        iterations,
        batch_size: 64,
        learning_rate: 20.0,
        rollout: RolloutConfig { mode, reward_mode: RewardMode::Sparse, ..Default::default() },
        ..Default::default()
    }
}

fn policy(mode: MacroMode) -> SoftmaxSequencePolicy {
    let mut p = SoftmaxSequencePolicy::new(Dialect::Chain { branching: 2 }, mode, 16).unwrap();
    p.init_syntax_prior(6.0);
    p
}

fn gradient(c: &mut Criterion) {
    let tasks = chain_tasks(64, 8);
    let cfg = chain_trainer(1, MacroMode::Flexible(4));
    let p = policy(MacroMode::Flexible(4));
    let (rollouts, groups) = collect_batch(&p, &tasks, &cfg, 0).unwrap();
    let trajectories: Vec<_> = rollouts.iter().map(|r| &r.trajectory).collect();
    let adv = AdvantageConfig::default();
    let is = IsConfig::default();
    let mut acc = GradientAccumulator::zeros(&p);
    c.bench_function("gradient_accumulation_64_rollouts", |b| {
        b.iter(|| {
            let mut batch = AdvantageBatch::compute(&trajectories, &groups, &adv).unwrap();
            accumulate_policy_gradient(&p, &mut acc, &rollouts, &mut batch, 0..rollouts.len(), &is, 0.8).unwrap()
        })
    });
}

fn chain_iteration(c: &mut Criterion) {
    let tasks = chain_tasks(64, 8);
    let cfg = chain_trainer(1, MacroMode::Flexible(4));
    let p = policy(MacroMode::Flexible(4));
    let (adv, is) = (AdvantageConfig::default(), IsConfig::default());
    c.bench_function("chain_training_iteration_b64", |b| {
        b.iter(|| train(p.clone(), &tasks, &cfg, &adv, &is).map_err(|e| e.to_string()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = rush_bfs, sudoku_dig, gradient, chain_iteration
}
criterion_main!(benches);
