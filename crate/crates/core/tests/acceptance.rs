//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed. Tolerances are pinned below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use horizonlab_core::datasets::{
    read_manifest, run_pipeline, write_manifest, DatasetManifest, LevelBand, PipelineConfig, Sidecar, Split,
};
use horizonlab_core::env::chain::{generate_chain, ObservationMode};
use horizonlab_core::env::rushhour::{
    apply_slide, component_distances, generate_candidate, solve_min_moves, RushEnv, RushGenConfig, RushTask,
};
use horizonlab_core::env::sudoku::{count_solutions, dig_puzzle, generate_solved_grid, SudokuTask};
use horizonlab_core::grammar::{parse_action, render_action, ActionText, AtomicAction, Direction, Vocabulary};
use horizonlab_core::harness::{
    avg_at_k, evaluate, pass_at_k, run_curriculum, CurriculumPhase, CurriculumPlan, EvalConfig, EvalReport,
};
use horizonlab_core::mdp::discounted_return;
use horizonlab_core::policy::logit_gradient;
use horizonlab_core::rl::{
    accumulate_policy_gradient, collect_batch, importance_weight, normalize_batch, normalize_groups, train,
    AdvantageBatch, AdvantageConfig, IsConfig, Normalization, TrainerConfig,
};
use horizonlab_core::{
    seeding, Dialect, Environment, GradientAccumulator, MacroAction, MacroMode, RewardMode, SoftmaxSequencePolicy,
    TaskInstance,
};
use rand::Rng;

const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(30);
const EXACT_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const SUDOKU_TIME_LIMIT: Duration = Duration::from_secs(120);
const CHAIN_TIME_LIMIT: Duration = Duration::from_secs(600);
const CHAIN_SEEDS: u64 = 20;
const SHORT_CHAIN_FLOOR: f64 = 0.9;
const HORIZON_GAP: f64 = 0.2;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------------ C1

fn sudoku_task(seed: u64) -> TaskInstance {
    let grid = generate_solved_grid(4, seed).unwrap();
    let empties = 3 + (seed % 6) as u32;
    TaskInstance::from_sudoku(format!("s{seed}"), dig_puzzle(4, &grid, empties, seed).unwrap())
}

fn rush_board(cfg: &RushGenConfig, seed: u64) -> horizonlab_core::env::rushhour::RushBoard {
    (0..).find_map(|i| generate_candidate(cfg, seeding::derive(seed, &[i]))).unwrap()
}

fn rush_task(seed: u64) -> TaskInstance {
    let board = rush_board(&RushGenConfig::default(), seed);
    TaskInstance::from_rush(format!("r{seed}"), RushTask::certify(board, "probe").unwrap())
}

fn chain_task(seed: u64) -> TaskInstance {
    let mode = if seed.is_multiple_of(2) { ObservationMode::Positional } else { ObservationMode::Windowed };
    let task = generate_chain(4 + (seed % 5) as u32, 2 + (seed % 2) as u16, seed).unwrap().with_mode(mode);
    TaskInstance::from_chain(format!("c{seed}"), task, "probe")
}

/// Surrogate objective with every turn coefficient held fixed.
fn surrogate(policy: &SoftmaxSequencePolicy, batch: &AdvantageBatch, ro: &[horizonlab_core::rl::Rollout], tau: f64) -> f64 {
    let mut total = 0.0;
    let mut tokens = 0;
    for r in &batch.records {
        let step = &ro[r.trajectory].trajectory.steps[r.turn];
        let (lp, _) = policy.action_logprob_at(&ro[r.trajectory].features[r.turn], &step.action_tokens, tau).unwrap();
        total += r.coefficient * lp;
        tokens += step.action_tokens.len();
    }
    total / tokens as f64
}

fn gradient_probe(probe: u64) -> Result<(f64, usize), String> {
    let mut rng = seeding::rng(seeding::derive(9001, &[probe]));
    let (tasks, dialect): (Vec<TaskInstance>, Dialect) = match probe % 3 {
        0 => ((0..3).map(|i| sudoku_task(probe * 10 + i)).collect(), Dialect::Sudoku { size: 4 }),
        1 => ((0..3).map(|i| rush_task(probe * 10 + i)).collect(), Dialect::RushHour),
        _ => {
            let t: Vec<TaskInstance> = (0..3).map(|i| chain_task(probe * 10 + i)).collect();
            let d = t[0].dialect();
            (t.into_iter().filter(|x| x.dialect() == d).collect(), d)
        }
    };
    let mode = [MacroMode::Atomic, MacroMode::Flexible(3), MacroMode::Fixed(2)][rng.random_range(0..3)];
    let mut behavior = SoftmaxSequencePolicy::new(dialect, mode, 10).unwrap();
    behavior.init_syntax_prior(2.0);
    for w in behavior.weights_mut() {
        *w += rng.random_range(-0.5..0.5);
    }
    let tau = rng.random_range(0.6..1.3);
    let mut cfg = TrainerConfig { batch_size: 6, seed: probe, train_temperature: Some(tau), ..Default::default() };
    cfg.rollout.temperature = tau;
    cfg.rollout.budgets.sudoku = 6;
    cfg.rollout.budgets.rushhour = 6;
    cfg.rollout.budgets.rushhour_macro = 6;
    cfg.rollout.reward_mode = RewardMode::Dense;
    let (rollouts, groups) = collect_batch(&behavior, &tasks, &cfg, 0).map_err(|e| e.to_string())?;
    let trajectories: Vec<_> = rollouts.iter().map(|r| &r.trajectory).collect();
    // Untrained Sudoku and Rush Hour batches earn no reward, so batch
    // normalization would zero every coefficient; unnormalized advantages
    // keep the penalty terms.
    let normalization = if probe % 3 == 2 { Normalization::Batch } else { Normalization::None };
    let adv = AdvantageConfig { normalization, ..Default::default() };
    let mut batch = AdvantageBatch::compute(&trajectories, &groups, &adv).map_err(|e| e.to_string())?;
    // Move the training policy off the behavior policy so weights vary.
    let mut policy = behavior.clone();
    for w in policy.weights_mut() {
        *w += rng.random_range(-0.001..0.001);
    }
    let is = IsConfig::default();
    let mut acc = GradientAccumulator::zeros(&policy);
    accumulate_policy_gradient(&policy, &mut acc, &rollouts, &mut batch, 0..rollouts.len(), &is, tau)
        .map_err(|e| e.to_string())?;
    let touched: Vec<usize> = acc.touched_slots().iter().map(|&s| s as usize).collect();
    let mut probes: Vec<usize> = touched.iter().copied().filter(|&s| acc.grad[s].abs() > 1e-6).collect();
    if probes.is_empty() {
        return Ok((0.0, 0));
    }
    probes.sort_by(|&a, &b| acc.grad[b].abs().total_cmp(&acc.grad[a].abs()));
    let mut chosen = vec![probes[0]];
    for _ in 0..3 {
        chosen.push(probes[rng.random_range(0..probes.len())]);
    }
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n = chosen.len();
    for s in chosen {
        let mut p = policy.clone();
        p.weights_mut()[s] += h;
        let up = surrogate(&p, &batch, &rollouts, tau);
        p.weights_mut()[s] -= 2.0 * h;
        let down = surrogate(&p, &batch, &rollouts, tau);
        let fd = (up - down) / (2.0 * h);
        let g = acc.grad[s];
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()));
    }
    Ok((worst, n))
}

fn c1_gradient() -> Verdict {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for probe in 0..100 {
        let (w, n) = gradient_probe(probe)?;
        worst = worst.max(w);
        coords += n;
    }
    let elapsed = t0.elapsed();
    ensure(worst < GRAD_REL_TOL, || format!("max relative error {worst:.2e}"))?;
    ensure(elapsed < GRAD_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    ensure(coords >= 300, || format!("only {coords} coordinates probed"))?;
    Ok(format!("100 probes over 3 envs, {coords} coordinates, max relative error {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

// ------------------------------------------------------------------ C2

fn c2_logit_gradient() -> Verdict {
    let mut rng = seeding::rng(2);
    let mut negatives = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-9f64..1.0).ln()).collect();
        let z: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let s = rng.random_range(0..n);
        let a = rng.random_range(-3.0..3.0);
        let g = logit_gradient(&p, s, a);
        for v in 0..n {
            let want = if v == s { (1.0 - p[s]) * a } else { -p[v] * a };
            ensure((g[v] - want).abs() <= EXACT_TOL, || format!("entry {v}: {} vs {want}", g[v]))?;
        }
        let sum: f64 = g.iter().sum();
        ensure(sum.abs() <= EXACT_TOL, || format!("sum {sum:e}"))?;
        if a < 0.0 {
            negatives += 1;
            ensure((0..n).filter(|&v| v != s).all(|v| g[v] > 0.0), || "non-sampled entry not positive".into())?;
        }
    }
    Ok(format!("1000 simplex points ({negatives} with A < 0)"))
}

// ------------------------------------------------------------------ C3

fn c3_importance() -> Verdict {
    let cfg = IsConfig::default();
    ensure((cfg.c_low, cfg.c_high, cfg.c_trunc) == (0.995, 1.01, 3.0), || format!("defaults {cfg:?}"))?;
    let mut rng = seeding::rng(3);
    for _ in 0..1000 {
        let n = rng.random_range(1..16);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..-0.01)).collect();
        let w = importance_weight(&b, &b, &cfg).unwrap();
        ensure(w.w == 1.0 && w.rho_seq == 1.0 && w.rho_geo == 1.0, || format!("on-policy {w:?}"))?;
    }
    let b = [-1.3, -0.2];
    let w = importance_weight(&[b[0] + 4f64.ln(), b[1]], &b, &cfg).unwrap();
    ensure((w.rho_seq - 4.0).abs() < EXACT_TOL && (w.rho_geo - 2.0).abs() < EXACT_TOL && w.w == 0.0, || format!("(4,1): {w:?}"))?;
    let r = 1.009f64;
    let w = importance_weight(&[b[0] + r.ln(), b[1] + r.ln()], &b, &cfg).unwrap();
    ensure((w.rho_geo - r).abs() < EXACT_TOL && (w.w - r * r).abs() < EXACT_TOL, || format!("(1.009,1.009): {w:?}"))?;
    // Batches whose every turn has rho_geo above the band are fully masked.
    for _ in 0..200 {
        let turns = rng.random_range(1..50);
        let mut masked = 0;
        for _ in 0..turns {
            let n = rng.random_range(1..10);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..-0.01)).collect();
            let t: Vec<f64> = b.iter().map(|x| x + rng.random_range(0.011f64.ln_1p()..0.5)).collect();
            let w = importance_weight(&t, &b, &cfg).unwrap();
            masked += usize::from(w.masked && w.w == 0.0);
        }
        ensure(masked == turns, || format!("masked fraction {masked}/{turns}"))?;
    }
    let mut max_w: f64 = 0.0;
    for _ in 0..100_000 {
        let n = rng.random_range(1..20);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..0.0)).collect();
        let t: Vec<f64> = b.iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
        max_w = max_w.max(importance_weight(&t, &b, &cfg).unwrap().w);
    }
    ensure(max_w <= 3.0, || format!("weight {max_w} above 3"))?;
    Ok(format!("closed forms exact, masked fraction 1.0, max w {max_w:.4}"))
}

// ------------------------------------------------------------------ C4

fn c4_normalization() -> Verdict {
    let mut rng = seeding::rng(4);
    let mut worst: f64 = 0.0;
    for i in 0..400 {
        let n = if i == 0 { 10_000 } else { rng.random_range(10..=10_000) };
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale + 7.0).collect();
        let z = normalize_batch(&v, 1e-8).unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst = worst.max(mean.abs()).max((std - 1.0).abs());
        ensure(mean.abs() <= NORM_TOL && (std - 1.0).abs() <= NORM_TOL, || format!("n={n}: mean {mean:e}, std {std}"))?;
        let groups = vec![0usize; n];
        let g = normalize_groups(&v, &groups, 1e-8).unwrap();
        ensure(g.iter().zip(&z).all(|(a, b)| a.to_bits() == b.to_bits()), || "single group differs from batch".into())?;
        let c = vec![rng.random_range(-5.0..5.0); n];
        ensure(normalize_batch(&c, 1e-8).unwrap().iter().all(|&x| x == 0.0), || "constant batch not zero".into())?;
    }
    // The same through the advantage pipeline.
    let tasks: Vec<TaskInstance> = (0..8).map(chain_task).filter(|t| t.dialect() == Dialect::Chain { branching: 2 }).collect();
    let mut p = SoftmaxSequencePolicy::new(Dialect::Chain { branching: 2 }, MacroMode::Atomic, 10).unwrap();
    p.init_syntax_prior(4.0);
    let cfg = TrainerConfig { batch_size: 32, ..Default::default() };
    let (ro, _) = collect_batch(&p, &tasks, &cfg, 0).unwrap();
    let tr: Vec<_> = ro.iter().map(|r| &r.trajectory).collect();
    let one = vec![0usize; tr.len()];
    let batch = AdvantageBatch::compute(&tr, &one, &AdvantageConfig::default()).unwrap();
    let group = AdvantageBatch::compute(&tr, &one, &AdvantageConfig { normalization: Normalization::Group, ..Default::default() }).unwrap();
    ensure(batch == group, || "group mode with one group differs from batch mode".into())?;
    Ok(format!("400 batches of 10..10^4, worst deviation {worst:.1e}; group = batch bitwise"))
}

// ------------------------------------------------------------------ C5

fn c5_returns() -> Verdict {
    let mut rng = seeding::rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let n = rng.random_range(1..30);
        let gamma = rng.random_range(0.5..=1.0);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = discounted_return(&r, gamma).unwrap();
        ensure(g[n - 1] == r[n - 1], || "last return differs from last reward".into())?;
        for t in 0..n - 1 {
            worst = worst.max((g[t] - (r[t] + gamma * g[t + 1])).abs());
        }
    }
    ensure(worst <= EXACT_TOL, || format!("recursion error {worst:e}"))?;
    let from_empty: AdvantageConfig = serde_json::from_str("{}").unwrap();
    ensure(from_empty.gamma == 0.995, || format!("empty advantage config gamma {}", from_empty.gamma))?;
    let run = horizonlab_core::config::RunConfig::parse("").map_err(|e| e.to_string())?;
    ensure(run.advantage.gamma == 0.995, || format!("empty run config gamma {}", run.advantage.gamma))?;
    Ok(format!("10^5 sequences, max error {worst:.1e}; empty config gives gamma 0.995"))
}

// ------------------------------------------------------------------ C6

fn c6_sudoku() -> Verdict {
    let t0 = Instant::now();
    let mut made = 0;
    let mut seed = 0u64;
    while made < 1000 {
        seed += 1;
        let grid = generate_solved_grid(4, seed).unwrap();
        let target = 4 + (seed % 8) as u32;
        let Ok(task) = dig_puzzle(4, &grid, target, seed) else { continue };
        let n = common::count_by_enumeration(&task.board.cells);
        ensure(n == 1, || format!("size-4 seed {seed}: {n} completions"))?;
        made += 1;
    }
    for i in 0..200u64 {
        let grid = generate_solved_grid(9, 10_000 + i).unwrap();
        let task = dig_puzzle(9, &grid, 20 + (i % 31) as u32, i).map_err(|e| e.to_string())?;
        let n = common::count_completions(9, &task.board.cells, 2);
        ensure(n == 1 && count_solutions(9, &task.board.cells, 2) == 1, || format!("size-9 task {i}: {n} completions"))?;
    }
    let m = run_pipeline(&PipelineConfig::table1(), 6).map_err(|e| e.to_string())?;
    let mut basic = 0;
    for r in m.records.iter().filter(|r| ["L1", "L2", "L3", "L4"].contains(&r.band.as_str())) {
        let Sidecar::Sudoku(_) = &r.sidecar else { return Err("non-sudoku record".into()) };
        let task: SudokuTask = match r.to_task().map_err(|e| e.to_string())?.kind {
            horizonlab_core::TaskKind::Sudoku(t) => t,
            _ => unreachable!(),
        };
        let done = common::singles_fixpoint(9, &task.board.cells, false);
        ensure(r.grade.as_deref() == Some("basic") && done.iter().all(|&v| v != 0), || format!("{} not basic", r.id))?;
        basic += 1;
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < SUDOKU_TIME_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!("1000 size-4 unique, 200 size-9 unique, {basic} L1-L4 emissions basic, {:.1}s", elapsed.as_secs_f64()))
}

// ------------------------------------------------------------------ C7

fn c7_rush() -> Verdict {
    let cfg = RushGenConfig::default();
    let mut rng = seeding::rng(7);
    let mut checked = 0;
    let mut instances = 0;
    let mut seed = 0u64;
    let mut boards = Vec::new();
    while instances < 500 {
        seed += 1;
        let Some(board) = generate_candidate(&cfg, seeding::derive(7, &[seed])) else { continue };
        instances += 1;
        let comp = component_distances(&board);
        // The generated board plus one shallow state of its component.
        let shallow: Vec<_> = comp.iter().filter(|(_, d)| (1..=10).contains(d)).collect();
        let mut probe = vec![board.clone()];
        if !shallow.is_empty() {
            probe.push(shallow[rng.random_range(0..shallow.len())].0.clone());
        }
        for b in probe {
            let d = solve_min_moves(&b).map_err(|e| e.to_string())?;
            if d <= 10 {
                let oracle = common::iddfs_min_moves(&b.to_grid_string(), 10);
                ensure(oracle == Some(d), || format!("{}: BFS {d}, IDDFS {oracle:?}", b.to_grid_string()))?;
                checked += 1;
            }
        }
        boards.push(board);
    }
    let mut macros = 0;
    while macros < 10_000 {
        let board = &boards[rng.random_range(0..boards.len())];
        let task = RushTask { board: board.clone(), min_moves: 0, min_cell_moves: 0, level_band: String::new() };
        let len = rng.random_range(1..=5);
        let mut atoms = Vec::new();
        let mut cur = board.clone();
        for _ in 0..50 {
            if atoms.len() == len || cur.is_goal() {
                break;
            }
            let v = cur.vehicles[rng.random_range(0..cur.vehicles.len())].id;
            let dir = Direction::ALL[rng.random_range(0..4)];
            if let Some(next) = apply_slide(&cur, v, dir, 1) {
                atoms.push(AtomicAction::Slide { vehicle: v, direction: dir });
                cur = next;
            }
        }
        if atoms.is_empty() {
            continue;
        }
        let mut whole = RushEnv::new(task.clone());
        whole.apply(&MacroAction { atoms: atoms.clone(), bound: None });
        let mut seq = RushEnv::new(task);
        for a in &atoms {
            seq.apply(&MacroAction::single(*a));
        }
        ensure(whole.board() == seq.board() && whole.board() == &cur, || format!("macro {atoms:?} diverged"))?;
        macros += 1;
    }
    Ok(format!("{checked} boards with d <= 10 agree with IDDFS; 10^4 macros equal atom sequences"))
}

// ------------------------------------------------------------------ C8

fn corpus(name: &str) -> Vec<String> {
    let path = format!("{}/tests/corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

fn c8_grammar() -> Verdict {
    let sets = [
        ("sudoku9.txt", Dialect::Sudoku { size: 9 }),
        ("sudoku4.txt", Dialect::Sudoku { size: 4 }),
        ("rushhour.txt", Dialect::RushHour),
        ("chain4.txt", Dialect::Chain { branching: 4 }),
    ];
    let mut lines = 0;
    for (file, dialect) in sets {
        let vocab = Vocabulary::new(dialect);
        for line in corpus(file) {
            let a = parse_action(&ActionText::new(line.as_str()), dialect, MacroMode::Unbounded)
                .map_err(|e| format!("{file}: {line}: {e:?}"))?;
            ensure(render_action(&a) == line, || format!("render changed {line}"))?;
            let back = vocab.detokenize(&vocab.tokenize(&line).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(back == line, || format!("token round trip changed {line} into {back}"))?;
            lines += 1;
        }
    }
    let alphabet: Vec<char> = "value(move,go)rc;0123456789 ABXZupdownleftright\t\n{}[]-+.é\u{0}".chars().collect();
    let dialects = [Dialect::Sudoku { size: 9 }, Dialect::Sudoku { size: 4 }, Dialect::RushHour, Dialect::Chain { branching: 3 }];
    let modes = [MacroMode::Atomic, MacroMode::Fixed(2), MacroMode::Flexible(4), MacroMode::Unbounded];
    let mut rng = seeding::rng(8);
    let mut valid = 0;
    let mut corpus_all: Vec<String> = ["sudoku9.txt", "rushhour.txt", "chain4.txt"].iter().flat_map(|f| corpus(f)).collect();
    corpus_all.truncate(2000);
    for i in 0..1_000_000u32 {
        let text: String = if i % 2 == 0 {
            let n = rng.random_range(0..40);
            (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        } else {
            // Mutated corpus strings land near the grammar.
            let mut chars: Vec<char> = corpus_all[rng.random_range(0..corpus_all.len())].chars().collect();
            for _ in 0..rng.random_range(1..4) {
                let k = rng.random_range(0..=chars.len());
                match rng.random_range(0..3) {
                    0 if k < chars.len() => {
                        chars.remove(k);
                    }
                    1 => chars.insert(k, alphabet[rng.random_range(0..alphabet.len())]),
                    _ if k < chars.len() => chars[k] = alphabet[rng.random_range(0..alphabet.len())],
                    _ => {}
                }
            }
            chars.into_iter().collect()
        };
        let dialect = dialects[(i % 4) as usize];
        let mode = modes[((i / 4) % 4) as usize];
        let outcome = catch_unwind(AssertUnwindSafe(|| parse_action(&ActionText::new(text.as_str()), dialect, mode)))
            .map_err(|_| format!("parser panicked on {text:?}"))?;
        if let Ok(a) = outcome {
            ensure(mode.accepts(a.len()), || format!("{text:?} parsed with {} atoms under {mode}", a.len()))?;
            let again = parse_action(&ActionText::new(render_action(&a)), dialect, mode);
            ensure(again.as_ref() == Ok(&a), || format!("{text:?} does not survive re-rendering"))?;
            valid += 1;
        }
    }
    Ok(format!("{lines} corpus lines round-trip; 10^6 fuzzed inputs, {valid} valid parses, rest FormatError, no panics"))
}

// ------------------------------------------------------------------ C9

fn c9_estimators() -> Verdict {
    let pattern = vec![vec![true, false, false, false]; 7];
    ensure(pass_at_k(&pattern) == 1.0 && avg_at_k(&pattern) == 0.25, || "pattern (1,0,0,0)".into())?;
    let mut rng = seeding::rng(9);
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let k = rng.random_range(1..8);
        let t: Vec<Vec<bool>> = (0..n).map(|_| (0..k).map(|_| rng.random_bool(0.3)).collect()).collect();
        let solved = t.iter().filter(|row| row.contains(&true)).count();
        let hits: usize = t.iter().map(|row| row.iter().filter(|&&b| b).count()).sum();
        ensure(pass_at_k(&t) == solved as f64 / n as f64, || "pass@k closed form".into())?;
        ensure(avg_at_k(&t) == hits as f64 / (n * k) as f64, || "avg@k closed form".into())?;
        let one: Vec<Vec<bool>> = t.iter().map(|row| vec![row[0]]).collect();
        ensure(pass_at_k(&one) == avg_at_k(&one), || "pass@1 differs from avg@1".into())?;
    }
    Ok("closed forms on 1000 random tables; pass@1 = avg@1".into())
}

// ------------------------------------------------------------- chain runs

struct ChainRun {
    mode: MacroMode,
    obs: ObservationMode,
    dense: bool,
    iterations: usize,
    batch: usize,
}

const CHAIN_LR: f64 = 20.0;

fn chain_data(
    seed: u64,
    train_ranges: &[(u32, u32)],
    test_ranges: &[(u32, u32)],
    obs: ObservationMode,
) -> (Vec<TaskInstance>, Vec<TaskInstance>, Vec<LevelBand>) {
    let mut ranges = train_ranges.to_vec();
    ranges.extend(test_ranges.iter().filter(|r| !train_ranges.contains(r)));
    ranges.sort();
    let bands: Vec<LevelBand> = ranges
        .iter()
        .map(|&r| {
            let train = if train_ranges.contains(&r) { 64 } else { 0 };
            let test = if test_ranges.contains(&r) { 32 } else { 0 };
            LevelBand::new(format!("D{}-{}", r.0, r.1), r.0, r.1, train, test)
        })
        .collect();
    let m = run_pipeline(&PipelineConfig::chain(bands.clone(), obs), seed).unwrap();
    (m.tasks(Some(Split::Train), None).unwrap(), m.tasks(Some(Split::Test), None).unwrap(), bands)
}

fn chain_policy(mode: MacroMode) -> SoftmaxSequencePolicy {
    let mut p = SoftmaxSequencePolicy::new(Dialect::Chain { branching: 2 }, mode, 16).unwrap();
    p.init_syntax_prior(6.0);
    if mode != MacroMode::Atomic {
        p.init_continuation_prior(3.0);
    }
    p
}

fn chain_configs(run: &ChainRun, seed: u64) -> (TrainerConfig, AdvantageConfig, EvalConfig) {
    let mut t = TrainerConfig {
        iterations: run.iterations,
        batch_size: run.batch,
        learning_rate: CHAIN_LR,
        seed,
        ..Default::default()
    };
    t.rollout.mode = run.mode;
    let mut a = AdvantageConfig::default();
    if run.dense {
        t.rollout.reward_mode = RewardMode::Dense;
        a.segmented = true;
    }
    let e = EvalConfig { k: 4, seed, rollout: t.rollout.clone() };
    (t, a, e)
}

/// Trains on the train split of `train_ranges`, evaluates avg@4 on the
/// held-out split of `test_ranges`.
fn chain_train_eval(run: &ChainRun, seed: u64, train_ranges: &[(u32, u32)], test_ranges: &[(u32, u32)]) -> EvalReport {
    let (tr, te, bands) = chain_data(seed, train_ranges, test_ranges, run.obs);
    let (t, a, e) = chain_configs(run, seed);
    let out = train(chain_policy(run.mode), &tr, &t, &a, &IsConfig::default()).unwrap();
    let eval_bands: Vec<LevelBand> = bands.into_iter().filter(|b| b.test > 0).collect();
    evaluate(&out.policy, &te, &eval_bands, &e).unwrap()
}

fn mean_over_seeds(f: impl Fn(u64) -> Vec<f64>) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..CHAIN_SEEDS).map(f).collect();
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

fn c10_horizon() -> Verdict {
    use MacroMode::*;
    use ObservationMode::*;
    let t0 = Instant::now();
    let short = mean_over_seeds(|s| {
        let run = ChainRun { mode: Atomic, obs: Positional, dense: false, iterations: 60, batch: 64 };
        vec![chain_train_eval(&run, s, &[(4, 4)], &[(4, 4)]).rows[0].avg_at_k]
    })[0];
    let long = mean_over_seeds(|s| {
        let atomic = ChainRun { mode: Atomic, obs: Windowed, dense: false, iterations: 120, batch: 128 };
        let macro4 = ChainRun { mode: Flexible(4), ..atomic };
        vec![
            chain_train_eval(&atomic, s, &[(12, 12)], &[(12, 12)]).rows[0].avg_at_k,
            chain_train_eval(&macro4, s, &[(12, 12)], &[(12, 12)]).rows[0].avg_at_k,
        ]
    });
    let dense = mean_over_seeds(|s| {
        let sparse = ChainRun { mode: Atomic, obs: Positional, dense: false, iterations: 40, batch: 64 };
        let segmented = ChainRun { dense: true, ..sparse };
        vec![
            chain_train_eval(&sparse, s, &[(12, 12)], &[(12, 12)]).rows[0].avg_at_k,
            chain_train_eval(&segmented, s, &[(12, 12)], &[(12, 12)]).rows[0].avg_at_k,
        ]
    });
    let elapsed = t0.elapsed();
    let detail = format!(
        "depth 4 atomic {short:.3}; depth 12 atomic {:.3} vs macro {:.3}; sparse {:.3} vs segmented {:.3}; {:.0}s",
        long[0],
        long[1],
        dense[0],
        dense[1],
        elapsed.as_secs_f64()
    );
    ensure(short >= SHORT_CHAIN_FLOOR, || detail.clone())?;
    ensure(long[1] - long[0] >= HORIZON_GAP, || detail.clone())?;
    ensure(dense[1] - dense[0] >= HORIZON_GAP, || detail.clone())?;
    ensure(elapsed < CHAIN_TIME_LIMIT, || detail.clone())?;
    Ok(detail)
}

// ----------------------------------------------------------------- C11

fn c11_generalization() -> Verdict {
    use MacroMode::*;
    use ObservationMode::*;
    let unseen = [(9, 12), (13, 16), (17, 20), (21, 24)];
    let curves = mean_over_seeds(|s| {
        let atomic = ChainRun { mode: Atomic, obs: Windowed, dense: false, iterations: 80, batch: 64 };
        let macro4 = ChainRun { mode: Flexible(4), ..atomic };
        let a = chain_train_eval(&atomic, s, &[(4, 8)], &unseen);
        let m = chain_train_eval(&macro4, s, &[(4, 8)], &unseen);
        a.rows.iter().chain(&m.rows).map(|r| r.avg_at_k).collect()
    });
    let (atomic, macro4) = curves.split_at(unseen.len());
    let curriculum = mean_over_seeds(|s| {
        let (tr, te, bands) = chain_data(s, &[(3, 5), (8, 10)], &[(8, 10)], Windowed);
        let run = ChainRun { mode: Atomic, obs: Windowed, dense: false, iterations: 0, batch: 64 };
        let (t, a, e) = chain_configs(&run, s);
        let phase = |name: &str, band: &str, iterations| CurriculumPhase {
            name: name.into(),
            bands: vec![band.into()],
            trainer: TrainerConfig { iterations, ..t.clone() },
        };
        let eval_bands = vec!["D8-10".to_string()];
        let staged = CurriculumPlan { phases: vec![phase("short", "D3-5", 30), phase("long", "D8-10", 30)], eval_bands: eval_bands.clone() };
        let long_only = CurriculumPlan { phases: vec![phase("long", "D8-10", 60)], eval_bands };
        let is = IsConfig::default();
        let c = run_curriculum(&staged, chain_policy(Atomic), &tr, &te, &bands, &a, &is, &e).unwrap();
        let b = run_curriculum(&long_only, chain_policy(Atomic), &tr, &te, &bands, &a, &is, &e).unwrap();
        vec![c.final_report.rows[0].avg_at_k, b.final_report.rows[0].avg_at_k]
    });
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let detail = format!(
        "unseen bands 9-12/13-16/17-20/21-24 macro {} vs atomic {}; curriculum {:.3} vs long-only {:.3}",
        fmt(macro4),
        fmt(atomic),
        curriculum[0],
        curriculum[1]
    );
    ensure(macro4.iter().zip(atomic).all(|(m, a)| m > a), || detail.clone())?;
    ensure(curriculum[0] >= curriculum[1], || detail.clone())?;
    Ok(detail)
}

// ----------------------------------------------------------------- C12

fn check_manifest(m: &DatasetManifest, bands: &[LevelBand]) -> Result<(), String> {
    m.validate().map_err(|e| e.to_string())?;
    for b in bands {
        for split in [Split::Train, Split::Test] {
            let n = m.count(&b.label, split);
            ensure(n == b.count(split), || format!("{} {split}: {n} records, want {}", b.label, b.count(split)))?;
        }
    }
    ensure(m.records.len() == bands.iter().map(|b| b.train + b.test).sum::<usize>(), || "extra records".into())?;
    for r in &m.records {
        let band = bands.iter().find(|b| b.label == r.band).ok_or("unknown band")?;
        ensure(band.contains(r.goal_distance), || format!("{} outside {}", r.id, band.label))?;
    }
    Ok(())
}

fn manifest_bytes(m: &DatasetManifest, dir: &std::path::Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    write_manifest(&path, m).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(&back, m);
    std::fs::read(&path).unwrap()
}

fn c12_pipeline() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (name, cfg) in [("table1", PipelineConfig::table1()), ("table2", PipelineConfig::table2())] {
        let a = run_pipeline(&cfg, 12).map_err(|e| e.to_string())?;
        check_manifest(&a, &cfg.bands)?;
        // The rerun uses a differently sized thread pool.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_pipeline(&cfg, 12)).map_err(|e| e.to_string())?;
        let ba = manifest_bytes(&a, dir.path(), &format!("{name}-a.jsonl"));
        let bb = manifest_bytes(&b, dir.path(), &format!("{name}-b.jsonl"));
        ensure(ba == bb, || format!("{name} reruns differ"))?;
        summary.push(format!("{name} {} records", a.records.len()));
    }
    Ok(format!("{}; counts exact, bands intact, reruns byte-identical", summary.join(", ")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("C1 policy gradient vs finite differences", c1_gradient),
        ("C2 softmax logit gradient structure", c2_logit_gradient),
        ("C3 importance weight law", c3_importance),
        ("C4 advantage normalization", c4_normalization),
        ("C5 discounted return identity", c5_returns),
        ("C6 sudoku oracles", c6_sudoku),
        ("C7 rush hour oracle", c7_rush),
        ("C8 action grammar", c8_grammar),
        ("C9 pass@k / avg@k estimators", c9_estimators),
        ("C10 chain horizon reduction", c10_horizon),
        ("C11 depth generalization and curriculum", c11_generalization),
        ("C12 dataset pipeline fidelity", c12_pipeline),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let t0 = Instant::now();
        let verdict = catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
