//! Fast runtime property checks behind the `selftest` command. Each check is
//! a reduced version of a property suite in the test tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{avg_at_k, pass_at_k};
use crate::env::rushhour::{apply_slide, generate_candidate, solve_min_moves, RushGenConfig};
use crate::env::sudoku::{count_solutions, dig_puzzle, generate_solved_grid};
use crate::grammar::{parse_action, render_action, ActionText, Dialect, MacroMode};
use crate::mdp::discounted_return;
use crate::policy::logit_gradient;
use crate::rl::{importance_weight, normalize_batch, IsConfig};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, result: std::result::Result<(), String>) -> SelfCheck {
    SelfCheck { name: name.into(), passed: result.is_ok(), detail: result.err().unwrap_or_default() }
}

fn returns(seed: u64) -> Result<(), String> {
    let mut rng = seeding::rng(seed);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = discounted_return(&r, 0.995).map_err(|e| e.to_string())?;
        for t in 0..n - 1 {
            if (g[t] - (r[t] + 0.995 * g[t + 1])).abs() > 1e-12 {
                return Err(format!("recursion broken at t={t}"));
            }
        }
    }
    Ok(())
}

fn normalization(seed: u64) -> Result<(), String> {
    let mut rng = seeding::rng(seed);
    for _ in 0..200 {
        let n = rng.random_range(10..500);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let z = normalize_batch(&v, 1e-8).map_err(|e| e.to_string())?;
        let mean = z.iter().sum::<f64>() / n as f64;
        let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if mean.abs() > 1e-9 || (std - 1.0).abs() > 1e-9 {
            return Err(format!("mean {mean}, std {std}"));
        }
    }
    Ok(())
}

fn importance(seed: u64) -> Result<(), String> {
    let mut rng = seeding::rng(seed);
    let cfg = IsConfig::default();
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
        let t: Vec<f64> = b.iter().map(|x| x + rng.random_range(-0.05..0.05)).collect();
        let w = importance_weight(&t, &b, &cfg).map_err(|e| e.to_string())?;
        if !(0.0..=3.0).contains(&w.w) {
            return Err(format!("weight {} outside [0, 3]", w.w));
        }
        let on = importance_weight(&b, &b, &cfg).map_err(|e| e.to_string())?;
        if on.w != 1.0 {
            return Err(format!("on-policy weight {}", on.w));
        }
    }
    Ok(())
}

fn softmax_gradient(seed: u64) -> Result<(), String> {
    let mut rng = seeding::rng(seed);
    for _ in 0..1000 {
        let n = rng.random_range(2..12);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let k = rng.random_range(0..n);
        let a = rng.random_range(-2.0..2.0);
        let g = logit_gradient(&p, k, a);
        if g.iter().sum::<f64>().abs() > 1e-12 {
            return Err("gradient does not sum to zero".into());
        }
        if a < 0.0 && g.iter().enumerate().any(|(v, &x)| v != k && x <= 0.0) {
            return Err("non-sampled entry not positive under negative advantage".into());
        }
    }
    Ok(())
}

fn estimators() -> Result<(), String> {
    let t = vec![vec![true, false, false, false]; 3];
    if pass_at_k(&t) != 1.0 || avg_at_k(&t) != 0.25 {
        return Err("pattern (1,0,0,0) does not give 1.0 / 0.25".into());
    }
    let one = vec![vec![true], vec![false], vec![true]];
    if pass_at_k(&one) != avg_at_k(&one) {
        return Err("pass@1 differs from avg@1".into());
    }
    Ok(())
}

fn grammar() -> Result<(), String> {
    let cases = [
        ("value(5, r3c4); value(1, r1c1)", Dialect::Sudoku { size: 9 }, MacroMode::Flexible(4)),
        ("move(A, right, 2); move(B, up)", Dialect::RushHour, MacroMode::Flexible(5)),
        ("go(1); go(0); go(1)", Dialect::Chain { branching: 2 }, MacroMode::Unbounded),
    ];
    for (text, dialect, mode) in cases {
        let a = parse_action(&ActionText::new(text), dialect, mode).map_err(|e| format!("{text}: {e:?}"))?;
        let b = parse_action(&ActionText::new(render_action(&a)), dialect, mode).map_err(|e| format!("{e:?}"))?;
        if a != b {
            return Err(format!("round trip changed {text}"));
        }
    }
    Ok(())
}

fn sudoku(seed: u64) -> Result<(), String> {
    for i in 0..50 {
        let s = seeding::derive(seed, &[i]);
        let grid = generate_solved_grid(4, s).map_err(|e| e.to_string())?;
        let task = dig_puzzle(4, &grid, 10, s).map_err(|e| e.to_string())?;
        if count_solutions(4, &task.board.cells, 2) != 1 {
            return Err(format!("puzzle {i} is not unique"));
        }
    }
    Ok(())
}

fn rush(seed: u64) -> Result<(), String> {
    let cfg = RushGenConfig::default();
    let mut checked = 0;
    for i in 0..50u64 {
        let Some(board) = generate_candidate(&cfg, seeding::derive(seed, &[i])) else { continue };
        let d = solve_min_moves(&board).map_err(|e| e.to_string())?;
        if d == 0 {
            return Err("candidate already solved".into());
        }
        // Some slide must decrease the distance by exactly one.
        let mut best = u32::MAX;
        for v in &board.vehicles {
            for dir in crate::grammar::Direction::ALL {
                for n in 1..=4 {
                    if let Some(next) = apply_slide(&board, v.id, dir, n) {
                        best = best.min(solve_min_moves(&next).map_err(|e| e.to_string())?);
                    }
                }
            }
        }
        if best + 1 != d {
            return Err(format!("board {i}: best successor {best}, distance {d}"));
        }
        checked += 1;
        if checked == 5 {
            break;
        }
    }
    Ok(())
}

/// Runs every check; `seed` drives the random probes.
pub fn run(seed: u64) -> Vec<SelfCheck> {
    vec![
        check("return recursion", returns(seed)),
        check("batch normalization", normalization(seed)),
        check("importance weight bounds", importance(seed)),
        check("softmax logit gradient", softmax_gradient(seed)),
        check("pass@k / avg@k", estimators()),
        check("grammar round trip", grammar()),
        check("sudoku uniqueness", sudoku(seed)),
        check("rush hour distance consistency", rush(seed)),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run(1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
