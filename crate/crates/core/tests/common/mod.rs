//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.
#![allow(dead_code)]

use std::collections::HashMap;

// ---------------------------------------------------------------- sudoku

fn box_side(size: usize) -> usize {
    if size == 4 {
        2
    } else {
        3
    }
}

fn peers(size: usize, i: usize) -> Vec<usize> {
    let (r, c) = (i / size, i % size);
    let b = box_side(size);
    (0..size * size)
        .filter(|&j| {
            let (rj, cj) = (j / size, j % size);
            j != i && (rj == r || cj == c || (rj / b == r / b && cj / b == c / b))
        })
        .collect()
}

fn units(size: usize) -> Vec<Vec<usize>> {
    let b = box_side(size);
    let mut u: Vec<Vec<usize>> = Vec::new();
    for r in 0..size {
        u.push((0..size).map(|c| r * size + c).collect());
    }
    for c in 0..size {
        u.push((0..size).map(|r| r * size + c).collect());
    }
    for br in 0..size / b {
        for bc in 0..size / b {
            u.push((0..size).map(|k| (br * b + k / b) * size + bc * b + k % b).collect());
        }
    }
    u
}

/// Counts completions by plain cell-order backtracking, stopping at `cap`.
pub fn count_completions(size: usize, cells: &[u8], cap: usize) -> usize {
    let peer: Vec<Vec<usize>> = (0..size * size).map(|i| peers(size, i)).collect();
    let mut g = cells.to_vec();
    for i in 0..g.len() {
        if g[i] != 0 && peer[i].iter().any(|&p| g[p] == g[i]) {
            return 0;
        }
    }
    fn rec(g: &mut Vec<u8>, peer: &[Vec<usize>], size: usize, cap: usize) -> usize {
        // Most constrained empty cell first.
        let mut best: Option<(usize, Vec<u8>)> = None;
        for i in 0..g.len() {
            if g[i] != 0 {
                continue;
            }
            let opts: Vec<u8> = (1..=size as u8).filter(|&v| peer[i].iter().all(|&p| g[p] != v)).collect();
            if opts.is_empty() {
                return 0;
            }
            if best.as_ref().is_none_or(|b| opts.len() < b.1.len()) {
                best = Some((i, opts));
            }
        }
        let Some((i, opts)) = best else { return 1 };
        let mut n = 0;
        for v in opts {
            g[i] = v;
            n += rec(g, peer, size, cap - n);
            g[i] = 0;
            if n >= cap {
                break;
            }
        }
        n
    }
    rec(&mut g, &peer, size, cap)
}

/// Exhaustive enumeration of every filling of the empty cells, checked
/// against the constraints only when complete. Feasible for 4×4.
pub fn count_by_enumeration(cells: &[u8]) -> usize {
    assert_eq!(cells.len(), 16);
    let empties: Vec<usize> = (0..16).filter(|&i| cells[i] == 0).collect();
    let u = units(4);
    let mut g = cells.to_vec();
    let mut n = 0;
    for code in 0..4usize.pow(empties.len() as u32) {
        let mut c = code;
        for &i in &empties {
            g[i] = (c % 4) as u8 + 1;
            c /= 4;
        }
        if u.iter().all(|unit| {
            let mut seen = 0u8;
            unit.iter().all(|&i| {
                let bit = 1 << g[i];
                let fresh = seen & bit == 0;
                seen |= bit;
                fresh
            })
        }) {
            n += 1;
        }
    }
    n
}

/// Candidate-set propagation with Naked/Hidden Singles, optionally Naked
/// Pairs. Returns the grid at the fixpoint.
pub fn singles_fixpoint(size: usize, cells: &[u8], naked_pairs: bool) -> Vec<u8> {
    let peer: Vec<Vec<usize>> = (0..size * size).map(|i| peers(size, i)).collect();
    let u = units(size);
    let mut g = cells.to_vec();
    let mut cand: Vec<Vec<bool>> = (0..g.len())
        .map(|i| (0..=size).map(|v| v > 0 && g[i] == 0 && peer[i].iter().all(|&p| g[p] as usize != v)).collect())
        .collect();
    let place = |g: &mut Vec<u8>, cand: &mut Vec<Vec<bool>>, i: usize, v: usize| {
        g[i] = v as u8;
        cand[i].iter_mut().for_each(|c| *c = false);
        for &p in &peer[i] {
            cand[p][v] = false;
        }
    };
    loop {
        let mut progress = false;
        for i in 0..g.len() {
            let opts: Vec<usize> = (1..=size).filter(|&v| cand[i][v]).collect();
            if g[i] == 0 && opts.len() == 1 {
                place(&mut g, &mut cand, i, opts[0]);
                progress = true;
            }
        }
        if progress {
            continue;
        }
        for unit in &u {
            for v in 1..=size {
                let spots: Vec<usize> = unit.iter().copied().filter(|&i| cand[i][v]).collect();
                if spots.len() == 1 && unit.iter().all(|&i| g[i] as usize != v) {
                    place(&mut g, &mut cand, spots[0], v);
                    progress = true;
                }
            }
        }
        if progress {
            continue;
        }
        if naked_pairs {
            for unit in &u {
                for (x, &a) in unit.iter().enumerate() {
                    for &b in &unit[x + 1..] {
                        let n = cand[a].iter().filter(|&&c| c).count();
                        if n == 2 && cand[a] == cand[b] {
                            let pair = cand[a].clone();
                            for &o in unit {
                                if o != a && o != b {
                                    for v in 1..=size {
                                        if pair[v] && cand[o][v] {
                                            cand[o][v] = false;
                                            progress = true;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if !progress {
            return g;
        }
    }
}

pub fn parse_digits(s: &str) -> Vec<u8> {
    s.bytes().map(|b| if b == b'.' { 0 } else { b - b'0' }).collect()
}

// ------------------------------------------------------------- rush hour

/// A vehicle as (id, horizontal, fixed line, position, length).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Car {
    id: u8,
    horizontal: bool,
    line: u8,
    pos: u8,
    len: u8,
}

fn parse_grid(grid: &str) -> Vec<Car> {
    let g = grid.as_bytes();
    let mut cars: HashMap<u8, Vec<(u8, u8)>> = HashMap::new();
    for (i, &ch) in g.iter().enumerate() {
        if ch != b'.' {
            cars.entry(ch).or_default().push(((i / 6) as u8, (i % 6) as u8));
        }
    }
    let mut out: Vec<Car> = cars
        .into_iter()
        .map(|(id, cells)| {
            let horizontal = cells.iter().all(|c| c.0 == cells[0].0);
            let line = if horizontal { cells[0].0 } else { cells[0].1 };
            let pos = cells.iter().map(|c| if horizontal { c.1 } else { c.0 }).min().unwrap();
            Car { id, horizontal, line, pos, len: cells.len() as u8 }
        })
        .collect();
    out.sort_by_key(|c| c.id);
    out
}

fn occupied(cars: &[Car], skip: usize) -> [bool; 36] {
    let mut occ = [false; 36];
    for (k, c) in cars.iter().enumerate() {
        if k == skip {
            continue;
        }
        for d in 0..c.len {
            let (r, col) = if c.horizontal { (c.line, c.pos + d) } else { (c.pos + d, c.line) };
            occ[r as usize * 6 + col as usize] = true;
        }
    }
    occ
}

fn successors(cars: &[Car]) -> Vec<Vec<Car>> {
    let mut out = Vec::new();
    for k in 0..cars.len() {
        let occ = occupied(cars, k);
        let c = cars[k];
        let free = |p: u8| {
            let (r, col) = if c.horizontal { (c.line, p) } else { (p, c.line) };
            !occ[r as usize * 6 + col as usize]
        };
        let mut p = c.pos;
        while p > 0 && free(p - 1) {
            p -= 1;
            let mut next = cars.to_vec();
            next[k].pos = p;
            out.push(next);
        }
        let mut p = c.pos;
        while p + c.len < 6 && free(p + c.len) {
            p += 1;
            let mut next = cars.to_vec();
            next[k].pos = p;
            out.push(next);
        }
    }
    out
}

fn solved(cars: &[Car]) -> bool {
    cars.iter().any(|c| c.id == b'X' && c.pos + c.len == 6)
}

/// Iterative-deepening search over slide moves, with a table of the largest
/// remaining depth already explored from each state. `None` above `limit`.
pub fn iddfs_min_moves(grid: &str, limit: u32) -> Option<u32> {
    let start = parse_grid(grid);
    fn dfs(s: &[Car], depth: u32, seen: &mut HashMap<Vec<Car>, u32>) -> bool {
        if solved(s) {
            return true;
        }
        if depth == 0 {
            return false;
        }
        if seen.get(s).is_some_and(|&d| d >= depth) {
            return false;
        }
        seen.insert(s.to_vec(), depth);
        successors(s).iter().any(|n| dfs(n, depth - 1, seen))
    }
    (0..=limit).find(|&d| dfs(&start, d, &mut HashMap::new()))
}
