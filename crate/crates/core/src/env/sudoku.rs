//! Sudoku on 4x4 (2x2 boxes) and 9x9 (3x3 boxes) grids.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Observation, Transition};
use crate::error::{Error, Result};
use crate::grammar::{AtomicAction, Dialect, MacroAction};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SudokuBoard {
    pub size: u8,
    /// Row-major, 0 = empty.
    pub cells: Vec<u8>,
    pub givens: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechniqueGrade {
    Basic,
    BacktrackingOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SudokuTask {
    pub board: SudokuBoard,
    pub solution: Vec<u8>,
    pub empty_count: u32,
    pub level: String,
    pub technique_grade: TechniqueGrade,
}

fn check_size(size: u8) -> Result<()> {
    if size == 4 || size == 9 {
        Ok(())
    } else {
        Err(Error::domain(format!("sudoku size must be 4 or 9, got {size}")))
    }
}

/// Box side length.
pub fn box_side(size: u8) -> usize {
    if size == 4 {
        2
    } else {
        3
    }
}

/// 0-based box index of a 0-based cell index.
pub fn box_of(size: u8, idx: usize) -> usize {
    let n = usize::from(size);
    let b = box_side(size);
    let (r, c) = (idx / n, idx % n);
    (r / b) * (n / b) + c / b
}

/// Cell indices of box `k`.
pub fn box_cells(size: u8, k: usize) -> Vec<usize> {
    let n = usize::from(size);
    let b = box_side(size);
    let (br, bc) = ((k / (n / b)) * b, (k % (n / b)) * b);
    (0..b).flat_map(|dr| (0..b).map(move |dc| (br + dr) * n + bc + dc)).collect()
}

/// The 3n units (rows, columns, boxes) as cell-index lists.
pub fn units(size: u8) -> Vec<Vec<usize>> {
    let n = usize::from(size);
    let mut out = Vec::with_capacity(3 * n);
    for r in 0..n {
        out.push((0..n).map(|c| r * n + c).collect());
    }
    for c in 0..n {
        out.push((0..n).map(|r| r * n + c).collect());
    }
    for k in 0..n {
        out.push(box_cells(size, k));
    }
    out
}

/// No duplicate nonzero value in any unit.
pub fn is_consistent(size: u8, cells: &[u8]) -> bool {
    units(size).iter().all(|u| {
        let mut seen = 0u32;
        u.iter().all(|&i| {
            let v = cells[i];
            if v == 0 {
                return true;
            }
            let bit = 1 << v;
            let fresh = seen & bit == 0;
            seen |= bit;
            fresh
        })
    })
}

/// Complete and consistent.
pub fn is_solved_grid(size: u8, cells: &[u8]) -> bool {
    cells.iter().all(|&v| v >= 1 && v <= size) && is_consistent(size, cells)
}

/// Bitmask solver state; bit `v` set means value `v` is used.
struct Masks {
    n: usize,
    size: u8,
    rows: Vec<u16>,
    cols: Vec<u16>,
    boxes: Vec<u16>,
}

impl Masks {
    fn new(size: u8, cells: &[u8]) -> Option<Self> {
        let n = usize::from(size);
        let mut m = Masks { n, size, rows: vec![0; n], cols: vec![0; n], boxes: vec![0; n] };
        for (i, &v) in cells.iter().enumerate() {
            if v != 0 {
                if m.used(i) & (1 << v) != 0 {
                    return None;
                }
                m.set(i, v);
            }
        }
        Some(m)
    }

    fn used(&self, i: usize) -> u16 {
        self.rows[i / self.n] | self.cols[i % self.n] | self.boxes[box_of(self.size, i)]
    }

    fn set(&mut self, i: usize, v: u8) {
        let bit = 1 << v;
        self.rows[i / self.n] |= bit;
        self.cols[i % self.n] |= bit;
        self.boxes[box_of(self.size, i)] |= bit;
    }

    fn clear(&mut self, i: usize, v: u8) {
        let bit = !(1u16 << v);
        self.rows[i / self.n] &= bit;
        self.cols[i % self.n] &= bit;
        self.boxes[box_of(self.size, i)] &= bit;
    }

    fn candidates(&self, i: usize) -> u16 {
        let all: u16 = ((1u32 << (self.n + 1)) - 2) as u16;
        all & !self.used(i)
    }
}

/// Number of completions, counting stops at `cap`.
pub fn count_solutions(size: u8, cells: &[u8], cap: usize) -> usize {
    let Some(mut masks) = Masks::new(size, cells) else {
        return 0;
    };
    let mut grid = cells.to_vec();
    let mut count = 0;
    count_rec(&mut grid, &mut masks, cap, &mut count);
    count
}

fn count_rec(grid: &mut [u8], m: &mut Masks, cap: usize, count: &mut usize) {
    // Most constrained empty cell first.
    let mut best: Option<(usize, u16)> = None;
    for (i, &v) in grid.iter().enumerate() {
        if v == 0 {
            let c = m.candidates(i);
            if best.is_none_or(|(_, bc)| c.count_ones() < bc.count_ones()) {
                best = Some((i, c));
                if c.count_ones() <= 1 {
                    break;
                }
            }
        }
    }
    let Some((i, mut cands)) = best else {
        *count += 1;
        return;
    };
    while cands != 0 && *count < cap {
        let v = cands.trailing_zeros() as u8;
        cands &= cands - 1;
        grid[i] = v;
        m.set(i, v);
        count_rec(grid, m, cap, count);
        m.clear(i, v);
        grid[i] = 0;
    }
}

/// First completion found by backtracking, if any.
pub fn solve(size: u8, cells: &[u8]) -> Option<Vec<u8>> {
    let mut masks = Masks::new(size, cells)?;
    let mut grid = cells.to_vec();
    solve_rec(&mut grid, &mut masks).then_some(grid)
}

fn solve_rec(grid: &mut [u8], m: &mut Masks) -> bool {
    let mut best: Option<(usize, u16)> = None;
    for (i, &v) in grid.iter().enumerate() {
        if v == 0 {
            let c = m.candidates(i);
            if best.is_none_or(|(_, bc)| c.count_ones() < bc.count_ones()) {
                best = Some((i, c));
            }
        }
    }
    let Some((i, mut cands)) = best else {
        return true;
    };
    while cands != 0 {
        let v = cands.trailing_zeros() as u8;
        cands &= cands - 1;
        grid[i] = v;
        m.set(i, v);
        if solve_rec(grid, m) {
            return true;
        }
        m.clear(i, v);
        grid[i] = 0;
    }
    false
}

/// Random valid completed grid, deterministic per seed.
pub fn generate_solved_grid(size: u8, seed: u64) -> Result<Vec<u8>> {
    check_size(size)?;
    let n = usize::from(size);
    let mut rng = seeding::rng(seed);
    let mut grid = vec![0u8; n * n];
    let mut masks = Masks::new(size, &grid).expect("empty grid is consistent");
    fn fill(i: usize, grid: &mut [u8], m: &mut Masks, rng: &mut impl Rng) -> bool {
        if i == grid.len() {
            return true;
        }
        let c = m.candidates(i);
        let mut vals: Vec<u8> = (1..=m.size).filter(|v| c & (1 << v) != 0).collect();
        vals.shuffle(rng);
        for v in vals {
            grid[i] = v;
            m.set(i, v);
            if fill(i + 1, grid, m, rng) {
                return true;
            }
            m.clear(i, v);
            grid[i] = 0;
        }
        false
    }
    if !fill(0, &mut grid, &mut masks, &mut rng) {
        return Err(Error::Infeasible("no completion from an empty grid".into()));
    }
    Ok(grid)
}

const DIG_RETRIES: u64 = 32;

/// Remove `empty_target` cells from `grid` keeping the solution unique.
pub fn dig_puzzle(size: u8, grid: &[u8], empty_target: u32, seed: u64) -> Result<SudokuTask> {
    check_size(size)?;
    let cells = usize::from(size) * usize::from(size);
    if grid.len() != cells || !is_solved_grid(size, grid) {
        return Err(Error::domain("dig_puzzle needs a completed valid grid"));
    }
    if empty_target == 0 || empty_target as usize >= cells {
        return Err(Error::domain(format!("empty_target must lie in 1..{cells}, got {empty_target}")));
    }
    for attempt in 0..DIG_RETRIES {
        let mut rng = seeding::rng(seeding::derive(seed, &[attempt]));
        let mut order: Vec<usize> = (0..cells).collect();
        order.shuffle(&mut rng);
        let mut puzzle = grid.to_vec();
        let mut removed = 0u32;
        for &i in &order {
            if removed == empty_target {
                break;
            }
            let keep = puzzle[i];
            puzzle[i] = 0;
            if count_solutions(size, &puzzle, 2) == 1 {
                removed += 1;
            } else {
                puzzle[i] = keep;
            }
        }
        if removed == empty_target {
            let board = SudokuBoard::from_puzzle(size, puzzle);
            let technique_grade = grade_basic(&board);
            return Ok(SudokuTask {
                level: String::new(),
                empty_count: empty_target,
                solution: grid.to_vec(),
                board,
                technique_grade,
            });
        }
    }
    Err(Error::Infeasible(format!("no dig order reached {empty_target} empties in {DIG_RETRIES} attempts")))
}

/// Whether Full House, Naked Single and Hidden Single alone complete the puzzle.
pub fn grade_basic(board: &SudokuBoard) -> TechniqueGrade {
    if basic_fixpoint(board.size, &board.cells).iter().all(|&v| v != 0) {
        TechniqueGrade::Basic
    } else {
        TechniqueGrade::BacktrackingOnly
    }
}

/// Apply the three basic techniques until nothing changes.
pub fn basic_fixpoint(size: u8, cells: &[u8]) -> Vec<u8> {
    let mut grid = cells.to_vec();
    let Some(mut m) = Masks::new(size, &grid) else {
        return grid;
    };
    let units = units(size);
    loop {
        let mut progress = false;
        // Full house: a unit with a single empty cell.
        for u in &units {
            let empties: Vec<usize> = u.iter().copied().filter(|&i| grid[i] == 0).collect();
            if let [i] = empties[..] {
                let c = m.candidates(i);
                if c.count_ones() == 1 {
                    let v = c.trailing_zeros() as u8;
                    grid[i] = v;
                    m.set(i, v);
                    progress = true;
                }
            }
        }
        // Naked single: a cell with one candidate. Indexing, since `m` is
        // updated alongside the grid.
        #[allow(clippy::needless_range_loop)]
        for i in 0..grid.len() {
            if grid[i] == 0 {
                let c = m.candidates(i);
                if c.count_ones() == 1 {
                    let v = c.trailing_zeros() as u8;
                    grid[i] = v;
                    m.set(i, v);
                    progress = true;
                }
            }
        }
        // Hidden single: a value with one possible cell in a unit.
        for u in &units {
            for v in 1..=size {
                let spots: Vec<usize> =
                    u.iter().copied().filter(|&i| grid[i] == 0 && m.candidates(i) & (1 << v) != 0).collect();
                if let [i] = spots[..] {
                    grid[i] = v;
                    m.set(i, v);
                    progress = true;
                }
            }
        }
        if !progress {
            return grid;
        }
    }
}

impl SudokuBoard {
    /// Nonzero cells become givens.
    pub fn from_puzzle(size: u8, cells: Vec<u8>) -> Self {
        let givens = cells.iter().map(|&v| v != 0).collect();
        Self { size, cells, givens }
    }

    /// Parse an `n*n` digit string with `0` for empty cells.
    pub fn from_digits(size: u8, s: &str) -> Result<Self> {
        check_size(size)?;
        let n = usize::from(size);
        let cells: Vec<u8> = s
            .chars()
            .map(|ch| ch.to_digit(10).map(|d| d as u8).filter(|&d| d <= size))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::domain(format!("bad sudoku digit string {s:?}")))?;
        if cells.len() != n * n {
            return Err(Error::domain(format!("expected {} digits, got {}", n * n, cells.len())));
        }
        if !is_consistent(size, &cells) {
            return Err(Error::domain("sudoku digit string has duplicate values in a unit"));
        }
        Ok(Self::from_puzzle(size, cells))
    }

    pub fn to_digits(&self) -> String {
        self.cells.iter().map(|v| char::from(b'0' + v)).collect()
    }

    pub fn empty_count(&self) -> u32 {
        self.cells.iter().filter(|&&v| v == 0).count() as u32
    }

    fn index(&self, row: u8, col: u8) -> usize {
        usize::from(row - 1) * usize::from(self.size) + usize::from(col - 1)
    }
}

/// Sidecar metadata stored next to the digit string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SudokuSidecar {
    pub size: u8,
    pub solution: String,
    pub level: String,
    pub grade: TechniqueGrade,
}

impl SudokuTask {
    pub fn serialize(&self) -> (String, SudokuSidecar) {
        let solution = self.solution.iter().map(|v| char::from(b'0' + v)).collect();
        (
            self.board.to_digits(),
            SudokuSidecar { size: self.board.size, solution, level: self.level.clone(), grade: self.technique_grade },
        )
    }

    /// Rebuilds and re-verifies a task from its serialized form.
    pub fn deserialize(state: &str, sidecar: &SudokuSidecar) -> Result<Self> {
        let board = SudokuBoard::from_digits(sidecar.size, state)?;
        let solution = SudokuBoard::from_digits(sidecar.size, &sidecar.solution)?.cells;
        if !is_solved_grid(sidecar.size, &solution)
            || board.cells.iter().zip(&solution).any(|(&p, &s)| p != 0 && p != s)
        {
            return Err(Error::domain("solution does not complete the puzzle"));
        }
        Ok(Self {
            empty_count: board.empty_count(),
            board,
            solution,
            level: sidecar.level.clone(),
            technique_grade: sidecar.grade,
        })
    }
}

/// Fraction of atoms that are valid writes of the solution value.
pub fn step_correctness(transition: &Transition) -> f64 {
    let atoms = transition.valid.len();
    match transition.correct_atoms {
        Some(c) if atoms > 0 => c as f64 / atoms as f64,
        _ => 0.0,
    }
}

pub struct SudokuEnv {
    task: SudokuTask,
    cells: Vec<u8>,
    box_done: Vec<bool>,
}

impl SudokuEnv {
    pub fn new(task: SudokuTask) -> Self {
        let cells = task.board.cells.clone();
        let size = task.board.size;
        let box_done =
            (0..usize::from(size)).map(|k| box_cells(size, k).iter().all(|&i| cells[i] == task.solution[i])).collect();
        Self { task, cells, box_done }
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn task(&self) -> &SudokuTask {
        &self.task
    }

    fn solved(&self) -> bool {
        self.cells == self.task.solution
    }

    /// Whether writing `value` at cell `i` keeps all units duplicate-free.
    fn legal(&self, i: usize, value: u8) -> bool {
        let n = usize::from(self.task.board.size);
        let (r, c) = (i / n, i % n);
        let b = box_of(self.task.board.size, i);
        (0..n).all(|k| self.cells[r * n + k] != value && self.cells[k * n + c] != value)
            && box_cells(self.task.board.size, b).iter().all(|&j| self.cells[j] != value)
    }
}

impl Environment for SudokuEnv {
    fn dialect(&self) -> Dialect {
        Dialect::Sudoku { size: self.task.board.size }
    }

    fn goal_distance(&self) -> u32 {
        self.task.empty_count
    }

    fn goal_text(&self) -> String {
        let n = self.task.board.size;
        format!("fill every empty cell so each row, column and box contains 1..{n} exactly once")
    }

    fn observe(&self) -> Observation {
        let n = usize::from(self.task.board.size);
        let text = self
            .cells
            .chunks(n)
            .map(|row| row.iter().map(|v| if *v == 0 { '.' } else { char::from(b'0' + v) }).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n");
        let facets = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, v)| format!("r{}c{}={v}", i / n + 1, i % n + 1))
            .collect();
        Observation { text, facets }
    }

    fn apply(&mut self, action: &MacroAction) -> Transition {
        let size = self.task.board.size;
        let mut t = Transition { correct_atoms: Some(0), ..Default::default() };
        for atom in &action.atoms {
            let AtomicAction::Assign { value, row, col } = *atom else {
                t.valid.push(false);
                continue;
            };
            let in_bounds = (1..=size).contains(&value) && (1..=size).contains(&row) && (1..=size).contains(&col);
            if !in_bounds || self.solved() {
                t.valid.push(false);
                continue;
            }
            let i = self.task.board.index(row, col);
            if self.task.board.givens[i] || self.cells[i] != 0 || !self.legal(i, value) {
                t.valid.push(false);
                continue;
            }
            self.cells[i] = value;
            t.valid.push(true);
            if value == self.task.solution[i] {
                if let Some(c) = t.correct_atoms.as_mut() {
                    *c += 1;
                }
            }
            let b = box_of(size, i);
            if !self.box_done[b] && box_cells(size, b).iter().all(|&j| self.cells[j] == self.task.solution[j]) {
                self.box_done[b] = true;
                t.subgoal_events.push(b as u32);
            }
        }
        t.success = self.solved();
        t.terminal = t.success;
        t
    }

    fn is_success(&self) -> bool {
        self.solved()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_is_valid_and_deterministic() {
        let g = generate_solved_grid(4, 1).unwrap();
        assert!(is_solved_grid(4, &g));
        assert_eq!(g, generate_solved_grid(4, 1).unwrap());
        assert!(generate_solved_grid(5, 1).is_err());
    }

    #[test]
    fn one_empty_is_unique_and_basic() {
        let g = generate_solved_grid(9, 3).unwrap();
        let t = dig_puzzle(9, &g, 1, 3).unwrap();
        assert_eq!(t.empty_count, 1);
        assert_eq!(count_solutions(9, &t.board.cells, 2), 1);
        assert_eq!(t.technique_grade, TechniqueGrade::Basic);
    }

    #[test]
    fn dig_target_is_exact() {
        let g = generate_solved_grid(9, 11).unwrap();
        let t = dig_puzzle(9, &g, 12, 11).unwrap();
        assert_eq!(t.board.empty_count(), 12);
        assert_eq!(count_solutions(9, &t.board.cells, 2), 1);
        assert!(dig_puzzle(9, &g, 0, 1).is_err());
        assert!(dig_puzzle(9, &g, 81, 1).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let g = generate_solved_grid(4, 5).unwrap();
        let t = dig_puzzle(4, &g, 6, 5).unwrap();
        let (s, side) = t.serialize();
        assert_eq!(s.len(), 16);
        assert_eq!(SudokuTask::deserialize(&s, &side).unwrap(), t);
    }

    #[test]
    fn box_geometry() {
        assert_eq!(box_cells(9, 4), vec![30, 31, 32, 39, 40, 41, 48, 49, 50]);
        assert_eq!(box_of(9, 40), 4);
        assert_eq!(box_of(4, 15), 3);
    }
}
