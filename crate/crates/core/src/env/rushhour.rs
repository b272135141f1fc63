//! 6x6 Rush Hour. The target car `X` is horizontal on row 2 (0-based) and
//! exits through the right edge.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Observation, Transition};
use crate::error::{Error, Result};
use crate::grammar::{AtomicAction, Dialect, Direction, MacroAction, MAX_SLIDE};
use crate::seeding;

pub const SIZE: u8 = 6;
pub const EXIT_ROW: u8 = 2;
pub const TARGET: char = 'X';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: char,
    pub row: u8,
    pub col: u8,
    pub orientation: Orientation,
    pub length: u8,
}

impl Vehicle {
    fn cells(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        (0..self.length).map(move |k| match self.orientation {
            Orientation::Horizontal => (self.row, self.col + k),
            Orientation::Vertical => (self.row + k, self.col),
        })
    }

    /// The coordinate that changes when sliding.
    fn pos(&self) -> u8 {
        match self.orientation {
            Orientation::Horizontal => self.col,
            Orientation::Vertical => self.row,
        }
    }

    fn with_pos(mut self, p: u8) -> Self {
        match self.orientation {
            Orientation::Horizontal => self.col = p,
            Orientation::Vertical => self.row = p,
        }
        self
    }
}

/// Vehicles sorted by id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RushBoard {
    pub vehicles: Vec<Vehicle>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RushTask {
    pub board: RushBoard,
    /// Slide moves (any distance counts as one move).
    pub min_moves: u32,
    /// Unit-cell moves; the atomic goal distance.
    pub min_cell_moves: u32,
    pub level_band: String,
}

fn bit(r: u8, c: u8) -> u64 {
    1u64 << (u32::from(r) * u32::from(SIZE) + u32::from(c))
}

impl RushBoard {
    /// Checks geometry, overlap and the target-car rule.
    pub fn new(mut vehicles: Vec<Vehicle>) -> Result<Self> {
        vehicles.sort_by_key(|v| v.id);
        let mut occ = 0u64;
        for w in vehicles.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::domain(format!("duplicate vehicle id {}", w[0].id)));
            }
        }
        for v in &vehicles {
            if !v.id.is_ascii_uppercase() || !(2..=3).contains(&v.length) {
                return Err(Error::domain(format!("bad vehicle {v:?}")));
            }
            for (r, c) in v.cells() {
                if r >= SIZE || c >= SIZE {
                    return Err(Error::domain(format!("vehicle {} leaves the board", v.id)));
                }
                if occ & bit(r, c) != 0 {
                    return Err(Error::domain(format!("vehicle {} overlaps another", v.id)));
                }
                occ |= bit(r, c);
            }
        }
        match vehicles.iter().find(|v| v.id == TARGET) {
            Some(x) if x.orientation == Orientation::Horizontal && x.row == EXIT_ROW && x.length == 2 => {}
            _ => return Err(Error::domain("target car X must be a horizontal length-2 car on the exit row")),
        }
        if vehicles.len() > 21 {
            return Err(Error::domain("too many vehicles"));
        }
        Ok(Self { vehicles })
    }

    pub fn target(&self) -> &Vehicle {
        self.vehicles.iter().find(|v| v.id == TARGET).expect("validated board has a target")
    }

    pub fn is_goal(&self) -> bool {
        let x = self.target();
        x.col + x.length == SIZE
    }

    pub fn occupancy(&self) -> u64 {
        self.vehicles.iter().flat_map(|v| v.cells()).fold(0, |m, (r, c)| m | bit(r, c))
    }

    /// 36-character row-major grid, `.` for empty.
    pub fn to_grid_string(&self) -> String {
        let mut g = vec!['.'; 36];
        for v in &self.vehicles {
            for (r, c) in v.cells() {
                g[usize::from(r) * 6 + usize::from(c)] = v.id;
            }
        }
        g.into_iter().collect()
    }

    pub fn from_grid_string(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 36 {
            return Err(Error::domain(format!("rush hour grid needs 36 characters, got {}", chars.len())));
        }
        let mut cells: HashMap<char, Vec<(u8, u8)>> = HashMap::new();
        for (i, &ch) in chars.iter().enumerate() {
            match ch {
                '.' => {}
                c if c.is_ascii_uppercase() => cells.entry(c).or_default().push(((i / 6) as u8, (i % 6) as u8)),
                other => return Err(Error::domain(format!("unexpected grid character {other:?}"))),
            }
        }
        let mut vehicles = Vec::new();
        for (id, cs) in cells {
            let (r0, c0) = cs[0];
            let len = cs.len() as u8;
            let horizontal = cs.iter().enumerate().all(|(k, &(r, c))| r == r0 && c == c0 + k as u8);
            let vertical = cs.iter().enumerate().all(|(k, &(r, c))| c == c0 && r == r0 + k as u8);
            let orientation = match (horizontal, vertical) {
                (true, false) => Orientation::Horizontal,
                (false, true) => Orientation::Vertical,
                _ => return Err(Error::domain(format!("vehicle {id} is not a straight 2-3 cell run"))),
            };
            vehicles.push(Vehicle { id, row: r0, col: c0, orientation, length: len });
        }
        Self::new(vehicles)
    }

    fn pack(&self) -> u64 {
        self.vehicles.iter().enumerate().fold(0, |s, (i, v)| s | (u64::from(v.pos()) << (3 * i)))
    }

    fn unpack(&self, state: u64) -> RushBoard {
        RushBoard {
            vehicles: self
                .vehicles
                .iter()
                .enumerate()
                .map(|(i, v)| v.with_pos(((state >> (3 * i)) & 7) as u8))
                .collect(),
        }
    }
}

/// Static vehicle layout for fast state-space search over packed positions.
struct Layout {
    fixed: Vec<Vehicle>,
    target: usize,
}

impl Layout {
    fn new(board: &RushBoard) -> Self {
        let target = board.vehicles.iter().position(|v| v.id == TARGET).expect("validated board has a target");
        Self { fixed: board.vehicles.clone(), target }
    }

    fn pos(state: u64, i: usize) -> u8 {
        ((state >> (3 * i)) & 7) as u8
    }

    fn occupancy(&self, state: u64) -> u64 {
        let mut occ = 0;
        for (i, v) in self.fixed.iter().enumerate() {
            let p = Self::pos(state, i);
            for k in 0..v.length {
                occ |= match v.orientation {
                    Orientation::Horizontal => bit(v.row, p + k),
                    Orientation::Vertical => bit(p + k, v.col),
                };
            }
        }
        occ
    }

    fn is_goal(&self, state: u64) -> bool {
        Self::pos(state, self.target) + 2 == SIZE
    }

    /// Visit successors. With `unit`, only one-cell slides.
    fn neighbors(&self, state: u64, unit: bool, mut f: impl FnMut(u64)) {
        let occ = self.occupancy(state);
        for (i, v) in self.fixed.iter().enumerate() {
            let p = Self::pos(state, i);
            let set = |np: u8| (state & !(7u64 << (3 * i))) | (u64::from(np) << (3 * i));
            let free = |q: u8| match v.orientation {
                Orientation::Horizontal => occ & bit(v.row, q) == 0,
                Orientation::Vertical => occ & bit(q, v.col) == 0,
            };
            let mut q = p;
            while q > 0 && free(q - 1) {
                q -= 1;
                f(set(q));
                if unit {
                    break;
                }
            }
            let mut q = p;
            while q + v.length < SIZE && free(q + v.length) {
                q += 1;
                f(set(q));
                if unit {
                    break;
                }
            }
        }
    }
}

fn bfs(board: &RushBoard, unit: bool) -> Result<u32> {
    let layout = Layout::new(board);
    let start = board.pack();
    if layout.is_goal(start) {
        return Ok(0);
    }
    let mut seen: HashMap<u64, u32> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let d = seen[&s];
        let mut found = false;
        layout.neighbors(s, unit, |n| {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(n) {
                if layout.is_goal(n) {
                    found = true;
                }
                e.insert(d + 1);
                queue.push_back(n);
            }
        });
        if found {
            return Ok(d + 1);
        }
    }
    Err(Error::Unsolvable)
}

/// Fewest slide moves (one vehicle, any free distance) to bring X to the exit.
pub fn solve_min_moves(board: &RushBoard) -> Result<u32> {
    bfs(board, false)
}

/// Fewest one-cell slides to bring X to the exit.
pub fn solve_min_cell_moves(board: &RushBoard) -> Result<u32> {
    bfs(board, true)
}

/// Every state connected to `board`, with its slide distance to the nearest
/// goal state. Empty when the component contains no goal.
pub fn component_distances(board: &RushBoard) -> Vec<(RushBoard, u32)> {
    let layout = Layout::new(board);
    let start = board.pack();
    let mut component = vec![start];
    let mut seen: HashMap<u64, u32> = HashMap::from([(start, u32::MAX)]);
    let mut i = 0;
    while i < component.len() {
        let s = component[i];
        layout.neighbors(s, false, |n| {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(n) {
                e.insert(u32::MAX);
                component.push(n);
            }
        });
        i += 1;
    }
    let mut queue: VecDeque<u64> = component.iter().copied().filter(|&s| layout.is_goal(s)).collect();
    for s in &queue {
        seen.insert(*s, 0);
    }
    while let Some(s) = queue.pop_front() {
        let d = seen[&s];
        layout.neighbors(s, false, |n| {
            let e = seen.get_mut(&n).expect("neighbors stay in the component");
            if *e == u32::MAX {
                *e = d + 1;
                queue.push_back(n);
            }
        });
    }
    component
        .into_iter()
        .filter_map(|s| {
            let d = seen[&s];
            (d != u32::MAX).then(|| (board.unpack(s), d))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RushGenConfig {
    pub min_vehicles: usize,
    pub max_vehicles: usize,
    /// Probability that a non-target vehicle is a length-3 truck.
    pub truck_probability: f64,
    pub placement_attempts: usize,
}

impl Default for RushGenConfig {
    fn default() -> Self {
        Self { min_vehicles: 12, max_vehicles: 15, truck_probability: 0.3, placement_attempts: 400 }
    }
}

impl RushGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_vehicles < 1 || self.min_vehicles > self.max_vehicles || self.max_vehicles > 16 {
            return Err(Error::domain("vehicle count range must satisfy 1 <= min <= max <= 16"));
        }
        if !(0.0..=1.0).contains(&self.truck_probability) {
            return Err(Error::domain("truck_probability must lie in [0,1]"));
        }
        Ok(())
    }
}

/// Random placement; `None` when placement fails, the board is already
/// solved, or it is unsolvable.
pub fn generate_candidate(config: &RushGenConfig, seed: u64) -> Option<RushBoard> {
    let mut rng = seeding::rng(seed);
    let count = rng.random_range(config.min_vehicles..=config.max_vehicles);
    let x = Vehicle {
        id: TARGET,
        row: EXIT_ROW,
        col: rng.random_range(0..SIZE - 2),
        orientation: Orientation::Horizontal,
        length: 2,
    };
    let mut occ = 0u64;
    for (r, c) in x.cells() {
        occ |= bit(r, c);
    }
    let mut vehicles = vec![x];
    let ids = ('A'..='Z').filter(|&c| c != TARGET);
    let mut ids = ids.take(count - 1);
    let mut attempts = 0;
    while vehicles.len() < count {
        attempts += 1;
        if attempts > config.placement_attempts {
            return None;
        }
        let length = if rng.random_bool(config.truck_probability) { 3 } else { 2 };
        let orientation = if rng.random_bool(0.5) { Orientation::Horizontal } else { Orientation::Vertical };
        let (rmax, cmax) = match orientation {
            Orientation::Horizontal => (SIZE, SIZE - length + 1),
            Orientation::Vertical => (SIZE - length + 1, SIZE),
        };
        let v = Vehicle { id: '?', row: rng.random_range(0..rmax), col: rng.random_range(0..cmax), orientation, length };
        // A horizontal car on the exit row can never let X out.
        if orientation == Orientation::Horizontal && v.row == EXIT_ROW {
            continue;
        }
        let mask = v.cells().fold(0, |m, (r, c)| m | bit(r, c));
        if occ & mask != 0 {
            continue;
        }
        occ |= mask;
        vehicles.push(Vehicle { id: ids.next().expect("count is at most 16"), ..v });
    }
    let board = RushBoard::new(vehicles).ok()?;
    if board.is_goal() || solve_min_moves(&board).is_err() {
        return None;
    }
    Some(board)
}

/// The board after one unit slide, or `None` if blocked or off-board.
fn slide_once(board: &RushBoard, idx: usize, dir: Direction) -> Option<RushBoard> {
    let v = board.vehicles[idx];
    let p = v.pos();
    let np = match (v.orientation, dir) {
        (Orientation::Horizontal, Direction::Left) | (Orientation::Vertical, Direction::Up) => p.checked_sub(1)?,
        (Orientation::Horizontal, Direction::Right) | (Orientation::Vertical, Direction::Down) => {
            if p + v.length >= SIZE {
                return None;
            }
            p + 1
        }
        _ => return None,
    };
    let moved = v.with_pos(np);
    let others = board
        .vehicles
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != idx)
        .flat_map(|(_, w)| w.cells())
        .fold(0u64, |m, (r, c)| m | bit(r, c));
    if moved.cells().any(|(r, c)| others & bit(r, c) != 0) {
        return None;
    }
    let mut next = board.clone();
    next.vehicles[idx] = moved;
    Some(next)
}

/// Apply `n` unit slides all-or-nothing.
pub fn apply_slide(board: &RushBoard, vehicle: char, dir: Direction, n: u8) -> Option<RushBoard> {
    let idx = board.vehicles.iter().position(|v| v.id == vehicle)?;
    let mut b = board.clone();
    for _ in 0..n {
        b = slide_once(&b, idx, dir)?;
    }
    Some(b)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RushSidecar {
    pub min_moves: u32,
    pub min_cell_moves: u32,
    pub band: String,
}

impl RushTask {
    /// Solves the board to certify both distances.
    pub fn certify(board: RushBoard, level_band: impl Into<String>) -> Result<Self> {
        let min_moves = solve_min_moves(&board)?;
        let min_cell_moves = solve_min_cell_moves(&board)?;
        Ok(Self { board, min_moves, min_cell_moves, level_band: level_band.into() })
    }

    pub fn serialize(&self) -> (String, RushSidecar) {
        (
            self.board.to_grid_string(),
            RushSidecar {
                min_moves: self.min_moves,
                min_cell_moves: self.min_cell_moves,
                band: self.level_band.clone(),
            },
        )
    }

    pub fn deserialize(state: &str, sidecar: &RushSidecar) -> Result<Self> {
        let board = RushBoard::from_grid_string(state)?;
        Ok(Self {
            board,
            min_moves: sidecar.min_moves,
            min_cell_moves: sidecar.min_cell_moves,
            level_band: sidecar.band.clone(),
        })
    }
}

pub struct RushEnv {
    task: RushTask,
    board: RushBoard,
}

impl RushEnv {
    pub fn new(task: RushTask) -> Self {
        let board = task.board.clone();
        Self { task, board }
    }

    pub fn board(&self) -> &RushBoard {
        &self.board
    }
}

impl Environment for RushEnv {
    fn dialect(&self) -> Dialect {
        Dialect::RushHour
    }

    fn goal_distance(&self) -> u32 {
        self.task.min_cell_moves
    }

    fn goal_text(&self) -> String {
        "slide vehicles so that car X reaches the exit on the right edge of row 3".to_string()
    }

    fn observe(&self) -> Observation {
        let g = self.board.to_grid_string();
        let text = g.as_bytes().chunks(6).map(|r| String::from_utf8_lossy(r).into_owned()).collect::<Vec<_>>().join("\n");
        let facets = self.board.vehicles.iter().map(|v| format!("{}@{},{}", v.id, v.row, v.col)).collect();
        Observation { text, facets }
    }

    /// Runs of identical unit slides (at most four long) form one
    /// all-or-nothing move.
    fn apply(&mut self, action: &MacroAction) -> Transition {
        let mut t = Transition::default();
        let atoms = &action.atoms;
        let mut i = 0;
        while i < atoms.len() {
            let AtomicAction::Slide { vehicle, direction } = atoms[i] else {
                t.valid.push(false);
                i += 1;
                continue;
            };
            let mut run = 1;
            while run < usize::from(MAX_SLIDE) && i + run < atoms.len() && atoms[i + run] == atoms[i] {
                run += 1;
            }
            let next = if self.board.is_goal() { None } else { apply_slide(&self.board, vehicle, direction, run as u8) };
            let ok = next.is_some();
            if let Some(b) = next {
                self.board = b;
            }
            t.valid.extend(std::iter::repeat_n(ok, run));
            i += run;
        }
        t.success = self.board.is_goal();
        t.terminal = t.success;
        t
    }

    fn is_success(&self) -> bool {
        self.board.is_goal()
    }
}
