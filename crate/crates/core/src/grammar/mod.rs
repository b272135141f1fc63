//! Textual action surface: parsing, canonical rendering, macro arity modes
//! and the closed lexeme-level token vocabulary.
//!
//! Surface syntax, one environment per dialect:
//!
//! ```text
//! action  := item (';' item)*
//! sudoku  := 'value' '(' N ',' 'r' N 'c' N ')'
//! rush    := 'move' '(' ID ',' DIR [',' N] ')'     // N unit slides
//! chain   := 'go' '(' N ')'
//! ```
//!
//! Agents may wrap the action in the structured layout
//! `<think>...</think> REASON:{reason}, ACTION:{action}`.

mod parse;
mod render;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::{parse_action, ActionText};
pub use render::render_action;
pub use vocab::{TokenClass, Vocabulary, END_TOKEN, KEYWORD_TOKEN, SEP_TOKEN};

/// Largest slide a vehicle can make on a 6x6 board (length-2 car).
pub const MAX_SLIDE: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvTag {
    Sudoku,
    #[serde(rename = "rushhour")]
    RushHour,
    Chain,
}

impl fmt::Display for EnvTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvTag::Sudoku => "sudoku",
            EnvTag::RushHour => "rushhour",
            EnvTag::Chain => "chain",
        })
    }
}

impl FromStr for EnvTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sudoku" => Ok(EnvTag::Sudoku),
            "rushhour" => Ok(EnvTag::RushHour),
            "chain" => Ok(EnvTag::Chain),
            other => Err(format!("unknown environment {other:?} (expected sudoku, rushhour or chain)")),
        }
    }
}

/// An environment tag together with the bounds its syntax checks need.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum Dialect {
    Sudoku { size: u8 },
    #[serde(rename = "rushhour")]
    RushHour,
    Chain { branching: u16 },
}

impl Dialect {
    pub fn tag(&self) -> EnvTag {
        match self {
            Dialect::Sudoku { .. } => EnvTag::Sudoku,
            Dialect::RushHour => EnvTag::RushHour,
            Dialect::Chain { .. } => EnvTag::Chain,
        }
    }

    /// Atom cap applied to unbounded macros.
    pub fn unbounded_atom_cap(&self) -> usize {
        match *self {
            Dialect::Sudoku { size } => usize::from(size) * usize::from(size),
            Dialect::RushHour => 16,
            Dialect::Chain { .. } => 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    /// (row, col) unit offset.
    pub fn delta(self) -> (i8, i8) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AtomicAction {
    /// Write `value` at 1-based (`row`, `col`).
    Assign { value: u8, row: u8, col: u8 },
    /// Slide `vehicle` one cell.
    Slide { vehicle: char, direction: Direction },
    Branch { index: u16 },
}

/// An ordered bundle of atoms executed in one turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroAction {
    pub atoms: Vec<AtomicAction>,
    pub bound: Option<usize>,
}

impl MacroAction {
    pub fn single(atom: AtomicAction) -> Self {
        Self { atoms: vec![atom], bound: None }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// How many atoms a single turn may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MacroMode {
    Atomic,
    /// Exactly `n` atoms.
    Fixed(usize),
    /// Between 1 and `bound` atoms.
    Flexible(usize),
    Unbounded,
}

impl MacroMode {
    /// Most atoms per turn, `None` when unbounded.
    pub fn max_atoms(&self) -> Option<usize> {
        match *self {
            MacroMode::Atomic => Some(1),
            MacroMode::Fixed(n) | MacroMode::Flexible(n) => Some(n),
            MacroMode::Unbounded => None,
        }
    }

    pub fn min_atoms(&self) -> usize {
        match *self {
            MacroMode::Fixed(n) => n,
            _ => 1,
        }
    }

    pub fn accepts(&self, atoms: usize) -> bool {
        match *self {
            MacroMode::Atomic => atoms == 1,
            MacroMode::Fixed(n) => atoms == n,
            MacroMode::Flexible(b) => (1..=b).contains(&atoms),
            MacroMode::Unbounded => atoms >= 1,
        }
    }

    pub fn bound(&self) -> Option<usize> {
        match *self {
            MacroMode::Fixed(n) | MacroMode::Flexible(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for MacroMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroMode::Atomic => f.write_str("atomic"),
            MacroMode::Fixed(n) => write!(f, "fixed:{n}"),
            MacroMode::Flexible(n) => write!(f, "flexible:{n}"),
            MacroMode::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for MacroMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let count = |a: Option<&str>| -> Result<usize, String> {
            let a = a.ok_or_else(|| format!("{name} needs a count, e.g. {name}:4"))?;
            match a.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("macro count must be a positive integer, got {a:?}")),
            }
        };
        match name {
            "atomic" if arg.is_none() => Ok(MacroMode::Atomic),
            "unbounded" if arg.is_none() => Ok(MacroMode::Unbounded),
            "fixed" => Ok(MacroMode::Fixed(count(arg)?)),
            "flexible" => Ok(MacroMode::Flexible(count(arg)?)),
            _ => Err(format!("unknown macro mode {s:?} (atomic, fixed:N, flexible:N, unbounded)")),
        }
    }
}

impl From<MacroMode> for String {
    fn from(m: MacroMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MacroMode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatErrorKind {
    Unparseable,
    WrongArity,
    OutOfBoundsSyntax,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {detail}")]
pub struct FormatError {
    pub kind: FormatErrorKind,
    pub detail: String,
}

impl FormatError {
    pub(crate) fn new(kind: FormatErrorKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macro_mode_text_round_trip() {
        for m in [MacroMode::Atomic, MacroMode::Fixed(3), MacroMode::Flexible(5), MacroMode::Unbounded] {
            assert_eq!(m.to_string().parse::<MacroMode>().unwrap(), m);
        }
        assert!("fixed".parse::<MacroMode>().is_err());
        assert!("flexible:0".parse::<MacroMode>().is_err());
        assert!("atomic:2".parse::<MacroMode>().is_err());
    }

    #[test]
    fn mode_soundness() {
        for n in 1..6 {
            for atoms in 0..8 {
                assert_eq!(MacroMode::Fixed(n).accepts(atoms), atoms == n);
                assert_eq!(MacroMode::Flexible(n).accepts(atoms), (1..=n).contains(&atoms));
            }
        }
        assert!(!MacroMode::Atomic.accepts(2));
        assert!(!MacroMode::Unbounded.accepts(0));
    }
}
