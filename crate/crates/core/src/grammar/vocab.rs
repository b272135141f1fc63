use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{Dialect, MacroMode, MAX_SLIDE};
use crate::error::{Error, Result};

pub const KEYWORD_TOKEN: u32 = 0;
pub const SEP_TOKEN: u32 = 1;
pub const END_TOKEN: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenClass {
    Keyword,
    Sep,
    End,
    Value,
    Row,
    Col,
    Vehicle,
    Direction,
    Distance,
    Branch,
}

/// Closed lexeme-level vocabulary of one dialect.
///
/// Ids 0, 1, 2 are always the keyword, `;` and the end marker.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    dialect: Dialect,
    names: Vec<String>,
    surfaces: Vec<String>,
    classes: Vec<TokenClass>,
    lexemes: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(dialect: Dialect) -> Self {
        let mut v = Vocabulary {
            dialect,
            names: Vec::new(),
            surfaces: Vec::new(),
            classes: Vec::new(),
            lexemes: HashMap::new(),
        };
        let keyword = match dialect {
            Dialect::Sudoku { .. } => ("VAL", "value"),
            Dialect::RushHour => ("MOVE", "move"),
            Dialect::Chain { .. } => ("GO", "go"),
        };
        v.push(keyword.0, keyword.1, TokenClass::Keyword);
        v.push("SEP", ";", TokenClass::Sep);
        v.push("END", "<end>", TokenClass::End);
        match dialect {
            Dialect::Sudoku { size } => {
                for d in 1..=size {
                    v.push(&format!("D{d}"), &d.to_string(), TokenClass::Value);
                }
                for r in 1..=size {
                    v.push(&format!("R{r}"), &format!("r{r}"), TokenClass::Row);
                }
                for c in 1..=size {
                    v.push(&format!("C{c}"), &format!("c{c}"), TokenClass::Col);
                }
            }
            Dialect::RushHour => {
                for d in super::Direction::ALL {
                    v.push(&d.as_str().to_uppercase(), d.as_str(), TokenClass::Direction);
                }
                for n in 1..=MAX_SLIDE {
                    v.push(&format!("N{n}"), &n.to_string(), TokenClass::Distance);
                }
                for id in b'A'..=b'Z' {
                    let c = (id as char).to_string();
                    v.push(&format!("V{c}"), &c, TokenClass::Vehicle);
                }
            }
            Dialect::Chain { branching } => {
                for b in 0..branching {
                    v.push(&format!("B{b}"), &b.to_string(), TokenClass::Branch);
                }
            }
        }
        v
    }

    fn push(&mut self, name: &str, surface: &str, class: TokenClass) {
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.surfaces.push(surface.to_string());
        self.classes.push(class);
        if class != TokenClass::End {
            self.lexemes.insert(surface.to_string(), id);
        }
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, token: u32) -> &str {
        &self.names[token as usize]
    }

    pub fn class(&self, token: u32) -> TokenClass {
        self.classes[token as usize]
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    pub fn tokens_of(&self, class: TokenClass) -> impl Iterator<Item = u32> + '_ {
        self.classes.iter().enumerate().filter(move |(_, c)| **c == class).map(|(i, _)| i as u32)
    }

    /// Lexes alphanumeric runs (split at digit-to-letter boundaries) and `;`.
    /// Whitespace, parentheses and commas are skipped. No end marker is appended.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_ascii_alphanumeric() {
                let start = i;
                i += 1;
                while i < chars.len()
                    && chars[i].is_ascii_alphanumeric()
                    && !(chars[i - 1].is_ascii_digit() && chars[i].is_ascii_alphabetic())
                {
                    i += 1;
                }
                let lexeme: String = chars[start..i].iter().collect();
                out.push(self.lookup(&lexeme)?);
            } else if c == ';' {
                out.push(SEP_TOKEN);
                i += 1;
            } else if c.is_whitespace() || matches!(c, '(' | ')' | ',') {
                i += 1;
            } else {
                return Err(Error::UnknownLexeme { lexeme: c.to_string() });
            }
        }
        Ok(out)
    }

    fn lookup(&self, lexeme: &str) -> Result<u32> {
        self.lexemes.get(lexeme).copied().ok_or_else(|| Error::UnknownLexeme { lexeme: lexeme.to_string() })
    }

    /// Text for an emitted token sequence. A trailing end marker is dropped.
    /// Grammatical sequences render canonically; anything else renders as
    /// space-joined lexemes, which never parse.
    pub fn detokenize(&self, tokens: &[u32]) -> Result<String> {
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.len()) {
            return Err(Error::Domain(format!("token id {bad} outside vocabulary of {}", self.len())));
        }
        let body = match tokens.split_last() {
            Some((&END_TOKEN, rest)) => rest,
            _ => tokens,
        };
        match self.render_items(body) {
            Some(text) => Ok(text),
            None => Ok(body.iter().map(|&t| self.surfaces[t as usize].as_str()).collect::<Vec<_>>().join(" ")),
        }
    }

    fn render_items(&self, body: &[u32]) -> Option<String> {
        if body.is_empty() {
            return None;
        }
        let mut items = Vec::new();
        for item in body.split(|&t| t == SEP_TOKEN) {
            let classes: Vec<TokenClass> = item.iter().map(|&t| self.class(t)).collect();
            let s = |k: usize| self.surfaces[item[k] as usize].as_str();
            use TokenClass::*;
            let text = match (self.dialect, classes.as_slice()) {
                (Dialect::Sudoku { .. }, [Keyword, Value, Row, Col]) => format!("value({}, {}{})", s(1), s(2), s(3)),
                (Dialect::RushHour, [Keyword, Vehicle, Direction]) => format!("move({}, {})", s(1), s(2)),
                (Dialect::RushHour, [Keyword, Vehicle, Direction, Distance]) if s(3) == "1" => {
                    format!("move({}, {})", s(1), s(2))
                }
                (Dialect::RushHour, [Keyword, Vehicle, Direction, Distance]) => {
                    format!("move({}, {}, {})", s(1), s(2), s(3))
                }
                (Dialect::Chain { .. }, [Keyword, Branch]) => format!("go({})", s(1)),
                _ => return None,
            };
            items.push(text);
        }
        Some(items.join("; "))
    }

    fn item_pattern(&self) -> &'static [TokenClass] {
        use TokenClass::*;
        match self.dialect {
            Dialect::Sudoku { .. } => &[Keyword, Value, Row, Col],
            Dialect::RushHour => &[Keyword, Vehicle, Direction],
            Dialect::Chain { .. } => &[Keyword, Branch],
        }
    }

    fn max_items(&self, mode: MacroMode) -> usize {
        let cap = self.dialect.unbounded_atom_cap();
        mode.max_atoms().unwrap_or(cap).min(cap)
    }

    /// Longest emission (including the end marker) a policy may produce.
    pub fn max_action_tokens(&self, mode: MacroMode) -> usize {
        let items = self.max_items(mode);
        let item_len = self.item_pattern().len() + usize::from(self.allows_distance(mode));
        items * item_len + (items - 1) + 1
    }

    fn allows_distance(&self, mode: MacroMode) -> bool {
        self.dialect == Dialect::RushHour && mode.max_atoms() != Some(1)
    }

    /// Class-level over-approximation of the grammatical continuations.
    ///
    /// Entry `i` maps the class of the previous token (`None` at the start)
    /// to the classes allowed at position `i`. Items are counted, not atoms.
    pub fn syntax_table(&self, mode: MacroMode) -> Vec<BTreeMap<Option<TokenClass>, BTreeSet<TokenClass>>> {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        struct State {
            slot: usize,
            items: usize,
            prev: Option<TokenClass>,
        }
        let pattern = self.item_pattern();
        let max_items = self.max_items(mode);
        let min_items = match mode {
            MacroMode::Fixed(n) if self.dialect != Dialect::RushHour => n.min(max_items),
            _ => 1,
        };
        let distance = self.allows_distance(mode);
        let len = self.max_action_tokens(mode);
        let mut table = vec![BTreeMap::new(); len];
        let mut frontier: BTreeSet<State> = BTreeSet::from([State { slot: 0, items: 0, prev: None }]);
        for row in table.iter_mut() {
            let mut next = BTreeSet::new();
            for st in &frontier {
                let mut moves: Vec<(TokenClass, Option<State>)> = Vec::new();
                let item_done = st.slot == pattern.len();
                if st.slot < pattern.len() {
                    let c = pattern[st.slot];
                    let items = st.items + usize::from(st.slot + 1 == pattern.len());
                    moves.push((c, Some(State { slot: st.slot + 1, items, prev: Some(c) })));
                }
                if item_done {
                    if distance && st.prev == Some(TokenClass::Direction) {
                        moves.push((
                            TokenClass::Distance,
                            Some(State { slot: st.slot, items: st.items, prev: Some(TokenClass::Distance) }),
                        ));
                    }
                    if st.items < max_items {
                        moves.push((TokenClass::Sep, Some(State { slot: 0, items: st.items, prev: Some(TokenClass::Sep) })));
                    }
                    if st.items >= min_items {
                        moves.push((TokenClass::End, None));
                    }
                }
                let allowed: &mut BTreeSet<TokenClass> = row.entry(st.prev).or_default();
                for (c, to) in moves {
                    allowed.insert(c);
                    if let Some(to) = to {
                        next.insert(to);
                    }
                }
            }
            frontier = next;
        }
        table
    }
}
