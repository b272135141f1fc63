use serde::{Deserialize, Serialize};

use super::{
    AtomicAction, Dialect, Direction, FormatError, FormatErrorKind, MacroAction, MacroMode, MAX_SLIDE,
};

/// Raw agent output plus the optional `REASON:..., ACTION:...` split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionText {
    pub raw: String,
    pub structured_output: Option<(String, String)>,
}

impl ActionText {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let structured_output = split_structured(&raw);
        Self { raw, structured_output }
    }

    /// The substring that carries the action.
    pub fn action_field(&self) -> &str {
        match &self.structured_output {
            Some((_, action)) => action,
            None => &self.raw,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        self.structured_output.as_ref().map(|(r, _)| r.as_str())
    }
}

fn strip_think(raw: &str) -> &str {
    match raw.rfind("</think>") {
        Some(end) => &raw[end + "</think>".len()..],
        None => raw,
    }
}

fn split_structured(raw: &str) -> Option<(String, String)> {
    let body = strip_think(raw);
    let a = body.rfind("ACTION:")?;
    let action = body[a + "ACTION:".len()..].trim().to_string();
    let head = &body[..a];
    let reason = match head.find("REASON:") {
        Some(r) => head[r + "REASON:".len()..].trim().trim_end_matches(',').trim().to_string(),
        None => String::new(),
    };
    Some((reason, action))
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

fn unparseable(detail: impl Into<String>) -> FormatError {
    FormatError::new(FormatErrorKind::Unparseable, detail)
}

fn out_of_bounds(detail: impl Into<String>) -> FormatError {
    FormatError::new(FormatErrorKind::OutOfBoundsSyntax, detail)
}

impl<'a> Cursor<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.ws();
        self.pos >= self.s.len()
    }

    fn expect(&mut self, c: u8) -> Result<(), FormatError> {
        self.ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(unparseable(format!("expected {:?} at byte {}", c as char, self.pos)))
        }
    }

    fn word(&mut self) -> Result<&'a str, FormatError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(unparseable(format!("expected a word at byte {start}")));
        }
        // ASCII only, so the slice is valid UTF-8.
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap_or_default())
    }

    /// Unsigned decimal, saturating; bounds are checked by the caller.
    fn number(&mut self) -> Result<u64, FormatError> {
        self.ws();
        self.digits()
    }

    fn digits(&mut self) -> Result<u64, FormatError> {
        let start = self.pos;
        let mut n: u64 = 0;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            n = n.saturating_mul(10).saturating_add(u64::from(self.s[self.pos] - b'0'));
            self.pos += 1;
        }
        if start == self.pos {
            return Err(unparseable(format!("expected a number at byte {start}")));
        }
        Ok(n)
    }

    /// A single letter immediately followed by digits, e.g. `r3`.
    fn tagged(&mut self, tag: u8) -> Result<u64, FormatError> {
        if self.peek() != Some(tag) {
            return Err(unparseable(format!("expected '{}' at byte {}", tag as char, self.pos)));
        }
        self.pos += 1;
        self.digits()
    }
}

fn in_range(n: u64, lo: u64, hi: u64, what: &str) -> Result<u64, FormatError> {
    if (lo..=hi).contains(&n) {
        Ok(n)
    } else {
        Err(out_of_bounds(format!("{what} {n} outside {lo}..={hi}")))
    }
}

fn parse_item(cur: &mut Cursor<'_>, dialect: Dialect, atoms: &mut Vec<AtomicAction>) -> Result<(), FormatError> {
    let kw = cur.word()?;
    match (dialect, kw) {
        (Dialect::Sudoku { size }, "value") => {
            let n = u64::from(size);
            cur.expect(b'(')?;
            let v = cur.number()?;
            cur.expect(b',')?;
            cur.ws();
            let r = cur.tagged(b'r')?;
            let c = cur.tagged(b'c')?;
            cur.expect(b')')?;
            let v = in_range(v, 1, n, "value")?;
            let r = in_range(r, 1, n, "row")?;
            let c = in_range(c, 1, n, "column")?;
            atoms.push(AtomicAction::Assign { value: v as u8, row: r as u8, col: c as u8 });
        }
        (Dialect::RushHour, "move") => {
            cur.expect(b'(')?;
            cur.ws();
            let vehicle = match cur.peek() {
                Some(c) if c.is_ascii_uppercase() => c as char,
                _ => return Err(unparseable(format!("expected a vehicle id A-Z at byte {}", cur.pos))),
            };
            cur.pos += 1;
            cur.expect(b',')?;
            let direction = match cur.word()? {
                "up" => Direction::Up,
                "down" => Direction::Down,
                "left" => Direction::Left,
                "right" => Direction::Right,
                other => return Err(unparseable(format!("unknown direction {other:?}"))),
            };
            cur.ws();
            let mut distance = 1;
            if cur.peek() == Some(b',') {
                cur.pos += 1;
                distance = in_range(cur.number()?, 1, u64::from(MAX_SLIDE), "distance")?;
            }
            cur.expect(b')')?;
            for _ in 0..distance {
                atoms.push(AtomicAction::Slide { vehicle, direction });
            }
        }
        (Dialect::Chain { branching }, "go") => {
            cur.expect(b'(')?;
            let b = cur.number()?;
            cur.expect(b')')?;
            let b = in_range(b, 0, u64::from(branching) - 1, "branch")?;
            atoms.push(AtomicAction::Branch { index: b as u16 });
        }
        (_, other) => return Err(unparseable(format!("unknown action keyword {other:?}"))),
    }
    Ok(())
}

/// Parses the action field of `text`; never applies anything.
pub fn parse_action(text: &ActionText, dialect: Dialect, mode: MacroMode) -> Result<MacroAction, FormatError> {
    let field = text.action_field();
    let mut cur = Cursor { s: field.as_bytes(), pos: 0 };
    let mut atoms = Vec::new();
    if cur.at_end() {
        return Err(unparseable("empty action"));
    }
    loop {
        parse_item(&mut cur, dialect, &mut atoms)?;
        if cur.at_end() {
            break;
        }
        cur.expect(b';')?;
    }
    if !mode.accepts(atoms.len()) {
        return Err(FormatError::new(
            FormatErrorKind::WrongArity,
            format!("{} atoms not allowed in {mode} mode", atoms.len()),
        ));
    }
    if let Some(cap) = mode.max_atoms().or(Some(dialect.unbounded_atom_cap())) {
        if atoms.len() > cap {
            return Err(FormatError::new(FormatErrorKind::WrongArity, format!("{} atoms exceed cap {cap}", atoms.len())));
        }
    }
    Ok(MacroAction { atoms, bound: mode.bound() })
}
