//! Action codes such as `CLICK(132, 243)` or `INPUT('Copenhagen')`.
//!
//! Grammar:
//!
//! ```text
//! code := IDENT [ '(' [ arg { ',' arg } ] ')' ]
//! arg  := INT | STRING | IDENT
//! ```
//!
//! Strings are single-quoted with backslash escapes; whitespace between
//! tokens is ignored. An [`Action`] splits into its positional part (a
//! point or scroll direction) and its non-positional payload (typed text,
//! selected option).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelPoint;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("malformed literal at {pos}")]
    MalformedLiteral { pos: usize },
    #[error("unterminated string starting at {pos}")]
    UnterminatedString { pos: usize },
    #[error("unknown action kind {0}")]
    UnknownKind(String),
    #[error("{kind} takes {expected} argument(s), got {found}")]
    ArityMismatch {
        kind: String,
        expected: usize,
        found: usize,
    },
    #[error("argument {index} of {kind} must be {expected}")]
    ArgumentType {
        kind: String,
        index: usize,
        expected: &'static str,
    },
}

impl ActionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ActionError::Syntax { .. } => "syntax",
            ActionError::MalformedLiteral { .. } => "malformed_literal",
            ActionError::UnterminatedString { .. } => "unterminated_string",
            ActionError::UnknownKind(_) => "unknown_kind",
            ActionError::ArityMismatch { .. } => "arity_mismatch",
            ActionError::ArgumentType { .. } => "argument_type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Int(u64),
    Str(String),
    Ident(String),
}

/// A syntactically valid action code, before schema checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Arg>,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(self.src[start..self.pos].to_string())
    }

    fn literal(&mut self) -> Result<Arg, ActionError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
                if self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(ActionError::MalformedLiteral { pos: start });
                }
                self.src[start..self.pos]
                    .parse()
                    .map(Arg::Int)
                    .map_err(|_| ActionError::MalformedLiteral { pos: start })
            }
            Some('\'') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(ActionError::UnterminatedString { pos: start }),
                        Some('\\') => match self.bump() {
                            Some(c) => s.push(c),
                            None => return Err(ActionError::UnterminatedString { pos: start }),
                        },
                        Some('\'') => return Ok(Arg::Str(s)),
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Ok(Arg::Ident(self.ident().unwrap_or_default())),
            _ => Err(ActionError::MalformedLiteral { pos: start }),
        }
    }
}

/// Parses the grammar only; kinds and arities are not checked.
pub fn parse_call(code: &str) -> Result<Call, ActionError> {
    let mut lx = Lexer { src: code, pos: 0 };
    lx.skip_ws();
    let name = lx.ident().ok_or_else(|| ActionError::Syntax {
        pos: lx.pos,
        message: "expected action name".into(),
    })?;
    lx.skip_ws();
    let mut args = Vec::new();
    if lx.peek() == Some('(') {
        lx.bump();
        lx.skip_ws();
        if lx.peek() == Some(')') {
            lx.bump();
        } else {
            loop {
                lx.skip_ws();
                args.push(lx.literal()?);
                lx.skip_ws();
                match lx.bump() {
                    Some(',') => continue,
                    Some(')') => break,
                    Some(c) => {
                        return Err(ActionError::Syntax {
                            pos: lx.pos - c.len_utf8(),
                            message: format!("expected ',' or ')', found {c:?}"),
                        })
                    }
                    None => {
                        return Err(ActionError::Syntax {
                            pos: lx.pos,
                            message: "unclosed argument list".into(),
                        })
                    }
                }
            }
        }
        lx.skip_ws();
    }
    if lx.pos < code.len() {
        return Err(ActionError::Syntax {
            pos: lx.pos,
            message: "trailing input".into(),
        });
    }
    Ok(Call { name, args })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScrollAxis {
    Vertical,
    Horizontal,
}

impl ScrollDirection {
    pub const ALL: [ScrollDirection; 4] = [
        ScrollDirection::Up,
        ScrollDirection::Down,
        ScrollDirection::Left,
        ScrollDirection::Right,
    ];

    pub fn axis(self) -> ScrollAxis {
        match self {
            ScrollDirection::Up | ScrollDirection::Down => ScrollAxis::Vertical,
            ScrollDirection::Left | ScrollDirection::Right => ScrollAxis::Horizontal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
            ScrollDirection::Left => "left",
            ScrollDirection::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

/// Where an action happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionPos {
    Point(PixelPoint),
    Scroll(ScrollDirection),
}

/// A parsed action: kind plus positional and non-positional parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Action {
    pub kind: String,
    pub pos: Option<ActionPos>,
    pub attr: Option<String>,
}

impl Action {
    pub fn click(x: u32, y: u32) -> Self {
        Self::point("CLICK", x, y)
    }

    pub fn point(kind: &str, x: u32, y: u32) -> Self {
        Self {
            kind: kind.to_ascii_uppercase(),
            pos: Some(ActionPos::Point(PixelPoint::new(x, y))),
            attr: None,
        }
    }

    pub fn text(kind: &str, text: impl Into<String>) -> Self {
        Self {
            kind: kind.to_ascii_uppercase(),
            pos: None,
            attr: Some(text.into()),
        }
    }

    pub fn scroll(dir: ScrollDirection) -> Self {
        Self {
            kind: "SCROLL".into(),
            pos: Some(ActionPos::Scroll(dir)),
            attr: None,
        }
    }

    pub fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_ascii_uppercase(),
            pos: None,
            attr: None,
        }
    }

    pub fn point_pos(&self) -> Option<PixelPoint> {
        match self.pos {
            Some(ActionPos::Point(p)) => Some(p),
            _ => None,
        }
    }

    pub fn scroll_dir(&self) -> Option<ScrollDirection> {
        match self.pos {
            Some(ActionPos::Scroll(d)) => Some(d),
            _ => None,
        }
    }

    /// Canonical code: upper-case kind, `", "` between arguments,
    /// single-quoted strings.
    pub fn to_code(&self) -> String {
        let mut args = Vec::new();
        match self.pos {
            Some(ActionPos::Point(p)) => {
                args.push(p.x.to_string());
                args.push(p.y.to_string());
            }
            Some(ActionPos::Scroll(d)) => args.push(d.as_str().to_string()),
            None => {}
        }
        if let Some(a) = &self.attr {
            args.push(quote(a));
        }
        if args.is_empty() {
            self.kind.to_ascii_uppercase()
        } else {
            format!("{}({})", self.kind.to_ascii_uppercase(), args.join(", "))
        }
    }

    /// Shape inference without a schema: two integers are a point, a
    /// direction word is a scroll, a string is the payload.
    fn infer(call: Call) -> Result<Self, ActionError> {
        let kind = call.name.to_ascii_uppercase();
        let mut pos = None;
        let mut attr = None;
        let mut ints = Vec::new();
        for (i, arg) in call.args.into_iter().enumerate() {
            match arg {
                Arg::Int(v) => ints.push(u32::try_from(v).map_err(|_| ActionError::MalformedLiteral { pos: i })?),
                Arg::Str(s) if attr.is_none() => attr = Some(s),
                Arg::Ident(s) if pos.is_none() && ScrollDirection::parse(&s).is_some() => {
                    pos = ScrollDirection::parse(&s).map(ActionPos::Scroll)
                }
                _ => {
                    return Err(ActionError::ArgumentType {
                        kind,
                        index: i,
                        expected: "integer, string or direction",
                    })
                }
            }
        }
        match ints.as_slice() {
            [] => {}
            [x, y] if pos.is_none() => pos = Some(ActionPos::Point(PixelPoint::new(*x, *y))),
            _ => {
                return Err(ActionError::ArgumentType {
                    kind,
                    index: 0,
                    expected: "a pair of coordinates",
                })
            }
        }
        Ok(Self { kind, pos, attr })
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_code())
    }
}

impl FromStr for Action {
    type Err = ActionError;

    /// Schema-free parse; use [`parse_action`] to check against a space.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::infer(parse_call(s)?)
    }
}

impl TryFrom<String> for Action {
    type Error = ActionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> Self {
        a.to_code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgSchema {
    None,
    Point,
    Text,
    Direction,
}

impl ArgSchema {
    pub fn arity(self) -> usize {
        match self {
            ArgSchema::None => 0,
            ArgSchema::Point => 2,
            ArgSchema::Text | ArgSchema::Direction => 1,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => ArgSchema::None,
            "point" => ArgSchema::Point,
            "text" => ArgSchema::Text,
            "direction" => ArgSchema::Direction,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KindSpec {
    pub name: String,
    pub schema: ArgSchema,
    /// Human-readable form shown in prompts, e.g. `CLICK(x, y)`.
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    pub name: String,
    pub kinds: Vec<KindSpec>,
    pub aliases: BTreeMap<String, String>,
}

impl ActionSpace {
    pub fn kind(&self, name: &str) -> Option<&KindSpec> {
        let upper = name.to_ascii_uppercase();
        let resolved = self.aliases.get(&upper).unwrap_or(&upper);
        self.kinds.iter().find(|k| &k.name == resolved)
    }

    fn bind(&self, call: Call) -> Result<Action, ActionError> {
        let spec = self
            .kind(&call.name)
            .ok_or_else(|| ActionError::UnknownKind(call.name.clone()))?;
        if call.args.len() != spec.schema.arity() {
            return Err(ActionError::ArityMismatch {
                kind: spec.name.clone(),
                expected: spec.schema.arity(),
                found: call.args.len(),
            });
        }
        let kind = spec.name.clone();
        let type_err = |index, expected| ActionError::ArgumentType {
            kind: kind.clone(),
            index,
            expected,
        };
        let mut action = Action::bare(&spec.name);
        match spec.schema {
            ArgSchema::None => {}
            ArgSchema::Point => {
                let coord = |i: usize| match &call.args[i] {
                    Arg::Int(v) => u32::try_from(*v).map_err(|_| type_err(i, "a pixel coordinate")),
                    _ => Err(type_err(i, "an integer")),
                };
                action.pos = Some(ActionPos::Point(PixelPoint::new(coord(0)?, coord(1)?)));
            }
            ArgSchema::Text => match &call.args[0] {
                Arg::Str(s) => action.attr = Some(s.clone()),
                _ => return Err(type_err(0, "a quoted string")),
            },
            ArgSchema::Direction => {
                let dir = match &call.args[0] {
                    Arg::Ident(s) | Arg::Str(s) => ScrollDirection::parse(s),
                    Arg::Int(_) => None,
                };
                action.pos = Some(ActionPos::Scroll(
                    dir.ok_or_else(|| type_err(0, "up, down, left or right"))?,
                ));
            }
        }
        Ok(action)
    }

    /// True when `a` has a kind in this space and the shape its schema
    /// requires.
    pub fn accepts(&self, a: &Action) -> bool {
        let Some(spec) = self.kind(&a.kind) else { return false };
        if spec.name != a.kind.to_ascii_uppercase() {
            return false;
        }
        match spec.schema {
            ArgSchema::None => a.pos.is_none() && a.attr.is_none(),
            ArgSchema::Point => matches!(a.pos, Some(ActionPos::Point(_))) && a.attr.is_none(),
            ArgSchema::Text => a.pos.is_none() && a.attr.is_some(),
            ArgSchema::Direction => matches!(a.pos, Some(ActionPos::Scroll(_))) && a.attr.is_none(),
        }
    }

    /// Action space text for prompts, one pattern per line. With
    /// `block_local`, point arguments are shown as `(block, x, y)`.
    pub fn describe(&self, block_local: bool) -> String {
        self.kinds
            .iter()
            .map(|k| {
                if block_local && k.schema == ArgSchema::Point {
                    format!("{}(block, x, y)", k.name)
                } else {
                    k.pattern.clone()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Parses `code` and checks it against `space`.
pub fn parse_action(code: &str, space: &ActionSpace) -> Result<Action, ActionError> {
    space.bind(parse_call(code)?)
}

/// Canonical code for `a`, which must belong to `space`.
pub fn serialize_action(a: &Action, space: &ActionSpace) -> Result<String, ActionError> {
    if space.kind(&a.kind).is_none() {
        return Err(ActionError::UnknownKind(a.kind.clone()));
    }
    if !space.accepts(a) {
        let spec = space.kind(&a.kind).expect("checked above");
        return Err(ActionError::ArgumentType {
            kind: a.kind.clone(),
            index: 0,
            expected: match spec.schema {
                ArgSchema::None => "no arguments",
                ArgSchema::Point => "a point",
                ArgSchema::Text => "a string",
                ArgSchema::Direction => "a direction",
            },
        });
    }
    Ok(a.to_code())
}

#[derive(Debug, Error)]
pub enum SpaceFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Named action spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRegistry {
    spaces: Vec<ActionSpace>,
}

impl ActionRegistry {
    pub fn get(&self, name: &str) -> Option<&ActionSpace> {
        self.spaces.iter().find(|s| s.name == name)
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn load(path: &Path) -> Result<Self, SpaceFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses the definition-file format (see `assets/action_spaces.txt`).
    pub fn parse(text: &str) -> Result<Self, SpaceFileError> {
        let mut spaces: Vec<ActionSpace> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| SpaceFileError::Parse { line: i + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match head {
                "space" => {
                    if rest.is_empty() || spaces.iter().any(|s| s.name == rest) {
                        return Err(err(format!("missing or duplicate space name {rest:?}")));
                    }
                    spaces.push(ActionSpace {
                        name: rest.to_string(),
                        kinds: Vec::new(),
                        aliases: BTreeMap::new(),
                    });
                }
                "kind" | "alias" => {
                    let space = spaces
                        .last_mut()
                        .ok_or_else(|| err(format!("{head} before any space")))?;
                    let mut parts = rest.splitn(3, char::is_whitespace);
                    let name = parts.next().unwrap_or("").to_ascii_uppercase();
                    let second = parts.next().unwrap_or("").trim();
                    if head == "alias" {
                        if name.is_empty() || second.is_empty() {
                            return Err(err("alias needs FROM and TO".into()));
                        }
                        space.aliases.insert(name, second.to_ascii_uppercase());
                        continue;
                    }
                    let schema = ArgSchema::parse(second).ok_or_else(|| err(format!("unknown schema {second:?}")))?;
                    let pattern = parts.next().unwrap_or("").trim().to_string();
                    let call = parse_call(&pattern).map_err(|e| err(format!("pattern {pattern:?}: {e}")))?;
                    if call.name.to_ascii_uppercase() != name || call.args.len() != schema.arity() {
                        return Err(err(format!("pattern {pattern:?} does not match {name} {second}")));
                    }
                    if space.kinds.iter().any(|k| k.name == name) {
                        return Err(err(format!("duplicate kind {name}")));
                    }
                    space.kinds.push(KindSpec { name, schema, pattern });
                }
                other => return Err(err(format!("unknown directive {other:?}"))),
            }
        }
        for space in &spaces {
            for (from, to) in &space.aliases {
                if !space.kinds.iter().any(|k| &k.name == to) {
                    return Err(SpaceFileError::Parse {
                        line: 0,
                        message: format!("alias {from} -> {to}: no such kind in {}", space.name),
                    });
                }
            }
        }
        Ok(Self { spaces })
    }
}

/// The builtin `web` and `mobile` spaces.
pub fn default_spaces() -> ActionRegistry {
    ActionRegistry::parse(include_str!("../assets/action_spaces.txt")).expect("builtin action spaces are valid")
}
