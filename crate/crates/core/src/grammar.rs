//! Atomic actions, sub-chunks, chunks and their canonical text form.
//!
//! Every dataset record and wire message carries chunks as text such as
//! `"turn left 45 degree, move forward 50 cm"`. One sub-chunk renders to one
//! action-type token followed by one numeric token; `stop` has no magnitude.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum repetitions merged into one sub-chunk.
pub const MAX_SUB_CHUNK_COUNT: u8 = 3;

/// Canonical separator between rendered sub-chunks.
pub const CONNECTOR: &str = ", ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Forward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Stop,
    ];

    /// Text of the action-type token.
    pub fn type_token(self) -> &'static str {
        match self {
            Action::Forward => "move forward",
            Action::TurnLeft => "turn left",
            Action::TurnRight => "turn right",
            Action::Stop => "stop",
        }
    }

    /// Identifier used in trajectory files.
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Stop => "stop",
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical size of one atomic step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionUnits {
    pub forward_cm: u32,
    pub turn_deg: u32,
}

impl Default for ActionUnits {
    fn default() -> Self {
        Self {
            forward_cm: 25,
            turn_deg: 15,
        }
    }
}

impl ActionUnits {
    pub fn new(forward_cm: u32, turn_deg: u32) -> Result<Self, GrammarError> {
        let units = Self {
            forward_cm,
            turn_deg,
        };
        units.validate()?;
        Ok(units)
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        if self.forward_cm == 0 || self.turn_deg == 0 || 360 % self.turn_deg != 0 {
            return Err(GrammarError::InvalidUnits {
                forward_cm: self.forward_cm,
                turn_deg: self.turn_deg,
            });
        }
        Ok(())
    }

    /// Forward step length in meters.
    pub fn forward_m(&self) -> f64 {
        f64::from(self.forward_cm) / 100.0
    }

    pub fn turn(&self) -> f64 {
        f64::from(self.turn_deg)
    }

    /// Magnitude of `count` repetitions of `action`, in the action's unit.
    fn magnitude(&self, action: Action, count: u8) -> Option<(u32, Unit)> {
        match action {
            Action::Forward => Some((u32::from(count) * self.forward_cm, Unit::Centimeter)),
            Action::TurnLeft | Action::TurnRight => {
                Some((u32::from(count) * self.turn_deg, Unit::Degree))
            }
            Action::Stop => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubChunk {
    action: Action,
    count: u8,
}

impl SubChunk {
    pub fn new(action: Action, count: u8) -> Result<Self, GrammarError> {
        let max = if action == Action::Stop {
            1
        } else {
            MAX_SUB_CHUNK_COUNT
        };
        if count == 0 || count > max {
            return Err(GrammarError::CountOutOfRange {
                action,
                count: u32::from(count),
            });
        }
        Ok(Self { action, count })
    }

    pub fn single(action: Action) -> Self {
        Self { action, count: 1 }
    }

    pub fn action(&self) -> Action {
        self.action
    }

    pub fn count(&self) -> u8 {
        self.count
    }

    pub(crate) fn with_action(self, action: Action) -> Self {
        let count = if action == Action::Stop { 1 } else { self.count };
        Self { action, count }
    }

    pub(crate) fn grow(&mut self) {
        debug_assert!(self.count < MAX_SUB_CHUNK_COUNT && self.action != Action::Stop);
        self.count += 1;
    }
}

/// An ordered, non-empty run of sub-chunks. `stop` only ever appears alone.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionChunk {
    sub_chunks: Vec<SubChunk>,
}

impl ActionChunk {
    pub fn new(sub_chunks: Vec<SubChunk>) -> Result<Self, GrammarError> {
        if sub_chunks.is_empty() {
            return Err(GrammarError::EmptyChunk);
        }
        if sub_chunks.len() > 1 && sub_chunks.iter().any(|s| s.action == Action::Stop) {
            return Err(GrammarError::StopNotAlone);
        }
        Ok(Self { sub_chunks })
    }

    pub fn stop() -> Self {
        Self {
            sub_chunks: vec![SubChunk::single(Action::Stop)],
        }
    }

    pub fn sub_chunks(&self) -> &[SubChunk] {
        &self.sub_chunks
    }

    pub fn len(&self) -> usize {
        self.sub_chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_chunks.is_empty()
    }

    pub fn is_stop(&self) -> bool {
        self.sub_chunks[0].action == Action::Stop
    }

    /// Number of atomic actions covered.
    pub fn atomic_len(&self) -> usize {
        self.sub_chunks.iter().map(|s| usize::from(s.count)).sum()
    }

    pub fn atomic_actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.sub_chunks
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.action, usize::from(s.count)))
    }

    pub fn render(&self, units: &ActionUnits) -> ChunkTokenSeq {
        render_chunk(self, units)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Unit {
    Centimeter,
    Degree,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Centimeter => "cm",
            Unit::Degree => "degree",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    ActionType(Action),
    Numeric { value: u32, unit: Unit },
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::ActionType(a) => f.write_str(a.type_token()),
            Token::Numeric { value, unit } => write!(f, "{value} {}", unit.as_str()),
        }
    }
}

/// Token view of a rendered chunk together with its canonical text.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChunkTokenSeq {
    pub tokens: Vec<Token>,
    pub text: String,
}

impl ChunkTokenSeq {
    pub fn action_type_positions(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, Token::ActionType(_)))
            .count()
    }
}

impl fmt::Display for ChunkTokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("malformed action phrase {0:?}")]
    MalformedPhrase(String),
    #[error("magnitude {magnitude} in {phrase:?} is not a multiple of {unit}")]
    NonDivisibleMagnitude {
        phrase: String,
        magnitude: u32,
        unit: u32,
    },
    #[error("{action} repeated {count} times, allowed range is 1..=3")]
    CountOutOfRange { action: Action, count: u32 },
    #[error("a chunk needs at least one sub-chunk")]
    EmptyChunk,
    #[error("stop must form a chunk on its own")]
    StopNotAlone,
    #[error("invalid action units: forward {forward_cm} cm, turn {turn_deg} degree")]
    InvalidUnits { forward_cm: u32, turn_deg: u32 },
}

pub fn render_chunk(chunk: &ActionChunk, units: &ActionUnits) -> ChunkTokenSeq {
    let mut tokens = Vec::with_capacity(chunk.len() * 2);
    let mut phrases = Vec::with_capacity(chunk.len());
    for sub in chunk.sub_chunks() {
        let head = Token::ActionType(sub.action);
        tokens.push(head);
        match units.magnitude(sub.action, sub.count) {
            Some((value, unit)) => {
                let num = Token::Numeric { value, unit };
                tokens.push(num);
                phrases.push(format!("{head} {num}"));
            }
            None => phrases.push(head.to_string()),
        }
    }
    ChunkTokenSeq {
        tokens,
        text: phrases.join(CONNECTOR),
    }
}

/// Parses chunk text. Phrases may be separated by commas, newlines or the
/// word `then`; matching is case-insensitive and whitespace-tolerant.
pub fn parse_chunk(text: &str, units: &ActionUnits) -> Result<ActionChunk, GrammarError> {
    let lowered = text.to_lowercase();
    let mut subs = Vec::new();
    for part in lowered.split([',', '\n', ';']) {
        let mut phrase: Vec<&str> = Vec::new();
        for word in part.split_whitespace() {
            if word == "then" {
                if !phrase.is_empty() {
                    subs.push(parse_phrase(&phrase, units)?);
                    phrase.clear();
                }
            } else {
                phrase.push(word);
            }
        }
        if !phrase.is_empty() {
            subs.push(parse_phrase(&phrase, units)?);
        }
    }
    ActionChunk::new(subs)
}

fn parse_phrase(words: &[&str], units: &ActionUnits) -> Result<SubChunk, GrammarError> {
    let malformed = || GrammarError::MalformedPhrase(words.join(" "));
    let (action, magnitude, unit_word) = match words {
        ["stop"] => return Ok(SubChunk::single(Action::Stop)),
        ["move", "forward", n, u] => (Action::Forward, *n, *u),
        ["turn", "left", n, u] => (Action::TurnLeft, *n, *u),
        ["turn", "right", n, u] => (Action::TurnRight, *n, *u),
        _ => return Err(malformed()),
    };
    let unit_ok = match action {
        Action::Forward => unit_word == "cm",
        _ => unit_word == "degree" || unit_word == "degrees",
    };
    if !unit_ok {
        return Err(malformed());
    }
    let magnitude: u32 = magnitude.parse().map_err(|_| malformed())?;
    let step = match action {
        Action::Forward => units.forward_cm,
        _ => units.turn_deg,
    };
    if !magnitude.is_multiple_of(step) {
        return Err(GrammarError::NonDivisibleMagnitude {
            phrase: words.join(" "),
            magnitude,
            unit: step,
        });
    }
    let count = magnitude / step;
    if count == 0 || count > u32::from(MAX_SUB_CHUNK_COUNT) {
        return Err(GrammarError::CountOutOfRange { action, count });
    }
    SubChunk::new(action, count as u8)
}

/// Atomic actions of `chunks` in execution order.
pub fn flatten<'a, I>(chunks: I) -> Vec<Action>
where
    I: IntoIterator<Item = &'a ActionChunk>,
{
    chunks
        .into_iter()
        .flat_map(|c| c.atomic_actions())
        .collect()
}
