//! Pushdown automaton for the token-level JSON grammar.
//!
//! The automaton only enforces the key/value/delimiter alternation and
//! balanced nesting. Which keys and values are legal at a given path is the
//! schema's job. Each state falls into one of a handful of [`Slot`]s, and each
//! slot maps to a fixed mask, so [`GrammarMasks`] precomputes them once per
//! vocabulary.

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::tokenizer::{
    TokenId, TokenStream, Vocab, ARR_END, ARR_START, END, NUM, OBJ_END, OBJ_START, PAD, START,
};

/// Maximum number of nested objects/arrays below the record root.
pub const MAX_DEPTH: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("token {token} not allowed in state {state}{}", .position.map(|p| format!(" at position {p}")).unwrap_or_default())]
pub struct TransitionError {
    pub state: String,
    pub token: TokenId,
    pub position: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Frame {
    Root,
    Object,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Phase {
    BeforeStart,
    Open,
    Done,
}

/// Grammatical position of the next token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Only `START`.
    Start,
    /// Key of the root object, or `END`.
    RootKey,
    /// Key of a nested object, or `OBJ_END`.
    ObjectKey,
    /// Value after a key. `nest` is false at the depth limit.
    Value { nest: bool },
    /// Array element or `ARR_END`.
    Element { nest: bool },
    /// Past `END`; only `PAD` is enabled.
    Done,
}

impl Slot {
    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        match self {
            Slot::Start => 0,
            Slot::RootKey => 1,
            Slot::ObjectKey => 2,
            Slot::Value { nest: true } => 3,
            Slot::Value { nest: false } => 4,
            Slot::Element { nest: true } => 5,
            Slot::Element { nest: false } => 6,
            Slot::Done => 7,
        }
    }

    pub const ALL: [Slot; 8] = [
        Slot::Start,
        Slot::RootKey,
        Slot::ObjectKey,
        Slot::Value { nest: true },
        Slot::Value { nest: false },
        Slot::Element { nest: true },
        Slot::Element { nest: false },
        Slot::Done,
    ];

    /// The boolean mask of grammatically valid next tokens.
    pub fn mask(self, vocab: &Vocab) -> FixedBitSet {
        let mut m = FixedBitSet::with_capacity(vocab.size());
        let value_start = |m: &mut FixedBitSet, nest: bool| {
            m.set_range(vocab.value_range(), true);
            m.insert(NUM as usize);
            if nest {
                m.insert(OBJ_START as usize);
                m.insert(ARR_START as usize);
            }
        };
        match self {
            Slot::Start => m.insert(START as usize),
            Slot::RootKey => {
                m.set_range(vocab.key_range(), true);
                m.insert(END as usize);
            }
            Slot::ObjectKey => {
                m.set_range(vocab.key_range(), true);
                m.insert(OBJ_END as usize);
            }
            Slot::Value { nest } => value_start(&mut m, nest),
            Slot::Element { nest } => {
                value_start(&mut m, nest);
                m.insert(ARR_END as usize);
            }
            Slot::Done => m.insert(PAD as usize),
        }
        m
    }
}

/// Stack of open containers plus the key/value flag. The root object is the
/// bottom frame while the record is open.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PdaState {
    stack: Vec<Frame>,
    awaiting_value: bool,
    phase: Phase,
}

impl Default for PdaState {
    fn default() -> Self {
        Self::new()
    }
}

impl PdaState {
    /// Initial state: only `START` is valid.
    pub fn new() -> Self {
        Self {
            stack: Vec::with_capacity(8),
            awaiting_value: false,
            phase: Phase::BeforeStart,
        }
    }

    /// Number of open frames, including the root object.
    pub fn stack_depth(&self) -> usize {
        self.stack.len()
    }

    /// Number of open nested containers below the root.
    pub fn nesting(&self) -> usize {
        self.stack.len().saturating_sub(1)
    }

    pub fn top(&self) -> Option<Frame> {
        self.stack.last().copied()
    }

    pub fn awaiting_value(&self) -> bool {
        self.awaiting_value
    }

    pub fn at_record_start(&self) -> bool {
        self.phase == Phase::BeforeStart
    }

    pub fn at_record_end(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn expecting_key(&self) -> bool {
        self.phase == Phase::Open
            && !self.awaiting_value
            && matches!(self.top(), Some(Frame::Object | Frame::Root))
    }

    pub fn slot(&self) -> Slot {
        let nest = self.nesting() < MAX_DEPTH;
        match self.phase {
            Phase::BeforeStart => Slot::Start,
            Phase::Done => Slot::Done,
            Phase::Open if self.awaiting_value => Slot::Value { nest },
            Phase::Open => match self.top() {
                Some(Frame::Root) => Slot::RootKey,
                Some(Frame::Object) => Slot::ObjectKey,
                Some(Frame::Array) => Slot::Element { nest },
                None => unreachable!("open record always has a root frame"),
            },
        }
    }

    pub fn valid_next(&self, vocab: &Vocab) -> FixedBitSet {
        self.slot().mask(vocab)
    }

    fn reject(&self, token: TokenId) -> TransitionError {
        TransitionError {
            state: self.summary(),
            token,
            position: None,
        }
    }

    pub fn summary(&self) -> String {
        let frames: Vec<&str> = self
            .stack
            .iter()
            .map(|f| match f {
                Frame::Root => "root",
                Frame::Object => "object",
                Frame::Array => "array",
            })
            .collect();
        format!("{:?} [{}]", self.slot(), frames.join(","))
    }

    /// Consumes one token. Amortized O(1): at most one push or pop.
    pub fn advance(&mut self, token: TokenId, vocab: &Vocab) -> Result<(), TransitionError> {
        let slot = self.slot();
        let is_value = vocab.is_value(token) || token == NUM;
        match (slot, token) {
            (Slot::Start, START) => {
                self.phase = Phase::Open;
                self.stack.push(Frame::Root);
            }
            (Slot::RootKey, END) => {
                self.stack.pop();
                self.phase = Phase::Done;
            }
            (Slot::RootKey | Slot::ObjectKey, t) if vocab.is_key(t) => self.awaiting_value = true,
            (Slot::ObjectKey, OBJ_END) => {
                self.stack.pop();
                self.close_value();
            }
            (Slot::Element { .. }, ARR_END) => {
                self.stack.pop();
                self.close_value();
            }
            (Slot::Value { nest } | Slot::Element { nest }, t) => {
                if is_value {
                    self.close_value();
                } else if t == OBJ_START && nest {
                    self.awaiting_value = false;
                    self.stack.push(Frame::Object);
                } else if t == ARR_START && nest {
                    self.awaiting_value = false;
                    self.stack.push(Frame::Array);
                } else {
                    return Err(self.reject(t));
                }
            }
            (_, t) => return Err(self.reject(t)),
        }
        Ok(())
    }

    /// A value finished; if it sat in an object, the next slot is a key.
    fn close_value(&mut self) {
        self.awaiting_value = false;
    }

    pub fn advanced(&self, token: TokenId, vocab: &Vocab) -> Result<Self, TransitionError> {
        let mut next = self.clone();
        next.advance(token, vocab)?;
        Ok(next)
    }
}

/// The per-slot masks of one vocabulary.
#[derive(Clone, Debug)]
pub struct GrammarMasks {
    masks: Vec<FixedBitSet>,
}

impl GrammarMasks {
    pub fn new(vocab: &Vocab) -> Self {
        Self {
            masks: Slot::ALL.iter().map(|s| s.mask(vocab)).collect(),
        }
    }

    pub fn get(&self, slot: Slot) -> &FixedBitSet {
        &self.masks[slot.index()]
    }
}

/// Grammar slot after each prefix `tokens[0..=t]`: `slots[t]` governs which
/// tokens may appear at `t + 1`. Fails at the first invalid transition.
pub fn slots_for_sequence(
    stream: &TokenStream,
    vocab: &Vocab,
) -> Result<Vec<Slot>, TransitionError> {
    let mut state = PdaState::new();
    let mut out = Vec::with_capacity(stream.len());
    for (pos, &tok) in stream.tokens.iter().enumerate() {
        state.advance(tok, vocab).map_err(|mut e| {
            e.position = Some(pos);
            e
        })?;
        out.push(state.slot());
    }
    Ok(out)
}

/// `mask[t] = valid_next(state after tokens[0..=t])`.
pub fn masks_for_sequence(
    stream: &TokenStream,
    vocab: &Vocab,
) -> Result<Vec<FixedBitSet>, TransitionError> {
    let table = GrammarMasks::new(vocab);
    Ok(slots_for_sequence(stream, vocab)?
        .into_iter()
        .map(|s| table.get(s).clone())
        .collect())
}
