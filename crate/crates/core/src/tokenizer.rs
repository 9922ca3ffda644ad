//! JSON record tokenization.
//!
//! A record is serialized depth first into structural, key and value tokens.
//! The top-level object is delimited by `START`/`END`; nested objects and
//! arrays use their own delimiter pairs. High-cardinality numeric keys are
//! standardized per key path and emit `NUM` with the scaled value carried in a
//! parallel continuous channel.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::path::{KeyPath, PathElement, PathSeg, SchemaPath};
use crate::value::{number_to_json, NumberBits, Primitive};

pub type TokenId = u32;

pub const DEFAULT_TAU: usize = 64;
pub const DEFAULT_MAX_ARRAY_LEN: usize = 256;
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("cardinality threshold must be at least 1")]
    InvalidThreshold,
    #[error("non-finite number at {path}")]
    NonFinite { path: String },
    #[error("record must be a JSON object, found {found}")]
    NotAnObject { found: String },
    #[error("vocabulary miss: {}", .unknown.join(", "))]
    VocabularyMiss { unknown: Vec<String> },
    #[error("array at {path} has {len} elements, capacity is {max}")]
    ArrayTooLong {
        path: String,
        len: usize,
        max: usize,
    },
    #[error("malformed token stream at position {position}: {reason}")]
    Structure { position: usize, reason: String },
    #[error("unsupported artifact version {0}")]
    Version(u32),
    #[error("invalid artifact: {0}")]
    Artifact(String),
}

/// The fixed structural token set. Discriminants are the token ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Structural {
    Pad = 0,
    Start = 1,
    End = 2,
    ObjStart = 3,
    ObjEnd = 4,
    ArrStart = 5,
    ArrEnd = 6,
    Num = 7,
}

impl Structural {
    pub const ALL: [Structural; 8] = [
        Structural::Pad,
        Structural::Start,
        Structural::End,
        Structural::ObjStart,
        Structural::ObjEnd,
        Structural::ArrStart,
        Structural::ArrEnd,
        Structural::Num,
    ];
    pub const COUNT: usize = 8;

    pub const fn id(self) -> TokenId {
        self as TokenId
    }

    pub fn name(self) -> &'static str {
        match self {
            Structural::Pad => "PAD",
            Structural::Start => "START",
            Structural::End => "END",
            Structural::ObjStart => "OBJ_START",
            Structural::ObjEnd => "OBJ_END",
            Structural::ArrStart => "ARR_START",
            Structural::ArrEnd => "ARR_END",
            Structural::Num => "NUM",
        }
    }
}

pub const PAD: TokenId = Structural::Pad.id();
pub const START: TokenId = Structural::Start.id();
pub const END: TokenId = Structural::End.id();
pub const OBJ_START: TokenId = Structural::ObjStart.id();
pub const OBJ_END: TokenId = Structural::ObjEnd.id();
pub const ARR_START: TokenId = Structural::ArrStart.id();
pub const ARR_END: TokenId = Structural::ArrEnd.id();
pub const NUM: TokenId = Structural::Num.id();

/// What a token id stands for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Token<'a> {
    Structural(Structural),
    Key(&'a str),
    Value(&'a Primitive),
}

/// Three-class vocabulary: structural ids `0..8`, then keys, then values, each
/// block in first-occurrence order.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    keys: Vec<String>,
    key_ids: HashMap<String, TokenId>,
    values: Vec<Primitive>,
    value_ids: HashMap<Primitive, TokenId>,
}

impl Vocab {
    fn from_parts(keys: Vec<String>, values: Vec<Primitive>) -> Result<Self, TokenizerError> {
        let base = Structural::COUNT as TokenId;
        let mut key_ids = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if key_ids.insert(k.clone(), base + i as TokenId).is_some() {
                return Err(TokenizerError::Artifact(format!(
                    "duplicate key token {k:?}"
                )));
            }
        }
        let vbase = base + keys.len() as TokenId;
        let mut value_ids = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if value_ids.insert(v.clone(), vbase + i as TokenId).is_some() {
                return Err(TokenizerError::Artifact(format!(
                    "duplicate value token {v}"
                )));
            }
        }
        Ok(Self {
            keys,
            key_ids,
            values,
            value_ids,
        })
    }

    /// `|V| = |Vs| + |Vk| + |Vv|`.
    pub fn size(&self) -> usize {
        Structural::COUNT + self.keys.len() + self.values.len()
    }

    pub fn num_keys(&self) -> usize {
        self.keys.len()
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    pub fn key_range(&self) -> std::ops::Range<usize> {
        Structural::COUNT..Structural::COUNT + self.keys.len()
    }

    pub fn value_range(&self) -> std::ops::Range<usize> {
        let start = Structural::COUNT + self.keys.len();
        start..start + self.values.len()
    }

    pub fn key_id(&self, key: &str) -> Option<TokenId> {
        self.key_ids.get(key).copied()
    }

    pub fn value_id(&self, value: &Primitive) -> Option<TokenId> {
        self.value_ids.get(value).copied()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn values(&self) -> &[Primitive] {
        &self.values
    }

    pub fn token(&self, id: TokenId) -> Option<Token<'_>> {
        let i = id as usize;
        if i < Structural::COUNT {
            Some(Token::Structural(Structural::ALL[i]))
        } else if self.key_range().contains(&i) {
            Some(Token::Key(&self.keys[i - Structural::COUNT]))
        } else if self.value_range().contains(&i) {
            Some(Token::Value(&self.values[i - self.value_range().start]))
        } else {
            None
        }
    }

    pub fn is_key(&self, id: TokenId) -> bool {
        self.key_range().contains(&(id as usize))
    }

    pub fn is_value(&self, id: TokenId) -> bool {
        self.value_range().contains(&(id as usize))
    }

    pub fn key_name(&self, id: TokenId) -> Option<&str> {
        match self.token(id) {
            Some(Token::Key(k)) => Some(k),
            _ => None,
        }
    }

    pub fn describe(&self, id: TokenId) -> String {
        match self.token(id) {
            Some(Token::Structural(s)) => s.name().to_string(),
            Some(Token::Key(k)) => format!("Key({k})"),
            Some(Token::Value(v)) => format!("Val({v})"),
            None => format!("<invalid {id}>"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabArtifact {
    version: u32,
    structural: Vec<Structural>,
    keys: Vec<String>,
    values: Vec<Value>,
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabArtifact {
            version: ARTIFACT_VERSION,
            structural: Structural::ALL.to_vec(),
            keys: self.keys.clone(),
            values: self.values.iter().map(Primitive::to_json).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let a = VocabArtifact::deserialize(d)?;
        if a.version != ARTIFACT_VERSION {
            return Err(D::Error::custom(TokenizerError::Version(a.version)));
        }
        if a.structural != Structural::ALL {
            return Err(D::Error::custom("structural token order mismatch"));
        }
        let values = a
            .values
            .iter()
            .map(|v| {
                Primitive::from_json(v).ok_or_else(|| D::Error::custom("non-primitive value token"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Vocab::from_parts(a.keys, values).map_err(D::Error::custom)
    }
}

/// Per-key-path standardization `x~ = (x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub path: SchemaPath,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub distinct: usize,
}

impl Scaler {
    pub fn scale(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scalers {
    by_path: HashMap<SchemaPath, Scaler>,
}

impl Scalers {
    /// Fits one scaler per path whose numeric values have more than `tau`
    /// distinct values. Constant columns get `std = 1`.
    pub fn fit(corpus: &[Value], tau: usize) -> Result<Self, TokenizerError> {
        if tau < 1 {
            return Err(TokenizerError::InvalidThreshold);
        }
        let stats = NumericStats::collect(corpus)?;
        let mut by_path = HashMap::new();
        for (path, s) in stats.paths {
            if s.distinct.len() <= tau {
                continue;
            }
            let n = s.values.len() as f64;
            let mean = s.values.iter().sum::<f64>() / n;
            let var = s
                .values
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / n;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            let min = s.values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            by_path.insert(
                path.clone(),
                Scaler {
                    path,
                    mean,
                    std,
                    min,
                    max,
                    distinct: s.distinct.len(),
                },
            );
        }
        Ok(Self { by_path })
    }

    pub fn get(&self, path: &[PathSeg]) -> Option<&Scaler> {
        self.by_path.get(path)
    }

    pub fn len(&self) -> usize {
        self.by_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_path.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scaler> {
        self.by_path.values()
    }

    /// Scalers sorted by path, for stable serialization.
    pub fn sorted(&self) -> Vec<&Scaler> {
        let mut v: Vec<&Scaler> = self.by_path.values().collect();
        v.sort_by(|a, b| a.path.cmp(&b.path));
        v
    }

    pub fn from_list(list: Vec<Scaler>) -> Self {
        Self {
            by_path: list.into_iter().map(|s| (s.path.clone(), s)).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ScalersArtifact {
    version: u32,
    scalers: Vec<Scaler>,
}

impl Serialize for Scalers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ScalersArtifact {
            version: ARTIFACT_VERSION,
            scalers: self.sorted().into_iter().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Scalers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let a = ScalersArtifact::deserialize(d)?;
        if a.version != ARTIFACT_VERSION {
            return Err(D::Error::custom(TokenizerError::Version(a.version)));
        }
        if a.scalers.iter().any(|s| !(s.std > 0.0)) {
            return Err(D::Error::custom("scaler std must be positive"));
        }
        Ok(Scalers::from_list(a.scalers))
    }
}

#[derive(Default)]
struct PathNumbers {
    values: Vec<f64>,
    distinct: HashSet<NumberBits>,
}

/// Numeric values per wildcarded path, in first-occurrence path order.
struct NumericStats {
    paths: Vec<(SchemaPath, PathNumbers)>,
}

impl NumericStats {
    fn collect(corpus: &[Value]) -> Result<Self, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut index: HashMap<SchemaPath, usize> = HashMap::new();
        let mut paths: Vec<(SchemaPath, PathNumbers)> = Vec::new();
        let mut stack = Vec::new();
        for record in corpus {
            if !record.is_object() {
                return Err(not_an_object(record));
            }
            walk_numbers(record, &mut stack, &mut |path, x| {
                if !x.is_finite() {
                    return Err(TokenizerError::NonFinite {
                        path: SchemaPath(path.to_vec()).to_string(),
                    });
                }
                let i = match index.get(path) {
                    Some(i) => *i,
                    None => {
                        let p = SchemaPath(path.to_vec());
                        index.insert(p.clone(), paths.len());
                        paths.push((p, PathNumbers::default()));
                        paths.len() - 1
                    }
                };
                let entry = &mut paths[i].1;
                entry.values.push(x);
                entry.distinct.insert(NumberBits::new(x));
                Ok(())
            })?;
        }
        Ok(Self { paths })
    }
}

fn walk_numbers(
    v: &Value,
    path: &mut Vec<PathSeg>,
    f: &mut dyn FnMut(&[PathSeg], f64) -> Result<(), TokenizerError>,
) -> Result<(), TokenizerError> {
    match v {
        Value::Number(n) => f(path, n.as_f64().unwrap_or(f64::NAN)),
        Value::Object(m) => {
            for (k, c) in m {
                path.push(PathSeg::Key(k.clone()));
                walk_numbers(c, path, f)?;
                path.pop();
            }
            Ok(())
        }
        Value::Array(items) => {
            path.push(PathSeg::Item);
            for c in items {
                walk_numbers(c, path, f)?;
            }
            path.pop();
            Ok(())
        }
        _ => Ok(()),
    }
}

fn not_an_object(v: &Value) -> TokenizerError {
    let found = match v {
        Value::Array(_) => "array",
        Value::String(_) => "string",
        Value::Number(_) => "number",
        Value::Bool(_) => "boolean",
        Value::Null => "null",
        Value::Object(_) => "object",
    };
    TokenizerError::NotAnObject {
        found: found.to_string(),
    }
}

/// A record as discrete tokens, per-token key paths and the continuous channel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenStream {
    pub tokens: Vec<TokenId>,
    pub paths: Vec<KeyPath>,
    pub continuous: Vec<Option<f64>>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, token: TokenId, path: KeyPath, value: Option<f64>) {
        self.tokens.push(token);
        self.paths.push(path);
        self.continuous.push(value);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Numeric keys with more than `tau` distinct values are standardized.
    pub tau: usize,
    /// Array-position embedding capacity.
    pub max_array_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            max_array_len: DEFAULT_MAX_ARRAY_LEN,
        }
    }
}

/// Builds the vocabulary: every key name, and every categorical primitive.
/// Numbers under paths whose numeric values exceed `tau` distinct values get no
/// value token; they travel through `NUM`.
pub fn build_vocab(corpus: &[Value], tau: usize) -> Result<Vocab, TokenizerError> {
    if tau < 1 {
        return Err(TokenizerError::InvalidThreshold);
    }
    let stats = NumericStats::collect(corpus)?;
    let continuous: HashSet<SchemaPath> = stats
        .paths
        .into_iter()
        .filter(|(_, s)| s.distinct.len() > tau)
        .map(|(p, _)| p)
        .collect();

    let mut keys = Vec::new();
    let mut seen_keys = HashSet::new();
    let mut values = Vec::new();
    let mut seen_values = HashSet::new();
    let mut path = Vec::new();
    for record in corpus {
        collect_tokens(
            record,
            &mut path,
            &continuous,
            &mut |k| {
                if seen_keys.insert(k.to_string()) {
                    keys.push(k.to_string());
                }
            },
            &mut |p| {
                if seen_values.insert(p.clone()) {
                    values.push(p);
                }
            },
        );
    }
    Vocab::from_parts(keys, values)
}

fn collect_tokens(
    v: &Value,
    path: &mut Vec<PathSeg>,
    continuous: &HashSet<SchemaPath>,
    on_key: &mut dyn FnMut(&str),
    on_value: &mut dyn FnMut(Primitive),
) {
    match v {
        Value::Object(m) => {
            for (k, c) in m {
                on_key(k);
                path.push(PathSeg::Key(k.clone()));
                collect_tokens(c, path, continuous, on_key, on_value);
                path.pop();
            }
        }
        Value::Array(items) => {
            path.push(PathSeg::Item);
            for c in items {
                collect_tokens(c, path, continuous, on_key, on_value);
            }
            path.pop();
        }
        Value::Number(_) if continuous.contains(path.as_slice()) => {}
        other => {
            if let Some(p) = Primitive::from_json(other) {
                on_value(p);
            }
        }
    }
}

/// Vocabulary plus numeric scalers: everything needed to move between JSON
/// records and token streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Tokenizer {
    pub config: TokenizerConfig,
    pub vocab: Vocab,
    pub scalers: Scalers,
}

impl Tokenizer {
    pub fn fit(corpus: &[Value], config: TokenizerConfig) -> Result<Self, TokenizerError> {
        let vocab = build_vocab(corpus, config.tau)?;
        let scalers = Scalers::fit(corpus, config.tau)?;
        Ok(Self {
            config,
            vocab,
            scalers,
        })
    }

    pub fn new(config: TokenizerConfig, vocab: Vocab, scalers: Scalers) -> Self {
        Self {
            config,
            vocab,
            scalers,
        }
    }

    /// Depth-first serialization of one record.
    pub fn encode(&self, record: &Value) -> Result<TokenStream, TokenizerError> {
        let obj = record.as_object().ok_or_else(|| not_an_object(record))?;
        let mut enc = Encoder {
            tok: self,
            out: TokenStream::default(),
            unknown: Vec::new(),
            wild: Vec::new(),
        };
        let root = KeyPath::root();
        enc.out.push(START, root.clone(), None);
        enc.object_body(obj, &root)?;
        enc.out.push(END, root, None);
        if !enc.unknown.is_empty() {
            enc.unknown.dedup();
            return Err(TokenizerError::VocabularyMiss {
                unknown: enc.unknown,
            });
        }
        Ok(enc.out)
    }

    /// Inverse of [`encode`](Self::encode). Scaled numerics are
    /// inverse-standardized; no post-processing is applied.
    pub fn decode(&self, stream: &TokenStream) -> Result<Value, TokenizerError> {
        self.decode_tokens(&stream.tokens, &stream.continuous)
    }

    pub fn decode_tokens(
        &self,
        tokens: &[TokenId],
        continuous: &[Option<f64>],
    ) -> Result<Value, TokenizerError> {
        Decoder {
            tok: self,
            tokens,
            continuous,
            pos: 0,
            wild: Vec::new(),
        }
        .record()
    }
}

struct Encoder<'a> {
    tok: &'a Tokenizer,
    out: TokenStream,
    unknown: Vec<String>,
    wild: Vec<PathSeg>,
}

impl Encoder<'_> {
    fn object_body(
        &mut self,
        obj: &Map<String, Value>,
        path: &KeyPath,
    ) -> Result<(), TokenizerError> {
        for (k, v) in obj {
            let id = match self.tok.vocab.key_id(k) {
                Some(id) => id,
                None => {
                    self.unknown.push(format!("key {k:?}"));
                    0
                }
            };
            self.out.push(id, path.clone(), None);
            self.wild.push(PathSeg::Key(k.clone()));
            self.value(v, &path.child_key(id))?;
            self.wild.pop();
        }
        Ok(())
    }

    fn value(&mut self, v: &Value, path: &KeyPath) -> Result<(), TokenizerError> {
        match v {
            Value::Object(m) => {
                self.out.push(OBJ_START, path.clone(), None);
                self.object_body(m, path)?;
                self.out.push(OBJ_END, path.clone(), None);
            }
            Value::Array(items) => {
                let max = self.tok.config.max_array_len;
                if items.len() > max {
                    return Err(TokenizerError::ArrayTooLong {
                        path: SchemaPath(self.wild.clone()).to_string(),
                        len: items.len(),
                        max,
                    });
                }
                self.out.push(ARR_START, path.clone(), None);
                self.wild.push(PathSeg::Item);
                for (i, item) in items.iter().enumerate() {
                    self.value(item, &path.child_index(i as u32))?;
                }
                self.wild.pop();
                self.out
                    .push(ARR_END, path.child_index(items.len() as u32), None);
            }
            Value::Number(n) if self.tok.scalers.get(&self.wild).is_some() => {
                let scaler = self.tok.scalers.get(&self.wild).expect("checked");
                let x = n.as_f64().unwrap_or(f64::NAN);
                if !x.is_finite() {
                    return Err(TokenizerError::NonFinite {
                        path: SchemaPath(self.wild.clone()).to_string(),
                    });
                }
                self.out.push(NUM, path.clone(), Some(scaler.scale(x)));
            }
            other => {
                let p = Primitive::from_json(other).expect("primitive");
                match self.tok.vocab.value_id(&p) {
                    Some(id) => self.out.push(id, path.clone(), None),
                    None => {
                        self.unknown
                            .push(format!("value {p} at {}", SchemaPath(self.wild.clone())));
                        self.out.push(0, path.clone(), None);
                    }
                }
            }
        }
        Ok(())
    }
}

struct Decoder<'a> {
    tok: &'a Tokenizer,
    tokens: &'a [TokenId],
    continuous: &'a [Option<f64>],
    pos: usize,
    wild: Vec<PathSeg>,
}

impl Decoder<'_> {
    fn err(&self, reason: impl Into<String>) -> TokenizerError {
        TokenizerError::Structure {
            position: self.pos,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<TokenId, TokenizerError> {
        let t = *self
            .tokens
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of stream"))?;
        self.pos += 1;
        Ok(t)
    }

    fn record(mut self) -> Result<Value, TokenizerError> {
        if self.next()? != START {
            self.pos -= 1;
            return Err(self.err("expected START"));
        }
        let obj = self.object_body(END)?;
        if self.pos != self.tokens.len() {
            return Err(self.err("trailing tokens after END"));
        }
        Ok(Value::Object(obj))
    }

    fn object_body(&mut self, close: TokenId) -> Result<Map<String, Value>, TokenizerError> {
        let mut m = Map::new();
        loop {
            let t = self.next()?;
            if t == close {
                return Ok(m);
            }
            let key = match self.tok.vocab.key_name(t) {
                Some(k) => k.to_string(),
                None => {
                    self.pos -= 1;
                    return Err(self.err(format!(
                        "expected key, found {}",
                        self.tok.vocab.describe(t)
                    )));
                }
            };
            self.wild.push(PathSeg::Key(key.clone()));
            let v = self.value()?;
            self.wild.pop();
            m.insert(key, v);
        }
    }

    fn value(&mut self) -> Result<Value, TokenizerError> {
        let t = self.next()?;
        match self.tok.vocab.token(t) {
            Some(Token::Structural(Structural::ObjStart)) => {
                Ok(Value::Object(self.object_body(OBJ_END)?))
            }
            Some(Token::Structural(Structural::ArrStart)) => {
                let mut items = Vec::new();
                self.wild.push(PathSeg::Item);
                while self.tokens.get(self.pos) != Some(&ARR_END) {
                    items.push(self.value()?);
                }
                self.wild.pop();
                self.pos += 1;
                Ok(Value::Array(items))
            }
            Some(Token::Structural(Structural::Num)) => {
                let z = self
                    .continuous
                    .get(self.pos - 1)
                    .copied()
                    .flatten()
                    .ok_or_else(|| self.err("NUM without continuous value"))?;
                let scaler = self.tok.scalers.get(&self.wild).ok_or_else(|| {
                    self.err(format!("no scaler for {}", SchemaPath(self.wild.clone())))
                })?;
                Ok(number_to_json_float(scaler.inverse(z)))
            }
            Some(Token::Value(p)) => Ok(p.to_json()),
            _ => {
                self.pos -= 1;
                Err(self.err(format!(
                    "expected value, found {}",
                    self.tok.vocab.describe(t)
                )))
            }
        }
    }
}

fn number_to_json_float(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| number_to_json(x))
}

/// Independently permutes sibling keys of every object in the record.
pub fn shuffle_keys<R: Rng + ?Sized>(record: &Value, rng: &mut R) -> Value {
    match record {
        Value::Object(m) => {
            let mut entries: Vec<(&String, &Value)> = m.iter().collect();
            entries.shuffle(rng);
            let mut out = Map::with_capacity(entries.len());
            for (k, v) in entries {
                out.insert(k.clone(), shuffle_keys(v, rng));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| shuffle_keys(v, rng)).collect()),
        other => other.clone(),
    }
}

/// Converts the concrete path of a stream position into its schema path.
pub fn schema_path_of(path: &KeyPath, vocab: &Vocab) -> SchemaPath {
    SchemaPath(
        path.elements()
            .iter()
            .map(|e| match e {
                PathElement::Key(k) => {
                    PathSeg::Key(vocab.key_name(*k).unwrap_or_default().to_string())
                }
                PathElement::Index(_) => PathSeg::Item,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::json_approx_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn fit(corpus: &[Value], tau: usize) -> Tokenizer {
        Tokenizer::fit(
            corpus,
            TokenizerConfig {
                tau,
                max_array_len: DEFAULT_MAX_ARRAY_LEN,
            },
        )
        .unwrap()
    }

    fn names(t: &Tokenizer, s: &TokenStream) -> Vec<String> {
        s.tokens.iter().map(|&id| t.vocab.describe(id)).collect()
    }

    #[test]
    fn low_cardinality_numbers_become_value_tokens() {
        let corpus = vec![json!({"a": 1}), json!({"a": 2})];
        let t = fit(&corpus, 5);
        assert_eq!(t.vocab.keys(), ["a"]);
        assert_eq!(t.vocab.num_values(), 2);
        assert!(t.scalers.is_empty());
        assert_eq!(t.vocab.size(), 8 + 1 + 2);
    }

    #[test]
    fn high_cardinality_numbers_route_through_num() {
        let corpus: Vec<Value> = (0..100).map(|i| json!({"x": i})).collect();
        let t = fit(&corpus, 50);
        assert_eq!(t.vocab.keys(), ["x"]);
        assert_eq!(t.vocab.num_values(), 0);
        let s = t.scalers.get(&[PathSeg::Key("x".into())]).unwrap();
        assert_eq!(s.distinct, 100);
        let enc = t.encode(&json!({"x": 7})).unwrap();
        assert_eq!(enc.tokens, vec![START, 8, NUM, END]);
        assert!(enc.continuous[2].is_some());
    }

    #[test]
    fn mixed_type_path_keeps_strings_categorical() {
        let mut corpus: Vec<Value> = (0..10).map(|i| json!({"x": i})).collect();
        corpus.push(json!({"x": "unknown"}));
        let t = fit(&corpus, 5);
        assert_eq!(t.vocab.num_values(), 1);
        assert!(t
            .vocab
            .value_id(&Primitive::String("unknown".into()))
            .is_some());
        assert_eq!(t.scalers.len(), 1);
    }

    #[test]
    fn two_point_standardization() {
        let corpus = vec![json!({"k": 0}), json!({"k": 10})];
        let sc = Scalers::fit(&corpus, 1).unwrap();
        let s = sc.get(&[PathSeg::Key("k".into())]).unwrap();
        assert_eq!((s.mean, s.std), (5.0, 5.0));
        assert_eq!(s.scale(10.0), 1.0);
        assert_eq!(s.scale(s.mean), 0.0);
        assert_eq!(s.inverse(1.0), 10.0);
    }

    #[test]
    fn constant_column_is_never_scaled() {
        // one distinct value can never exceed tau >= 1, so std = 0 cannot reach a scaler
        let corpus: Vec<Value> = (0..5).map(|i| json!({"c": 2.0, "d": i})).collect();
        let sc = Scalers::fit(&corpus, 1).unwrap();
        assert!(sc.get(&[PathSeg::Key("c".into())]).is_none());
        assert!(sc.get(&[PathSeg::Key("d".into())]).unwrap().std > 0.0);
    }

    #[test]
    fn nested_record_paths() {
        let corpus = vec![json!({"user": {"name": "Alice"}})];
        let t = fit(&corpus, 64);
        let s = t.encode(&corpus[0]).unwrap();
        assert_eq!(
            names(&t, &s),
            [
                "START",
                "Key(user)",
                "OBJ_START",
                "Key(name)",
                "Val(\"Alice\")",
                "OBJ_END",
                "END"
            ]
        );
        let user = t.vocab.key_id("user").unwrap();
        let name = t.vocab.key_id("name").unwrap();
        assert_eq!(
            s.paths[4],
            KeyPath(vec![PathElement::Key(user), PathElement::Key(name)])
        );
        // delimiters carry the object path, keys the path of their object
        assert_eq!(s.paths[2], KeyPath(vec![PathElement::Key(user)]));
        assert_eq!(s.paths[3], KeyPath(vec![PathElement::Key(user)]));
        assert_eq!(s.paths[5], KeyPath(vec![PathElement::Key(user)]));
        assert_eq!(s.paths[0], KeyPath::root());
        assert!(json_approx_eq(&t.decode(&s).unwrap(), &corpus[0], 0.0));
    }

    #[test]
    fn empty_record() {
        let t = fit(&[json!({"a": 1})], 64);
        let s = t.encode(&json!({})).unwrap();
        assert_eq!(s.tokens, vec![START, END]);
        assert_eq!(t.decode(&s).unwrap(), json!({}));
    }

    #[test]
    fn array_elements_are_indexed() {
        let rec = json!({"genres": ["Action", "Sci-Fi"]});
        let t = fit(std::slice::from_ref(&rec), 64);
        let s = t.encode(&rec).unwrap();
        assert_eq!(
            names(&t, &s),
            [
                "START",
                "Key(genres)",
                "ARR_START",
                "Val(\"Action\")",
                "Val(\"Sci-Fi\")",
                "ARR_END",
                "END"
            ]
        );
        let g = t.vocab.key_id("genres").unwrap();
        assert_eq!(
            s.paths[4],
            KeyPath(vec![PathElement::Key(g), PathElement::Index(1)])
        );
        assert_eq!(
            s.paths[5],
            KeyPath(vec![PathElement::Key(g), PathElement::Index(2)])
        );
    }

    #[test]
    fn decode_inverts_standardization() {
        let corpus = vec![json!({"k": 0}), json!({"k": 10})];
        let t = fit(&corpus, 1);
        let k = t.vocab.key_id("k").unwrap();
        let v = t
            .decode_tokens(&[START, k, NUM, END], &[None, None, Some(1.0), None])
            .unwrap();
        assert_eq!(v["k"].as_f64(), Some(10.0));
    }

    #[test]
    fn unknown_symbols_are_listed() {
        let t = fit(&[json!({"a": "x"})], 64);
        match t.encode(&json!({"a": "y", "b": "x"})) {
            Err(TokenizerError::VocabularyMiss { unknown }) => assert_eq!(unknown.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn array_capacity_is_enforced() {
        let rec = json!({"a": [1, 2, 3]});
        let t = Tokenizer::fit(
            std::slice::from_ref(&rec),
            TokenizerConfig {
                tau: 64,
                max_array_len: 2,
            },
        )
        .unwrap();
        assert!(matches!(
            t.encode(&rec),
            Err(TokenizerError::ArrayTooLong { len: 3, .. })
        ));
    }

    #[test]
    fn malformed_streams_report_position() {
        let t = fit(&[json!({"a": {"b": 1}})], 64);
        let a = t.vocab.key_id("a").unwrap();
        let err = t
            .decode_tokens(&[START, a, OBJ_START, END], &[None; 4])
            .unwrap_err();
        assert!(
            matches!(err, TokenizerError::Structure { position: 3, .. }),
            "{err}"
        );
        assert!(t.decode_tokens(&[START], &[None]).is_err());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_vocab(&[], 5),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            build_vocab(&[json!({})], 0),
            Err(TokenizerError::InvalidThreshold)
        ));
    }

    #[test]
    fn artifacts_round_trip_through_json() {
        let corpus: Vec<Value> = (0..20)
            .map(|i| json!({"n": i, "s": format!("v{}", i % 3), "b": [true, null]}))
            .collect();
        let t = fit(&corpus, 4);
        let v: Vocab = serde_json::from_str(&serde_json::to_string(&t.vocab).unwrap()).unwrap();
        assert_eq!(v, t.vocab);
        let s: Scalers = serde_json::from_str(&serde_json::to_string(&t.scalers).unwrap()).unwrap();
        assert_eq!(s, t.scalers);
    }

    #[test]
    fn shuffle_keeps_content() {
        let rec = json!({"o": {"x": 1, "y": [{"p": 1, "q": 2}]}, "p": 3, "z": null});
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = shuffle_keys(&rec, &mut rng);
            assert!(json_approx_eq(&s, &rec, 0.0));
        }
        assert_eq!(shuffle_keys(&json!({}), &mut rng), json!({}));
    }
}
