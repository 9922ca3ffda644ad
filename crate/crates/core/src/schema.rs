//! Schema derived from a training corpus.
//!
//! The schema is keyed by wildcarded key path. Path-dependent constraints
//! (type, enum, allowed keys) compile into a [`SchemaMaskTable`]: one boolean
//! row per path, looked up with the path of the next token. Count-dependent
//! constraints (required, array bounds, uniqueness) need running state and are
//! enforced by the sampler instead.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use fixedbitset::FixedBitSet;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::path::{KeyPath, PathSeg, SchemaPath, WildSeg};
use crate::tokenizer::{
    Scalers, TokenStream, Vocab, ARR_END, ARR_START, END, NUM, OBJ_END, OBJ_START,
};
use crate::value::{canonical_string, is_integral, number_to_json, Kind, Primitive};

pub const JSON_SCHEMA_DIALECT: &str = "https://json-schema.org/draft/2020-12/schema";

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("scaler for {0} has no schema entry")]
    ScalerWithoutPath(String),
    #[error("scaled key {0} has no scaler")]
    MissingScaler(String),
    #[error("invalid schema document: {0}")]
    Document(String),
}

/// Constraints for one wildcarded key path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SchemaNode {
    pub kinds: BTreeSet<Kind>,
    /// All observed primitives, when there are at most `tau` of them.
    pub enum_values: Option<Vec<Primitive>>,
    pub minimum: Option<f64>,
    pub maximum: Option<f64>,
    /// Child keys in first-observed order.
    pub properties: Vec<String>,
    pub required: Vec<String>,
    pub min_items: Option<usize>,
    pub max_items: Option<usize>,
    pub unique_items: bool,
    /// Numbers at this path are standardized and travel through `NUM`.
    pub scaled: bool,
}

impl SchemaNode {
    pub fn allows_kind(&self, kind: Kind) -> bool {
        self.kinds.contains(&kind) || (kind == Kind::Integer && self.kinds.contains(&Kind::Number))
    }

    /// Integer-typed without a general number type: generated values round.
    pub fn integer_only(&self) -> bool {
        self.kinds.contains(&Kind::Integer) && !self.kinds.contains(&Kind::Number)
    }

    fn numeric_enum(&self) -> Option<Vec<f64>> {
        let e = self.enum_values.as_ref()?;
        let v: Vec<f64> = e.iter().filter_map(Primitive::as_f64).collect();
        (!v.is_empty()).then_some(v)
    }

    /// Whether a value token may appear at this path.
    pub fn allows_primitive(&self, p: &Primitive) -> bool {
        if let Some(e) = &self.enum_values {
            return e.contains(p);
        }
        match p {
            Primitive::Number(n) => {
                if self.scaled || !self.allows_kind(p.kind()) {
                    return false;
                }
                let x = n.value();
                self.minimum.is_none_or(|lo| x >= lo) && self.maximum.is_none_or(|hi| x <= hi)
            }
            other => self.kinds.contains(&other.kind()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedSchema {
    pub tau: usize,
    pub nodes: BTreeMap<SchemaPath, SchemaNode>,
}

#[derive(Default)]
struct NodeAcc {
    kinds: BTreeSet<Kind>,
    prims: Vec<Primitive>,
    prim_set: HashSet<Primitive>,
    too_many: bool,
    min: Option<f64>,
    max: Option<f64>,
    objects: usize,
    child_order: Vec<String>,
    child_counts: HashMap<String, usize>,
    min_len: Option<usize>,
    max_len: Option<usize>,
    all_unique: bool,
    arrays: usize,
}

struct Deriver {
    tau: usize,
    accs: BTreeMap<SchemaPath, NodeAcc>,
}

impl Deriver {
    fn visit(&mut self, v: &Value, path: &SchemaPath) {
        let tau = self.tau;
        let acc = self.accs.entry(path.clone()).or_default();
        acc.kinds.insert(Kind::of(v));
        match v {
            Value::Object(m) => {
                acc.objects += 1;
                for k in m.keys() {
                    match acc.child_counts.get_mut(k) {
                        Some(c) => *c += 1,
                        None => {
                            acc.child_counts.insert(k.clone(), 1);
                            acc.child_order.push(k.clone());
                        }
                    }
                }
                for (k, c) in m {
                    self.visit(c, &path.key(k));
                }
            }
            Value::Array(items) => {
                let n = items.len();
                if acc.arrays == 0 {
                    acc.all_unique = true;
                }
                acc.arrays += 1;
                acc.min_len = Some(acc.min_len.map_or(n, |m| m.min(n)));
                acc.max_len = Some(acc.max_len.map_or(n, |m| m.max(n)));
                if acc.all_unique {
                    let mut seen = HashSet::with_capacity(n);
                    acc.all_unique = items.iter().all(|i| seen.insert(canonical_string(i)));
                }
                let item = path.item();
                for c in items {
                    self.visit(c, &item);
                }
            }
            other => {
                let p = Primitive::from_json(other).expect("primitive");
                if let Some(x) = p.as_f64() {
                    acc.min = Some(acc.min.map_or(x, |m| m.min(x)));
                    acc.max = Some(acc.max.map_or(x, |m| m.max(x)));
                }
                if !acc.too_many && !acc.prim_set.contains(&p) {
                    if acc.prims.len() == tau {
                        acc.too_many = true;
                        acc.prims.clear();
                        acc.prim_set.clear();
                    } else {
                        acc.prim_set.insert(p.clone());
                        acc.prims.push(p);
                    }
                }
            }
        }
    }
}

/// Derives kinds, enums, required keys, array bounds, uniqueness and numeric
/// bounds from the corpus. Records must be objects.
pub fn derive_schema(corpus: &[Value], tau: usize) -> Result<DerivedSchema, SchemaError> {
    if corpus.is_empty() {
        return Err(SchemaError::EmptyCorpus);
    }
    let mut d = Deriver {
        tau,
        accs: BTreeMap::new(),
    };
    let root = SchemaPath::root();
    for record in corpus {
        d.visit(record, &root);
    }
    let nodes = d
        .accs
        .into_iter()
        .map(|(path, a)| {
            let required = a
                .child_order
                .iter()
                .filter(|k| a.child_counts[*k] == a.objects)
                .cloned()
                .collect();
            let node = SchemaNode {
                enum_values: (!a.too_many && !a.prims.is_empty()).then_some(a.prims),
                minimum: a.min,
                maximum: a.max,
                properties: a.child_order,
                required,
                min_items: a.min_len,
                max_items: a.max_len,
                unique_items: a.arrays > 0 && a.all_unique,
                scaled: false,
                kinds: a.kinds,
            };
            (path, node)
        })
        .collect();
    Ok(DerivedSchema { tau, nodes })
}

impl DerivedSchema {
    pub fn get(&self, path: &SchemaPath) -> Option<&SchemaNode> {
        self.nodes.get(path)
    }

    pub fn node(&self, path: &[PathSeg]) -> Option<&SchemaNode> {
        self.nodes.get(path)
    }

    pub fn root(&self) -> Option<&SchemaNode> {
        self.nodes.get(&SchemaPath::root())
    }

    /// Unique key paths, `P`.
    pub fn path_count(&self) -> usize {
        self.nodes.len()
    }

    /// Schema in standardized space: scaled keys lose their enum and get
    /// `(bound - mean) / std` bounds.
    pub fn transform_scaled(&self, scalers: &Scalers) -> Result<DerivedSchema, SchemaError> {
        let mut out = self.clone();
        for s in scalers.iter() {
            let node = out
                .nodes
                .get_mut(&s.path)
                .ok_or_else(|| SchemaError::ScalerWithoutPath(s.path.to_string()))?;
            node.enum_values = None;
            node.minimum = node.minimum.map(|x| s.scale(x));
            node.maximum = node.maximum.map(|x| s.scale(x));
            node.scaled = true;
        }
        if let Some((p, _)) = out
            .nodes
            .iter()
            .find(|(p, n)| n.scaled && scalers.get(p.segments()).is_none())
        {
            return Err(SchemaError::MissingScaler(p.to_string()));
        }
        Ok(out)
    }

    /// JSON Schema (draft 2020-12 keywords) document.
    pub fn to_json_schema(&self) -> Value {
        let mut doc = match self.node_json(&SchemaPath::root()) {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        let mut out = Map::new();
        out.insert("$schema".into(), Value::String(JSON_SCHEMA_DIALECT.into()));
        out.insert("x-tau".into(), json!(self.tau));
        out.append(&mut doc);
        Value::Object(out)
    }

    fn node_json(&self, path: &SchemaPath) -> Value {
        let Some(n) = self.nodes.get(path) else {
            return json!({});
        };
        let mut m = Map::new();
        let kinds: Vec<Value> = n
            .kinds
            .iter()
            .map(|k| Value::String(k.name().into()))
            .collect();
        m.insert(
            "type".into(),
            if kinds.len() == 1 {
                kinds[0].clone()
            } else {
                Value::Array(kinds)
            },
        );
        if let Some(e) = &n.enum_values {
            m.insert(
                "enum".into(),
                Value::Array(e.iter().map(Primitive::to_json).collect()),
            );
        }
        if let Some(x) = n.minimum {
            m.insert("minimum".into(), number_to_json(x));
        }
        if let Some(x) = n.maximum {
            m.insert("maximum".into(), number_to_json(x));
        }
        if n.kinds.contains(&Kind::Object) {
            let props: Map<String, Value> = n
                .properties
                .iter()
                .map(|k| (k.clone(), self.node_json(&path.key(k))))
                .collect();
            m.insert("properties".into(), Value::Object(props));
            m.insert("required".into(), json!(n.required));
            m.insert("additionalProperties".into(), Value::Bool(false));
        }
        if n.kinds.contains(&Kind::Array) {
            let item = path.item();
            if self.nodes.contains_key(&item) {
                m.insert("items".into(), self.node_json(&item));
            }
            if let Some(x) = n.min_items {
                m.insert("minItems".into(), json!(x));
            }
            if let Some(x) = n.max_items {
                m.insert("maxItems".into(), json!(x));
            }
            m.insert("uniqueItems".into(), Value::Bool(n.unique_items));
        }
        if n.scaled {
            m.insert("x-scaled".into(), Value::Bool(true));
        }
        Value::Object(m)
    }

    /// Parses a document produced by [`to_json_schema`](Self::to_json_schema).
    pub fn from_json_schema(doc: &Value) -> Result<Self, SchemaError> {
        let tau =
            doc.get("x-tau")
                .and_then(Value::as_u64)
                .ok_or_else(|| SchemaError::Document("missing x-tau".into()))? as usize;
        let mut nodes = BTreeMap::new();
        parse_node(doc, SchemaPath::root(), &mut nodes)?;
        Ok(Self { tau, nodes })
    }
}

fn parse_node(
    v: &Value,
    path: SchemaPath,
    nodes: &mut BTreeMap<SchemaPath, SchemaNode>,
) -> Result<(), SchemaError> {
    let bad = |what: &str| SchemaError::Document(format!("{what} at {path}"));
    let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
    let kinds: BTreeSet<Kind> = match obj.get("type") {
        Some(Value::String(s)) => [Kind::from_name(s).ok_or_else(|| bad("unknown type"))?].into(),
        Some(Value::Array(a)) => a
            .iter()
            .map(|t| {
                t.as_str()
                    .and_then(Kind::from_name)
                    .ok_or_else(|| bad("unknown type"))
            })
            .collect::<Result<_, _>>()?,
        _ => return Err(bad("missing type")),
    };
    let usize_of = |k: &str| obj.get(k).and_then(Value::as_u64).map(|x| x as usize);
    let mut node = SchemaNode {
        kinds,
        enum_values: match obj.get("enum") {
            Some(Value::Array(a)) => Some(
                a.iter()
                    .map(|x| Primitive::from_json(x).ok_or_else(|| bad("non-primitive enum")))
                    .collect::<Result<_, _>>()?,
            ),
            _ => None,
        },
        minimum: obj.get("minimum").and_then(Value::as_f64),
        maximum: obj.get("maximum").and_then(Value::as_f64),
        min_items: usize_of("minItems"),
        max_items: usize_of("maxItems"),
        unique_items: obj
            .get("uniqueItems")
            .and_then(Value::as_bool)
            .unwrap_or(false),
        scaled: obj
            .get("x-scaled")
            .and_then(Value::as_bool)
            .unwrap_or(false),
        ..Default::default()
    };
    if let Some(Value::Object(props)) = obj.get("properties") {
        node.properties = props.keys().cloned().collect();
        for (k, child) in props {
            parse_node(child, path.key(k), nodes)?;
        }
    }
    if let Some(Value::Array(req)) = obj.get("required") {
        node.required = req
            .iter()
            .filter_map(|r| r.as_str().map(str::to_string))
            .collect();
    }
    if let Some(items) = obj.get("items") {
        parse_node(items, path.item(), nodes)?;
    }
    nodes.insert(path, node);
    Ok(())
}

/// `M ∈ {0,1}^{(P+1)×|V|}`: row 0 is all ones, row `i` holds the type, enum
/// and allowed-key restrictions of one key path.
#[derive(Clone, Debug)]
pub struct SchemaMaskTable {
    rows: Vec<FixedBitSet>,
    paths: Vec<Option<SchemaPath>>,
    index: HashMap<Vec<WildSeg>, usize>,
}

impl SchemaMaskTable {
    /// Compiles the (scaled) schema against a vocabulary.
    pub fn compile(schema: &DerivedSchema, vocab: &Vocab) -> Self {
        let v = vocab.size();
        let mut all = FixedBitSet::with_capacity(v);
        all.insert_range(..);
        let mut rows = vec![all];
        let mut paths = vec![None];
        let mut index = HashMap::new();
        for (path, node) in &schema.nodes {
            let Some(wild) = wild_of(path, vocab) else {
                continue;
            };
            let mut row = FixedBitSet::with_capacity(v);
            fill_value_tokens(node, vocab, &mut row);
            if node.scaled {
                row.insert(NUM as usize);
            }
            if node.kinds.contains(&Kind::Object) {
                row.insert(OBJ_START as usize);
                for k in &node.properties {
                    if let Some(id) = vocab.key_id(k) {
                        row.insert(id as usize);
                    }
                }
                row.insert(if path.is_root() { END } else { OBJ_END } as usize);
            }
            if node.kinds.contains(&Kind::Array) {
                row.insert(ARR_START as usize);
            }
            if path.is_item() {
                row.insert(ARR_END as usize);
            }
            index.insert(wild, rows.len());
            rows.push(row);
            paths.push(Some(path.clone()));
        }
        Self { rows, paths, index }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &FixedBitSet {
        &self.rows[i]
    }

    pub fn row_path(&self, i: usize) -> Option<&SchemaPath> {
        self.paths.get(i).and_then(Option::as_ref)
    }

    /// Row for the token that will occupy `path`; 0 when unmapped.
    pub fn row_index(&self, path: &KeyPath) -> usize {
        self.index.get(&path.wildcard()).copied().unwrap_or(0)
    }

    /// `s_t = M[row(p_{t+1})]` for every position; the final position has no
    /// successor and maps to row 0.
    pub fn rows_for_sequence(&self, stream: &TokenStream) -> Vec<usize> {
        (0..stream.len())
            .map(|t| stream.paths.get(t + 1).map_or(0, |p| self.row_index(p)))
            .collect()
    }

    pub fn masks_for_sequence(&self, stream: &TokenStream) -> Vec<FixedBitSet> {
        self.rows_for_sequence(stream)
            .into_iter()
            .map(|r| self.rows[r].clone())
            .collect()
    }
}

fn wild_of(path: &SchemaPath, vocab: &Vocab) -> Option<Vec<WildSeg>> {
    path.segments()
        .iter()
        .map(|s| match s {
            PathSeg::Key(k) => vocab.key_id(k).map(WildSeg::Key),
            PathSeg::Item => Some(WildSeg::Item),
        })
        .collect()
}

fn fill_value_tokens(node: &SchemaNode, vocab: &Vocab, row: &mut FixedBitSet) {
    if let Some(e) = &node.enum_values {
        for p in e {
            if let Some(id) = vocab.value_id(p) {
                row.insert(id as usize);
            }
        }
        return;
    }
    let base = vocab.value_range().start;
    for (i, p) in vocab.values().iter().enumerate() {
        if node.allows_primitive(p) {
            row.insert(base + i);
        }
    }
}

/// Clip to bounds, then snap to the nearest enum value (ties to the smaller
/// value), else round half away from zero for integer keys.
pub fn postprocess_value(x: f64, node: &SchemaNode) -> f64 {
    let mut v = x;
    if let Some(lo) = node.minimum {
        v = v.max(lo);
    }
    if let Some(hi) = node.maximum {
        v = v.min(hi);
    }
    if let Some(candidates) = node.numeric_enum() {
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            let (dc, db) = ((v - c).abs(), (v - best).abs());
            if dc < db || (dc == db && c < best) {
                best = c;
            }
        }
        v = best;
    } else if node.integer_only() {
        v = v.round();
    }
    v
}

/// Applies [`postprocess_value`] to every number in the record, using the
/// original (unscaled) schema.
pub fn postprocess_record(record: &Value, schema: &DerivedSchema) -> Value {
    fn walk(v: &Value, path: &SchemaPath, schema: &DerivedSchema) -> Value {
        match v {
            Value::Number(n) => match (schema.get(path), n.as_f64()) {
                (Some(node), Some(x)) => {
                    let y = postprocess_value(x, node);
                    if node.integer_only() && is_integral(y) {
                        number_to_json(y)
                    } else {
                        serde_json::Number::from_f64(y)
                            .map(Value::Number)
                            .unwrap_or_else(|| v.clone())
                    }
                }
                _ => v.clone(),
            },
            Value::Object(m) => Value::Object(
                m.iter()
                    .map(|(k, c)| (k.clone(), walk(c, &path.key(k), schema)))
                    .collect(),
            ),
            Value::Array(items) => {
                let item = path.item();
                Value::Array(items.iter().map(|c| walk(c, &item, schema)).collect())
            }
            other => other.clone(),
        }
    }
    walk(record, &SchemaPath::root(), schema)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: String,
    pub keyword: &'static str,
    pub detail: String,
}

/// Lists every constraint violation; empty means conformant.
pub fn validate(record: &Value, schema: &DerivedSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    check(
        record,
        &SchemaPath::root(),
        "$".to_string(),
        schema,
        &mut out,
    );
    out
}

fn check(
    v: &Value,
    path: &SchemaPath,
    at: String,
    schema: &DerivedSchema,
    out: &mut Vec<Violation>,
) {
    let mut push = |keyword: &'static str, detail: String| {
        out.push(Violation {
            path: at.clone(),
            keyword,
            detail,
        })
    };
    let Some(node) = schema.get(path) else {
        push("additionalProperties", "path not in schema".into());
        return;
    };
    let kind = Kind::of(v);
    if !node.allows_kind(kind) {
        push(
            "type",
            format!(
                "{} not in {:?}",
                kind.name(),
                node.kinds.iter().map(|k| k.name()).collect::<Vec<_>>()
            ),
        );
        return;
    }
    match v {
        Value::Object(m) => {
            for k in &node.required {
                if !m.contains_key(k) {
                    push("required", format!("missing {k:?}"));
                }
            }
            for (k, c) in m {
                if node.properties.iter().any(|p| p == k) {
                    check(c, &path.key(k), format!("{at}.{k}"), schema, out);
                } else {
                    out.push(Violation {
                        path: at.clone(),
                        keyword: "additionalProperties",
                        detail: format!("unexpected key {k:?}"),
                    });
                }
            }
        }
        Value::Array(items) => {
            if node.min_items.is_some_and(|n| items.len() < n) {
                push(
                    "minItems",
                    format!("{} < {}", items.len(), node.min_items.unwrap_or(0)),
                );
            }
            if node.max_items.is_some_and(|n| items.len() > n) {
                push(
                    "maxItems",
                    format!("{} > {}", items.len(), node.max_items.unwrap_or(0)),
                );
            }
            if node.unique_items {
                let mut seen = HashSet::new();
                if !items.iter().all(|i| seen.insert(canonical_string(i))) {
                    push("uniqueItems", "duplicate elements".into());
                }
            }
            let item = path.item();
            for (i, c) in items.iter().enumerate() {
                check(c, &item, format!("{at}.{i}"), schema, out);
            }
        }
        other => {
            let p = Primitive::from_json(other).expect("primitive");
            if let Some(e) = &node.enum_values {
                if !e.contains(&p) {
                    push("enum", format!("{p} not observed"));
                }
            }
            if let Some(x) = p.as_f64() {
                if node.minimum.is_some_and(|lo| x < lo) {
                    push("minimum", format!("{x} < {}", node.minimum.unwrap_or(0.0)));
                }
                if node.maximum.is_some_and(|hi| x > hi) {
                    push("maximum", format!("{x} > {}", node.maximum.unwrap_or(0.0)));
                }
            }
        }
    }
}
