//! Depth-first flattening of nested records into dot-path columns.

use std::collections::HashMap;

use serde_json::Value;

/// A leaf value. Structural absence is `None` at the table level.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Cell {
    fn of(v: &Value) -> Option<Cell> {
        Some(match v {
            Value::Null => Cell::Null,
            Value::Bool(b) => Cell::Bool(*b),
            Value::Number(n) => Cell::Num(n.as_f64()?),
            Value::String(s) => Cell::Str(s.clone()),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<Cell>>>,
    /// Concrete array paths (`genres`, `cast.0.roles`), one length column each.
    pub arrays: Vec<String>,
    pub array_lengths: Vec<Vec<Option<usize>>>,
}

impl FlatTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = Option<&Cell>> {
        self.rows.iter().map(move |r| r[i].as_ref())
    }
}

fn walk(v: &Value, prefix: &str, leaves: &mut Vec<(String, Cell)>, arrays: &mut Vec<(String, usize)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                walk(x, &join(k), leaves, arrays);
            }
        }
        Value::Array(items) => {
            arrays.push((prefix.to_string(), items.len()));
            for (i, x) in items.iter().enumerate() {
                walk(x, &join(&i.to_string()), leaves, arrays);
            }
        }
        leaf => {
            if let Some(c) = Cell::of(leaf) {
                leaves.push((prefix.to_string(), c));
            }
        }
    }
}

#[derive(Default)]
struct Columns {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Columns {
    fn id(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

/// Flattens several corpora onto one shared column set, in first-seen order.
pub fn flatten_all(corpora: &[&[Value]]) -> Vec<FlatTable> {
    let mut cols = Columns::default();
    let mut arrs = Columns::default();
    let parsed: Vec<Vec<(Vec<(usize, Cell)>, Vec<(usize, usize)>)>> = corpora
        .iter()
        .map(|corpus| {
            corpus
                .iter()
                .map(|rec| {
                    let (mut leaves, mut arrays) = (Vec::new(), Vec::new());
                    walk(rec, "", &mut leaves, &mut arrays);
                    let l = leaves.into_iter().map(|(p, c)| (cols.id(&p), c)).collect();
                    let a = arrays.into_iter().map(|(p, n)| (arrs.id(&p), n)).collect();
                    (l, a)
                })
                .collect()
        })
        .collect();
    parsed
        .into_iter()
        .map(|recs| {
            let mut t = FlatTable {
                columns: cols.names.clone(),
                rows: Vec::with_capacity(recs.len()),
                arrays: arrs.names.clone(),
                array_lengths: Vec::with_capacity(recs.len()),
            };
            for (leaves, arrays) in recs {
                let mut row = vec![None; cols.names.len()];
                for (i, c) in leaves {
                    row[i] = Some(c);
                }
                let mut lens = vec![None; arrs.names.len()];
                for (i, n) in arrays {
                    lens[i] = Some(n);
                }
                t.rows.push(row);
                t.array_lengths.push(lens);
            }
            t
        })
        .collect()
}

pub fn flatten(corpus: &[Value]) -> FlatTable {
    flatten_all(&[corpus]).pop().unwrap_or_default()
}
