//! Type separation: per-row type indicator plus per-kind value columns.

use std::collections::BTreeSet;

use crate::flatten::{Cell, FlatTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dtype {
    Num,
    Cat,
    Bool,
    Null,
    Missing,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::Num => "num",
            Dtype::Cat => "cat",
            Dtype::Bool => "bool",
            Dtype::Null => "null",
            Dtype::Missing => "missing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Typed {
    Missing,
    Null,
    Num(f64),
    Cat(String),
    Bool(bool),
}

impl Typed {
    pub fn dtype(&self) -> Dtype {
        match self {
            Typed::Missing => Dtype::Missing,
            Typed::Null => Dtype::Null,
            Typed::Num(_) => Dtype::Num,
            Typed::Cat(_) => Dtype::Cat,
            Typed::Bool(_) => Dtype::Bool,
        }
    }

    pub fn is_present(&self) -> bool {
        !matches!(self, Typed::Missing)
    }
}

impl From<Option<&Cell>> for Typed {
    fn from(c: Option<&Cell>) -> Self {
        match c {
            None => Typed::Missing,
            Some(Cell::Null) => Typed::Null,
            Some(Cell::Num(x)) => Typed::Num(*x),
            Some(Cell::Str(s)) => Typed::Cat(s.clone()),
            Some(Cell::Bool(b)) => Typed::Bool(*b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Expand only heterogeneous or partially present columns.
    Training,
    /// Expand everything and add array-length columns.
    Evaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypedColumn {
    pub name: String,
    pub cells: Vec<Typed>,
    /// Rendered as `.dtype` plus per-kind sub-columns.
    pub expanded: bool,
    /// Array-length column.
    pub is_length: bool,
}

impl TypedColumn {
    pub fn kinds(&self) -> BTreeSet<Dtype> {
        self.cells.iter().map(Typed::dtype).collect()
    }

    /// Heterogeneous or partially present.
    pub fn needs_expansion(kinds: &BTreeSet<Dtype>) -> bool {
        kinds.len() > 1
    }
}

/// Values of one rendered sub-column.
#[derive(Clone, Debug, PartialEq)]
pub enum SubValues {
    Discrete(Vec<Option<String>>),
    Continuous(Vec<Option<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubColumn {
    pub name: String,
    /// Index of the source column in the typed table.
    pub source: usize,
    pub values: SubValues,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypedTable {
    pub columns: Vec<TypedColumn>,
    pub n_rows: usize,
}

pub fn discrete_label(t: &Typed) -> Option<String> {
    match t {
        Typed::Missing => None,
        Typed::Null => Some("null".into()),
        Typed::Num(x) => Some(x.to_string()),
        Typed::Cat(s) => Some(s.clone()),
        Typed::Bool(b) => Some(b.to_string()),
    }
}

impl TypedTable {
    pub fn column(&self, name: &str) -> Option<&TypedColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Renders sub-columns. `kinds[i]` decides the layout of column `i`, so
    /// two tables rendered with the same `kinds` share one column set.
    pub fn sub_columns(&self, kinds: &[BTreeSet<Dtype>], expand_all: bool) -> Vec<SubColumn> {
        let mut out = Vec::new();
        for (i, (col, ks)) in self.columns.iter().zip(kinds).enumerate() {
            let expand = expand_all || TypedColumn::needs_expansion(ks);
            if !expand {
                let values = if ks.iter().all(|k| *k == Dtype::Num) {
                    SubValues::Continuous(col.cells.iter().map(|c| if let Typed::Num(x) = c { Some(*x) } else { None }).collect())
                } else {
                    SubValues::Discrete(col.cells.iter().map(discrete_label).collect())
                };
                out.push(SubColumn { name: col.name.clone(), source: i, values });
                continue;
            }
            out.push(SubColumn {
                name: format!("{}.dtype", col.name),
                source: i,
                values: SubValues::Discrete(col.cells.iter().map(|c| Some(c.dtype().name().to_string())).collect()),
            });
            for k in ks {
                let values = match k {
                    Dtype::Num => SubValues::Continuous(
                        col.cells.iter().map(|c| if let Typed::Num(x) = c { Some(*x) } else { None }).collect(),
                    ),
                    Dtype::Cat => SubValues::Discrete(
                        col.cells.iter().map(|c| if let Typed::Cat(s) = c { Some(s.clone()) } else { None }).collect(),
                    ),
                    Dtype::Bool => SubValues::Discrete(
                        col.cells.iter().map(|c| if let Typed::Bool(b) = c { Some(b.to_string()) } else { None }).collect(),
                    ),
                    Dtype::Null | Dtype::Missing => continue,
                };
                out.push(SubColumn { name: format!("{}.{}", col.name, k.name()), source: i, values });
            }
        }
        out
    }
}

/// Union of observed kinds per column across tables with the same layout.
pub fn union_kinds(tables: &[&TypedTable]) -> Vec<BTreeSet<Dtype>> {
    let n = tables.first().map_or(0, |t| t.columns.len());
    (0..n)
        .map(|i| tables.iter().flat_map(|t| t.columns[i].cells.iter().map(Typed::dtype)).collect())
        .collect()
}

pub fn type_separate(table: &FlatTable, mode: Mode) -> TypedTable {
    let mut columns: Vec<TypedColumn> = (0..table.columns.len())
        .map(|i| {
            let cells: Vec<Typed> = table.column(i).map(Typed::from).collect();
            let kinds: BTreeSet<Dtype> = cells.iter().map(Typed::dtype).collect();
            TypedColumn {
                name: table.columns[i].clone(),
                expanded: mode == Mode::Evaluation || TypedColumn::needs_expansion(&kinds),
                cells,
                is_length: false,
            }
        })
        .collect();
    if mode == Mode::Evaluation {
        for (j, a) in table.arrays.iter().enumerate() {
            columns.push(TypedColumn {
                name: format!("{a}.alen"),
                cells: table.array_lengths.iter().map(|r| r[j].map_or(Typed::Missing, |n| Typed::Num(n as f64))).collect(),
                expanded: true,
                is_length: true,
            });
        }
    }
    TypedTable { columns, n_rows: table.len() }
}
