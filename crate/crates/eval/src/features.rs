//! Numeric/categorical feature matrices over a shared sub-column layout.

use std::collections::HashMap;

use crate::gbdt::Feature;
use crate::typed::{union_kinds, SubValues, TypedTable};

#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub names: Vec<String>,
    /// Source column per feature.
    pub sources: Vec<usize>,
    /// `tables[t][f]`.
    pub tables: Vec<Vec<Feature>>,
}

/// Encodes tables that share a typed layout. Categories are interned over
/// the union, so ids agree across tables.
pub fn encode(tables: &[&TypedTable], skip_source: Option<usize>) -> Encoded {
    let kinds = union_kinds(tables);
    let subs: Vec<_> = tables.iter().map(|t| t.sub_columns(&kinds, false)).collect();
    let width = subs.first().map_or(0, Vec::len);
    let mut out = Encoded { names: Vec::new(), sources: Vec::new(), tables: vec![Vec::new(); tables.len()] };
    for f in 0..width {
        let head = &subs[0][f];
        if Some(head.source) == skip_source {
            continue;
        }
        out.names.push(head.name.clone());
        out.sources.push(head.source);
        let mut ids: HashMap<&str, u32> = HashMap::new();
        for (t, cols) in subs.iter().enumerate() {
            let feature = match &cols[f].values {
                SubValues::Continuous(v) => Feature::Numeric(v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()),
                SubValues::Discrete(v) => Feature::Categorical(
                    v.iter()
                        .map(|x| {
                            x.as_deref().map(|s| {
                                let n = ids.len() as u32;
                                *ids.entry(s).or_insert(n)
                            })
                        })
                        .collect(),
                ),
            };
            out.tables[t].push(feature);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::flatten_all;
    use crate::typed::{type_separate, Mode};
    use serde_json::json;

    #[test]
    fn categories_share_ids_across_tables() {
        let a = vec![json!({"c": "x", "n": 1}), json!({"c": "y", "n": 2})];
        let b = vec![json!({"c": "y"})];
        let flat = flatten_all(&[&a, &b]);
        let t: Vec<TypedTable> = flat.iter().map(|f| type_separate(f, Mode::Evaluation)).collect();
        let e = encode(&[&t[0], &t[1]], None);
        assert_eq!(e.names, ["c", "n.dtype", "n.num"]);
        assert_eq!(e.tables[0][0], Feature::Categorical(vec![Some(0), Some(1)]));
        assert_eq!(e.tables[1][0], Feature::Categorical(vec![Some(1)]));
        let Feature::Numeric(v) = &e.tables[1][2] else { panic!() };
        assert!(v[0].is_nan());
        let skipped = encode(&[&t[0], &t[1]], Some(0));
        assert_eq!(skipped.names, ["n.dtype", "n.num"]);
    }
}
