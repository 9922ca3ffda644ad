//! Per-column shape similarity: presence, type and value factors.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::Serialize;

use crate::EvalError;
use crate::typed::{Dtype, Typed, TypedColumn, TypedTable};

/// `1 - TV` between two empirical distributions. Empty inputs are `None`.
pub fn tv_complement<K: Hash + Eq>(a: impl IntoIterator<Item = K>, b: impl IntoIterator<Item = K>) -> Option<f64> {
    let mut counts: HashMap<K, (f64, f64)> = HashMap::new();
    let (mut na, mut nb) = (0.0, 0.0);
    for k in a {
        counts.entry(k).or_default().0 += 1.0;
        na += 1.0;
    }
    for k in b {
        counts.entry(k).or_default().1 += 1.0;
        nb += 1.0;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    // Sorted so the sum does not depend on hash order.
    let mut diffs: Vec<f64> = counts.values().map(|(x, y)| (x / na - y / nb).abs()).collect();
    diffs.sort_by(f64::total_cmp);
    let tv = diffs.iter().sum::<f64>() / 2.0;
    Some((1.0 - tv).clamp(0.0, 1.0))
}

/// `1 - KS` statistic between two samples. Empty inputs are `None`.
pub fn ks_complement(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Some(1.0 - d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnShape {
    pub column: String,
    pub presence: f64,
    pub dtype: f64,
    pub value: f64,
    pub score: f64,
    /// A numeric value factor was skipped for lack of data.
    pub undersampled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeReport {
    pub score: f64,
    pub columns: Vec<ColumnShape>,
}

fn present(col: &TypedColumn) -> impl Iterator<Item = &Typed> {
    col.cells.iter().filter(|c| c.is_present())
}

fn shape(real: &TypedColumn, synth: &TypedColumn) -> ColumnShape {
    let presence = tv_complement(real.cells.iter().map(Typed::is_present), synth.cells.iter().map(Typed::is_present))
        .unwrap_or(1.0);
    let dtype = tv_complement(present(real).map(Typed::dtype), present(synth).map(Typed::dtype)).unwrap_or(1.0);

    let kinds = |c: &TypedColumn| present(c).map(Typed::dtype).collect::<BTreeSet<_>>();
    let share = |c: &TypedColumn, k: Dtype| {
        let n = present(c).count().max(1) as f64;
        present(c).filter(|x| x.dtype() == k).count() as f64 / n
    };
    let (mut num, mut den, mut undersampled) = (0.0, 0.0, false);
    for k in kinds(real).intersection(&kinds(synth)) {
        let s = match k {
            Dtype::Num => {
                let vals = |c: &TypedColumn| -> Vec<f64> {
                    present(c).filter_map(|x| if let Typed::Num(v) = x { Some(*v) } else { None }).collect()
                };
                let (a, b) = (vals(real), vals(synth));
                if a.len() < 2 || b.len() < 2 {
                    undersampled = true;
                    continue;
                }
                ks_complement(&a, &b)
            }
            Dtype::Cat => tv_complement(
                present(real).filter_map(|x| if let Typed::Cat(s) = x { Some(s.as_str()) } else { None }),
                present(synth).filter_map(|x| if let Typed::Cat(s) = x { Some(s.as_str()) } else { None }),
            ),
            Dtype::Bool => tv_complement(
                present(real).filter_map(|x| if let Typed::Bool(b) = x { Some(*b) } else { None }),
                present(synth).filter_map(|x| if let Typed::Bool(b) = x { Some(*b) } else { None }),
            ),
            Dtype::Null | Dtype::Missing => continue,
        };
        let w = (share(real, *k) + share(synth, *k)) / 2.0;
        num += w * s.unwrap_or(1.0);
        den += w;
    }
    let value = if den > 0.0 { num / den } else { 1.0 };
    ColumnShape {
        column: real.name.clone(),
        presence,
        dtype,
        value,
        score: presence * dtype * value,
        undersampled,
    }
}

/// Mean column shape score. Both tables must share a column layout.
pub fn column_shapes(real: &TypedTable, synth: &TypedTable) -> Result<ShapeReport, EvalError> {
    if real.n_rows == 0 || synth.n_rows == 0 {
        return Err(EvalError::Empty("column shapes"));
    }
    let columns: Vec<ColumnShape> = real.columns.iter().zip(&synth.columns).map(|(r, s)| shape(r, s)).collect();
    let score = if columns.is_empty() {
        1.0
    } else {
        columns.iter().map(|c| c.score).sum::<f64>() / columns.len() as f64
    };
    Ok(ShapeReport { score, columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(cells: Vec<Typed>) -> TypedColumn {
        TypedColumn { name: "c".into(), cells, expanded: true, is_length: false }
    }

    #[test]
    fn presence_halves_the_score() {
        let real = col(vec![Typed::Num(1.0), Typed::Missing, Typed::Num(2.0), Typed::Missing]);
        let synth = col(vec![Typed::Num(1.0), Typed::Num(2.0), Typed::Num(1.0), Typed::Num(2.0)]);
        let s = shape(&real, &synth);
        assert_eq!((s.presence, s.dtype, s.value), (0.5, 1.0, 1.0));
        assert_eq!(s.score, 0.5);
    }

    #[test]
    fn type_factor_is_conditional_on_presence() {
        let real = col(vec![Typed::Cat("x".into()), Typed::Num(1.0), Typed::Missing]);
        let synth = col(vec![Typed::Cat("x".into()), Typed::Cat("x".into()), Typed::Missing]);
        let s = shape(&real, &synth);
        assert_eq!(s.presence, 1.0);
        assert_eq!(s.dtype, 0.5);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn short_numeric_columns_are_flagged() {
        let s = shape(&col(vec![Typed::Num(1.0)]), &col(vec![Typed::Num(5.0)]));
        assert!(s.undersampled);
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn ks_hand_values() {
        assert_eq!(ks_complement(&[1.0, 2.0], &[3.0, 4.0]), Some(0.0));
        assert_eq!(ks_complement(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]), Some(0.5));
        assert_eq!(ks_complement(&[1.0, 1.0], &[1.0]), Some(1.0));
        assert_eq!(ks_complement(&[], &[1.0]), None);
    }

    #[test]
    fn tv_hand_values() {
        assert_eq!(tv_complement(["a", "b"], ["a", "a"]), Some(0.5));
        assert_eq!(tv_complement(["a"], ["b"]), Some(0.0));
    }

    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
        a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_matches_brute_force(a in prop::collection::vec(0i32..6, 1..20), b in prop::collection::vec(0i32..6, 1..20)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            prop_assert!((ks_complement(&a, &b).unwrap() - (1.0 - brute_ks(&a, &b))).abs() < 1e-12);
        }

        #[test]
        fn scores_are_unit_bounded_and_reflexive(cells in prop::collection::vec(0u8..5, 1..30), other in prop::collection::vec(0u8..5, 1..30)) {
            let to = |v: &[u8]| col(v.iter().map(|c| match c {
                0 => Typed::Missing, 1 => Typed::Null, 2 => Typed::Num(f64::from(*c)),
                3 => Typed::Cat("z".into()), _ => Typed::Bool(true),
            }).collect());
            let s = shape(&to(&cells), &to(&other));
            prop_assert!((0.0..=1.0).contains(&s.score));
            prop_assert_eq!(shape(&to(&cells), &to(&cells)).score, 1.0);
        }
    }
}
