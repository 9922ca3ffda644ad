//! Pairwise trend similarity over type-separated sub-columns.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::shapes::tv_complement;
use crate::typed::{union_kinds, SubColumn, SubValues, TypedTable};
use crate::EvalError;

pub const MIXED_BINS: usize = 10;
/// Fewest co-present rows for a correlation to count.
pub const MIN_CORRELATION_ROWS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairTrend {
    pub a: String,
    pub b: String,
    pub score: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendReport {
    pub score: f64,
    pub pairs: Vec<PairTrend>,
}

enum Side {
    Disc(Vec<Option<u32>>),
    Cont { values: Vec<Option<f64>>, bins: Vec<Option<u32>> },
}

impl Side {
    fn defined(&self, r: usize) -> bool {
        match self {
            Side::Disc(v) => v[r].is_some(),
            Side::Cont { values, .. } => values[r].is_some(),
        }
    }

    fn label(&self, r: usize) -> Option<u32> {
        match self {
            Side::Disc(v) => v[r],
            Side::Cont { bins, .. } => bins[r],
        }
    }
}

struct Prepared {
    name: String,
    source: usize,
    real: Side,
    synth: Side,
}

fn prepare(real: SubColumn, synth: SubColumn) -> Prepared {
    let (name, source) = (real.name, real.source);
    let (real, synth) = match (real.values, synth.values) {
        (SubValues::Discrete(a), SubValues::Discrete(b)) => {
            let mut ids: HashMap<String, u32> = HashMap::new();
            let mut intern = |v: Vec<Option<String>>| -> Vec<Option<u32>> {
                v.into_iter()
                    .map(|x| {
                        x.map(|s| {
                            let n = ids.len() as u32;
                            *ids.entry(s).or_insert(n)
                        })
                    })
                    .collect()
            };
            (Side::Disc(intern(a)), Side::Disc(intern(b)))
        }
        (SubValues::Continuous(a), SubValues::Continuous(b)) => {
            let all = a.iter().chain(&b).flatten();
            let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
            let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
            let bin = |x: f64| {
                if hi > lo {
                    (((x - lo) / (hi - lo) * MIXED_BINS as f64) as usize).min(MIXED_BINS - 1) as u32
                } else {
                    0
                }
            };
            let side = |v: Vec<Option<f64>>| Side::Cont { bins: v.iter().map(|x| x.map(bin)).collect(), values: v };
            (side(a), side(b))
        }
        _ => unreachable!("sub-columns rendered from one layout"),
    };
    Prepared { name, source, real, synth }
}

pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn co_rows(a: &Side, b: &Side, n: usize) -> Vec<usize> {
    (0..n).filter(|&r| a.defined(r) && b.defined(r)).collect()
}

/// Returns `(score, weight)`.
fn pair(a: &Prepared, b: &Prepared, n_real: usize, n_synth: usize) -> (f64, f64) {
    let rr = co_rows(&a.real, &b.real, n_real);
    let rs = co_rows(&a.synth, &b.synth, n_synth);
    let weight = (rr.len() as f64 / n_real as f64).max(rs.len() as f64 / n_synth as f64);
    if weight == 0.0 {
        return (1.0, 0.0);
    }
    if let (Side::Cont { values: ar, .. }, Side::Cont { values: br, .. }, Side::Cont { values: as_, .. }, Side::Cont { values: bs, .. }) =
        (&a.real, &b.real, &a.synth, &b.synth)
    {
        if rr.len() < MIN_CORRELATION_ROWS || rs.len() < MIN_CORRELATION_ROWS {
            return (1.0, 0.0);
        }
        let xy = |x: &[Option<f64>], y: &[Option<f64>], rows: &[usize]| -> Vec<(f64, f64)> {
            rows.iter().map(|&r| (x[r].unwrap_or_default(), y[r].unwrap_or_default())).collect()
        };
        let r_real = pearson(&xy(ar, br, &rr));
        let r_synth = pearson(&xy(as_, bs, &rs));
        return (1.0 - (r_real - r_synth).abs() / 2.0, weight);
    }
    let joint = |x: &Side, y: &Side, rows: &[usize]| -> Vec<(u32, u32)> {
        rows.iter().map(|&r| (x.label(r).unwrap_or_default(), y.label(r).unwrap_or_default())).collect()
    };
    let score = tv_complement(joint(&a.real, &b.real, &rr), joint(&a.synth, &b.synth, &rs)).unwrap_or(0.0);
    (score, weight)
}

/// Weighted mean pair score. Sub-columns rendered from the same source
/// column are not paired with each other.
pub fn pair_trends(real: &TypedTable, synth: &TypedTable, expand_all: bool) -> Result<TrendReport, EvalError> {
    if real.n_rows == 0 || synth.n_rows == 0 {
        return Err(EvalError::Empty("pair trends"));
    }
    let kinds = union_kinds(&[real, synth]);
    let cols: Vec<Prepared> = real
        .sub_columns(&kinds, expand_all)
        .into_iter()
        .zip(synth.sub_columns(&kinds, expand_all))
        .map(|(a, b)| prepare(a, b))
        .collect();
    if cols.len() < 2 {
        return Err(EvalError::TooFewColumns(cols.len()));
    }
    let idx: Vec<(usize, usize)> = (0..cols.len())
        .flat_map(|i| (i + 1..cols.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| cols[i].source != cols[j].source)
        .collect();
    let pairs: Vec<PairTrend> = idx
        .par_iter()
        .map(|&(i, j)| {
            let (score, weight) = pair(&cols[i], &cols[j], real.n_rows, synth.n_rows);
            PairTrend { a: cols[i].name.clone(), b: cols[j].name.clone(), score, weight }
        })
        .collect();
    let total: f64 = pairs.iter().map(|p| p.weight).sum();
    let score = if total > 0.0 {
        (pairs.iter().map(|p| p.weight * p.score).sum::<f64>() / total).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(TrendReport { score, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typed::{Typed, TypedColumn};

    fn table(cols: Vec<(&str, Vec<Typed>)>) -> TypedTable {
        let n_rows = cols[0].1.len();
        TypedTable {
            columns: cols
                .into_iter()
                .map(|(n, cells)| TypedColumn { name: n.into(), cells, expanded: false, is_length: false })
                .collect(),
            n_rows,
        }
    }

    fn nums(v: &[f64]) -> Vec<Typed> {
        v.iter().map(|x| Typed::Num(*x)).collect()
    }

    #[test]
    fn opposite_correlations_score_zero() {
        let real = table(vec![("x", nums(&[1.0, 2.0, 3.0])), ("y", nums(&[1.0, 2.0, 3.0]))]);
        let synth = table(vec![("x", nums(&[1.0, 2.0, 3.0])), ("y", nums(&[3.0, 2.0, 1.0]))]);
        let r = pair_trends(&real, &synth, false).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].score, 0.0);
        assert_eq!(pair_trends(&real, &real, false).unwrap().score, 1.0);
    }

    #[test]
    fn pearson_extremes() {
        assert_eq!(pearson(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]), 1.0);
        assert_eq!(pearson(&[(0.0, 1.0), (1.0, -1.0), (2.0, -3.0)]), -1.0);
    }

    #[test]
    fn never_co_present_pairs_carry_no_weight() {
        let real = table(vec![
            ("a", vec![Typed::Cat("p".into()), Typed::Missing]),
            ("b", vec![Typed::Missing, Typed::Cat("q".into())]),
        ]);
        let r = pair_trends(&real, &real, false).unwrap();
        let ab = r.pairs.iter().find(|p| p.a == "a.cat" && p.b == "b.cat").unwrap();
        assert_eq!(ab.weight, 0.0);
        assert_eq!(r.score, 1.0);
    }

    #[test]
    fn sparse_correlations_carry_no_weight() {
        let real = table(vec![("x", nums(&[1.0, 2.0])), ("y", nums(&[1.0, 2.0]))]);
        let synth = table(vec![("x", nums(&[1.0, 2.0])), ("y", nums(&[2.0, 1.0]))]);
        let r = pair_trends(&real, &synth, false).unwrap();
        assert_eq!(r.pairs[0].weight, 0.0);
    }

    #[test]
    fn mixed_pairs_bin_the_continuous_side() {
        let cats = |v: &[&str]| v.iter().map(|s| Typed::Cat(s.to_string())).collect::<Vec<_>>();
        let real = table(vec![("x", nums(&[0.0, 10.0])), ("c", cats(&["a", "b"]))]);
        let near = table(vec![("x", nums(&[0.5, 9.5])), ("c", cats(&["a", "b"]))]);
        let swapped = table(vec![("x", nums(&[0.0, 10.0])), ("c", cats(&["b", "a"]))]);
        assert_eq!(pair_trends(&real, &near, false).unwrap().score, 1.0);
        assert_eq!(pair_trends(&real, &swapped, false).unwrap().score, 0.0);
    }

    #[test]
    fn needs_two_columns() {
        let t = table(vec![("x", nums(&[1.0]))]);
        assert!(matches!(pair_trends(&t, &t, false), Err(EvalError::TooFewColumns(1))));
    }
}
