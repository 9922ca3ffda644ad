//! Distance to closest record: is synthetic data nearer the training half
//! than an unseen half of the same size?

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::features::encode;
use crate::flatten::flatten_all;
use crate::gbdt::Feature;
use crate::typed::{type_separate, Mode, TypedTable};
use crate::EvalError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub score: f64,
    /// Percentage of synthetic rows closer to the training half.
    pub dcr: f64,
    /// Synthetic rows at distance zero from some training row.
    pub exact_matches: usize,
    /// The same count against the held-out half.
    pub exact_matches_test: usize,
}

pub fn dcr_score(dcr_percent: f64) -> f64 {
    1.0 - 2.0 * (dcr_percent / 100.0 - 0.5).max(0.0)
}

/// Rows in one shared space: normalized numerics plus categorical ids.
struct Space {
    num: Vec<Vec<f64>>,
    cat: Vec<Vec<Option<u32>>>,
}

impl Space {
    fn build(features: &[&[Feature]]) -> Vec<Space> {
        let width = features[0].len();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); width];
        for t in features {
            for (f, feat) in t.iter().enumerate() {
                if let Feature::Numeric(v) = feat {
                    for x in v.iter().filter(|x| !x.is_nan()) {
                        ranges[f].0 = ranges[f].0.min(*x);
                        ranges[f].1 = ranges[f].1.max(*x);
                    }
                }
            }
        }
        features
            .iter()
            .map(|t| {
                let n = t.first().map_or(0, Feature::len);
                let mut s = Space { num: vec![Vec::new(); n], cat: vec![Vec::new(); n] };
                for (f, feat) in t.iter().enumerate() {
                    match feat {
                        Feature::Numeric(v) => {
                            let (lo, hi) = ranges[f];
                            let span = if hi > lo { hi - lo } else { 1.0 };
                            for (r, x) in v.iter().enumerate() {
                                s.num[r].push(if x.is_nan() { 0.0 } else { (x - lo) / span });
                            }
                        }
                        Feature::Categorical(v) => {
                            for (r, c) in v.iter().enumerate() {
                                s.cat[r].push(*c);
                            }
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Squared distance in the one-hot space.
    fn dist2(&self, r: usize, other: &Space, q: usize) -> f64 {
        let mut d: f64 = self.num[r].iter().zip(&other.num[q]).map(|(a, b)| (a - b) * (a - b)).sum();
        for (a, b) in self.cat[r].iter().zip(&other.cat[q]) {
            d += match (a, b) {
                (Some(x), Some(y)) if x == y => 0.0,
                (Some(_), Some(_)) => 2.0,
                (None, None) => 0.0,
                _ => 1.0,
            };
        }
        d
    }

    fn nearest(&self, r: usize, other: &Space) -> f64 {
        (0..other.num.len()).map(|q| self.dist2(r, other, q)).fold(f64::INFINITY, f64::min)
    }
}

/// Ties between the two halves count half.
pub fn privacy_dcr(synth: &[Value], train: &[Value], test: &[Value]) -> Result<PrivacyReport, EvalError> {
    if synth.len() != train.len() || train.len() != test.len() {
        return Err(EvalError::SizeMismatch { synth: synth.len(), train: train.len(), test: test.len() });
    }
    if synth.is_empty() {
        return Err(EvalError::Empty("privacy"));
    }
    let flat = flatten_all(&[synth, train, test]);
    let tables: Vec<TypedTable> = flat.iter().map(|f| type_separate(f, Mode::Evaluation)).collect();
    let enc = encode(&[&tables[0], &tables[1], &tables[2]], None);
    let spaces = Space::build(&[&enc.tables[0], &enc.tables[1], &enc.tables[2]]);
    let (s, tr, te) = (&spaces[0], &spaces[1], &spaces[2]);
    let per_row: Vec<(f64, bool, bool)> = (0..synth.len())
        .into_par_iter()
        .map(|r| {
            let (a, b) = (s.nearest(r, tr), s.nearest(r, te));
            let closer = if a < b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
            (closer, a == 0.0, b == 0.0)
        })
        .collect();
    let dcr = 100.0 * per_row.iter().map(|p| p.0).sum::<f64>() / synth.len() as f64;
    let exact_matches = per_row.iter().filter(|p| p.1).count();
    let exact_matches_test = per_row.iter().filter(|p| p.2).count();
    Ok(PrivacyReport { score: dcr_score(dcr), dcr, exact_matches, exact_matches_test })
}
