//! Classifier two-sample test: how well can real and synthetic rows be told apart.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::features::encode;
use crate::flatten::flatten_all;
use crate::gbdt::{select_rows, Feature, Gbdt, GbdtParams};
use crate::typed::{type_separate, Mode, TypedTable};
use crate::EvalError;

pub const FOLDS: usize = 3;

pub fn detection_params() -> GbdtParams {
    GbdtParams { n_trees: 10, max_depth: 3, ..Default::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionReport {
    pub score: f64,
    /// Mean fold AUC before clamping.
    pub auc: f64,
    pub fold_auc: Vec<f64>,
}

/// ROC AUC by rank sums; tied scores share their mean rank.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return 0.5;
    }
    let sum: f64 = ranks.iter().zip(positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    (sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// `1 - mean(2 max(0.5, auc) - 1)`.
pub fn detection_score(fold_auc: &[f64]) -> f64 {
    let m = fold_auc.iter().map(|a| a.max(0.5) * 2.0 - 1.0).sum::<f64>() / fold_auc.len() as f64;
    1.0 - m
}

pub fn detection_c2st(real: &[Value], synth: &[Value], params: &GbdtParams, seed: u64) -> Result<DetectionReport, EvalError> {
    if real.is_empty() || synth.is_empty() {
        return Err(EvalError::Empty("detection"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = real.len().min(synth.len());
    let mut pick = |len: usize| {
        let mut v: Vec<usize> = (0..len).collect();
        v.shuffle(&mut rng);
        v.truncate(n);
        v
    };
    let (ri, si) = (pick(real.len()), pick(synth.len()));
    let real: Vec<Value> = ri.iter().map(|&i| real[i].clone()).collect();
    let synth: Vec<Value> = si.iter().map(|&i| synth[i].clone()).collect();
    let flat = flatten_all(&[&real, &synth]);
    let tables: Vec<TypedTable> = flat.iter().map(|f| type_separate(f, Mode::Evaluation)).collect();
    let enc = encode(&[&tables[0], &tables[1]], None);
    let features: Vec<Feature> = enc.tables[0]
        .iter()
        .zip(&enc.tables[1])
        .map(|(a, b)| match (a, b) {
            (Feature::Numeric(x), Feature::Numeric(y)) => Feature::Numeric(x.iter().chain(y).copied().collect()),
            (Feature::Categorical(x), Feature::Categorical(y)) => Feature::Categorical(x.iter().chain(y).copied().collect()),
            _ => unreachable!("shared layout"),
        })
        .collect();
    let labels: Vec<u32> = (0..2 * n).map(|i| u32::from(i >= n)).collect();

    // Stratified folds: each class is shuffled and dealt round-robin.
    let mut fold = vec![0usize; 2 * n];
    for class in [0..n, n..2 * n] {
        let mut rows: Vec<usize> = class.collect();
        rows.shuffle(&mut rng);
        for (k, r) in rows.into_iter().enumerate() {
            fold[r] = k % FOLDS;
        }
    }
    let mut fold_auc = Vec::with_capacity(FOLDS);
    for f in 0..FOLDS {
        let train: Vec<usize> = (0..2 * n).filter(|&r| fold[r] != f).collect();
        let test: Vec<usize> = (0..2 * n).filter(|&r| fold[r] == f).collect();
        if test.is_empty() {
            continue;
        }
        let y: Vec<u32> = train.iter().map(|&r| labels[r]).collect();
        let test_x = select_rows(&features, &test);
        let probs: Vec<f64> = match Gbdt::fit(&select_rows(&features, &train), &y, 2, params) {
            Ok(m) => m.predict_proba(&test_x).into_iter().map(|p| p[1]).collect(),
            Err(_) => vec![0.5; test.len()],
        };
        let truth: Vec<bool> = test.iter().map(|&r| labels[r] == 1).collect();
        fold_auc.push(roc_auc(&probs, &truth));
    }
    let auc = fold_auc.iter().sum::<f64>() / fold_auc.len() as f64;
    Ok(DetectionReport { score: detection_score(&fold_auc), auc, fold_auc })
}
