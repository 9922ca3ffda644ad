//! Train-on-synthetic, test-on-real classification utility.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use serde_json::Value;

use crate::features::encode;
use crate::flatten::flatten_all;
use crate::gbdt::{select_rows, Feature, Gbdt, GbdtError, GbdtParams};
use crate::typed::{discrete_label, type_separate, Mode, TypedTable};
use crate::EvalError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilityReport {
    pub score: f64,
    pub tstr_f1: f64,
    pub trtr_f1: f64,
    pub target: String,
}

/// Support-weighted F1 over the classes present in `truth`.
pub fn weighted_f1(truth: &[u32], pred: &[u32]) -> f64 {
    let mut support: BTreeMap<u32, (f64, f64, f64)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        let e = support.entry(t).or_default();
        e.0 += 1.0;
        if t == p {
            e.1 += 1.0;
        }
    }
    let mut predicted: HashMap<u32, f64> = HashMap::new();
    for &p in pred {
        *predicted.entry(p).or_default() += 1.0;
    }
    let n = truth.len() as f64;
    support
        .iter()
        .map(|(c, &(sup, tp, _))| {
            let pc = predicted.get(c).copied().unwrap_or(0.0);
            let f1 = if sup + pc > 0.0 { 2.0 * tp / (sup + pc) } else { 0.0 };
            f1 * sup / n
        })
        .sum()
}

/// Labels of the target column and the rows where it is present.
fn labels(t: &TypedTable, col: usize, ids: &mut HashMap<String, u32>) -> (Vec<usize>, Vec<u32>) {
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (r, c) in t.columns[col].cells.iter().enumerate() {
        if let Some(l) = discrete_label(c) {
            let n = ids.len() as u32;
            rows.push(r);
            ys.push(*ids.entry(l).or_insert(n));
        }
    }
    (rows, ys)
}

fn fit_predict(x: &[Feature], y: &[u32], k: usize, test: &[Feature], params: &GbdtParams) -> Result<Vec<u32>, EvalError> {
    match Gbdt::fit(x, y, k, params) {
        Ok(m) => Ok(m.predict(test)),
        Err(GbdtError::SingleClass) if !y.is_empty() => Ok(vec![y[0]; test.first().map_or(0, Feature::len)]),
        Err(e) => Err(e.into()),
    }
}

pub fn utility_tstr(
    synth: &[Value],
    real_train: &[Value],
    real_test: &[Value],
    target: &str,
    params: &GbdtParams,
) -> Result<UtilityReport, EvalError> {
    if synth.is_empty() || real_train.is_empty() || real_test.is_empty() {
        return Err(EvalError::Empty("utility"));
    }
    let flat = flatten_all(&[synth, real_train, real_test]);
    let tables: Vec<TypedTable> = flat.iter().map(|f| type_separate(f, Mode::Evaluation)).collect();
    let col = tables[0]
        .columns
        .iter()
        .position(|c| c.name == target && !c.is_length)
        .ok_or_else(|| EvalError::UnknownColumn(target.to_string()))?;
    let mut ids = HashMap::new();
    let (rows_s, y_s) = labels(&tables[0], col, &mut ids);
    let (rows_r, y_r) = labels(&tables[1], col, &mut ids);
    let (rows_t, y_t) = labels(&tables[2], col, &mut ids);
    if y_r.iter().all(|y| Some(y) == y_r.first()) {
        return Err(EvalError::SingleClass(target.to_string()));
    }
    let enc = encode(&[&tables[0], &tables[1], &tables[2]], Some(col));
    let k = ids.len();
    let test = select_rows(&enc.tables[2], &rows_t);
    let trtr = fit_predict(&select_rows(&enc.tables[1], &rows_r), &y_r, k, &test, params)?;
    let tstr = if y_s.is_empty() {
        vec![u32::MAX; y_t.len()]
    } else {
        fit_predict(&select_rows(&enc.tables[0], &rows_s), &y_s, k, &test, params)?
    };
    let (trtr_f1, tstr_f1) = (weighted_f1(&y_t, &trtr), weighted_f1(&y_t, &tstr));
    let score = if trtr_f1 > 0.0 { (tstr_f1 / trtr_f1).min(1.0) } else { 0.0 };
    Ok(UtilityReport { score, tstr_f1, trtr_f1, target: target.to_string() })
}
