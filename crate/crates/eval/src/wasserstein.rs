//! Wasserstein-1 distance between array-length distributions.

use serde::Serialize;
use serde_json::Value;

use crate::EvalError;

/// W1 between two empirical distributions by integrating the CDF gap.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = a.iter().chain(&b).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    for w in xs.windows(2) {
        while i < a.len() && a[i] <= w[0] {
            i += 1;
        }
        while j < b.len() && b[j] <= w[0] {
            j += 1;
        }
        total += (i as f64 / na - j as f64 / nb).abs() * (w[1] - w[0]);
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrayLengthReport {
    pub path: String,
    /// Absent arrays count as length 0.
    pub distance: f64,
    /// Only arrays that are present.
    pub present_only: f64,
}

/// Lengths at a dot path; `*` steps into every array element. A record that
/// lacks the array contributes `None`.
fn lengths(v: &Value, path: &[&str], out: &mut Vec<Option<usize>>, seen: &mut bool) {
    match path.split_first() {
        None => match v {
            Value::Array(a) => {
                *seen = true;
                out.push(Some(a.len()));
            }
            _ => out.push(None),
        },
        Some((&"*", rest)) => match v {
            Value::Array(items) if !items.is_empty() => items.iter().for_each(|x| lengths(x, rest, out, seen)),
            _ => out.push(None),
        },
        Some((k, rest)) => match v.get(*k) {
            Some(x) => lengths(x, rest, out, seen),
            None => out.push(None),
        },
    }
}

pub fn array_length_wasserstein(real: &[Value], synth: &[Value], path: &str) -> Result<ArrayLengthReport, EvalError> {
    let steps: Vec<&str> = if path.is_empty() { Vec::new() } else { path.split('.').collect() };
    let mut seen = false;
    let collect = |corpus: &[Value], seen: &mut bool| {
        let mut out = Vec::new();
        for r in corpus {
            lengths(r, &steps, &mut out, seen);
        }
        out
    };
    let (lr, ls) = (collect(real, &mut seen), collect(synth, &mut seen));
    if !seen {
        return Err(EvalError::UnknownArray(path.to_string()));
    }
    let all = |v: &[Option<usize>]| v.iter().map(|x| x.unwrap_or(0) as f64).collect::<Vec<_>>();
    let present = |v: &[Option<usize>]| v.iter().flatten().map(|x| *x as f64).collect::<Vec<_>>();
    Ok(ArrayLengthReport {
        path: path.to_string(),
        distance: wasserstein_1d(&all(&lr), &all(&ls)),
        present_only: wasserstein_1d(&present(&lr), &present(&ls)),
    })
}

/// Array paths in schema form (`*` for element steps), in first-seen order.
pub fn array_paths(corpus: &[Value]) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
        let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(x, &join(k), out)),
            Value::Array(items) => {
                if !out.iter().any(|p| p == prefix) {
                    out.push(prefix.to_string());
                }
                items.iter().for_each(|x| walk(x, &join("*"), out));
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    corpus.iter().for_each(|r| walk(r, "", &mut out));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use docsynth_core::fixtures::movies;
    use proptest::prelude::*;
    use serde_json::json;

    fn arrs(lens: &[usize]) -> Vec<Value> {
        lens.iter().map(|n| json!({"a": vec![0; *n]})).collect()
    }

    #[test]
    fn hand_values() {
        assert_eq!(array_length_wasserstein(&arrs(&[1, 2, 3]), &arrs(&[2, 3, 4]), "a").unwrap().distance, 1.0);
        assert_eq!(array_length_wasserstein(&arrs(&[2, 2]), &arrs(&[5, 5, 5]), "a").unwrap().distance, 3.0);
        assert_eq!(array_length_wasserstein(&arrs(&[3, 1, 2]), &arrs(&[1, 2, 3]), "a").unwrap().distance, 0.0);
    }

    #[test]
    fn absent_arrays_count_as_empty() {
        let real = arrs(&[2, 2]);
        let synth = vec![json!({"a": [0, 0]}), json!({})];
        let r = array_length_wasserstein(&real, &synth, "a").unwrap();
        assert_eq!((r.distance, r.present_only), (1.0, 0.0));
    }

    #[test]
    fn nested_and_unknown_paths() {
        let c = vec![json!({"m": [{"r": [1]}, {"r": [1, 2, 3]}]})];
        assert_eq!(array_paths(&c), ["m", "m.*.r"]);
        assert_eq!(array_length_wasserstein(&c, &c, "m.*.r").unwrap().distance, 0.0);
        assert!(matches!(array_length_wasserstein(&c, &c, "m.x"), Err(EvalError::UnknownArray(_))));
    }

    #[test]
    fn movie_genres() {
        let m = movies();
        let r = array_length_wasserstein(&m, &m[1..], "genres").unwrap();
        assert_eq!(r.distance, 0.5);
    }

    proptest! {
        #[test]
        fn symmetric_and_shift_equivariant(a in prop::collection::vec(0u8..20, 1..30), b in prop::collection::vec(0u8..20, 1..30), k in 0u8..5) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            prop_assert!((wasserstein_1d(&a, &b) - wasserstein_1d(&b, &a)).abs() < 1e-9);
            let shifted: Vec<f64> = a.iter().map(|x| x + f64::from(k)).collect();
            prop_assert!((wasserstein_1d(&a, &shifted) - f64::from(k)).abs() < 1e-9);
        }
    }
}
