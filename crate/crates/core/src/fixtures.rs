//! Small corpora used by tests and the `synth-fixtures` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const BRANCHES: [&str; 4] = ["a", "b", "c", "d"];
pub const SIDES: [&str; 2] = ["left", "right"];

/// The eight `branch.side.val` leaf paths in fixed order.
pub fn leaf_paths() -> Vec<(&'static str, &'static str)> {
    BRANCHES
        .iter()
        .flat_map(|b| SIDES.iter().map(move |s| (*b, *s)))
        .collect()
}

/// Bernoulli parameters evenly spaced over `[0.05, 0.95]`, one per leaf path.
pub fn leaf_probabilities() -> Vec<f64> {
    (0..8).map(|i| 0.05 + 0.9 * i as f64 / 7.0).collect()
}

/// Records whose eight boolean leaves share the key names `left`, `right`
/// and `val` and differ only by branch.
pub fn pathological(n: usize, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = leaf_probabilities();
    (0..n)
        .map(|_| {
            let mut rec = serde_json::Map::new();
            for (bi, b) in BRANCHES.iter().enumerate() {
                let l = rng.gen_bool(probs[2 * bi]);
                let r = rng.gen_bool(probs[2 * bi + 1]);
                rec.insert(
                    b.to_string(),
                    json!({"left": {"val": l}, "right": {"val": r}}),
                );
            }
            Value::Object(rec)
        })
        .collect()
}

/// Fraction of `true` per leaf path; absent or non-boolean leaves count as
/// not true.
pub fn leaf_marginals(records: &[Value]) -> Vec<f64> {
    let n = records.len().max(1) as f64;
    leaf_paths()
        .iter()
        .map(|(b, s)| {
            records
                .iter()
                .filter(|r| r[b][s]["val"] == Value::Bool(true))
                .count() as f64
                / n
        })
        .collect()
}

/// Mean absolute error between generated and true leaf marginals.
pub fn marginal_mae(records: &[Value]) -> f64 {
    leaf_marginals(records)
        .iter()
        .zip(leaf_probabilities())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 8.0
}

/// Two movie records: a mixed integer/string leaf, a partially present key
/// and arrays of different lengths.
pub fn movies() -> Vec<Value> {
    vec![
        json!({"title": "Flash Gordon", "genres": ["Action", "Adventure", "Sci-Fi"], "awards": {"wins": 3, "nominations": 8}}),
        json!({"title": "Tron", "genres": ["Action", "Sci-Fi"], "awards": {"wins": "unknown"}}),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_span_the_range() {
        let p = leaf_probabilities();
        assert!((p[0] - 0.05).abs() < 1e-12 && (p[7] - 0.95).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn empirical_marginals_track_parameters() {
        let recs = pathological(5000, 0);
        assert_eq!(recs.len(), 5000);
        assert!(marginal_mae(&recs) < 0.02);
        let keys: Vec<&String> = recs[0].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["a", "b", "c", "d"]);
        assert_eq!(pathological(10, 4), pathological(10, 4));
    }

    #[test]
    fn marginals_count_true_leaves() {
        let recs = vec![
            json!({"a": {"left": {"val": true}, "right": {"val": false}}}),
            json!({"a": {"left": {"val": true}, "right": {"val": true}}}),
        ];
        let m = leaf_marginals(&recs);
        assert_eq!(&m[..2], &[1.0, 0.5]);
        assert!(m[2..].iter().all(|x| *x == 0.0));
    }
}
