//! Metrics for comparing synthetic nested records against real ones.

pub mod detection;
pub mod features;
pub mod flatten;
pub mod gbdt;
pub mod privacy;
pub mod shapes;
pub mod trends;
pub mod typed;
pub mod utility;
pub mod wasserstein;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use detection::{detection_c2st, DetectionReport};
pub use flatten::{flatten, flatten_all, Cell, FlatTable};
pub use gbdt::GbdtParams;
pub use privacy::{privacy_dcr, PrivacyReport};
pub use shapes::{column_shapes, ColumnShape, ShapeReport};
pub use trends::{pair_trends, TrendReport};
pub use typed::{type_separate, Mode, TypedTable};
pub use utility::{utility_tstr, UtilityReport};
pub use wasserstein::{array_length_wasserstein, ArrayLengthReport};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("pair trends need at least two columns, got {0}")]
    TooFewColumns(usize),
    #[error("no column named {0:?}")]
    UnknownColumn(String),
    #[error("target {0:?} has a single class in the real training data")]
    SingleClass(String),
    #[error("no array at path {0:?}")]
    UnknownArray(String),
    #[error("privacy needs equal sizes; synth {synth}, train {train}, test {test}")]
    SizeMismatch { synth: usize, train: usize, test: usize },
    #[error(transparent)]
    Classifier(#[from] gbdt::GbdtError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fidelity {
    pub overall: f64,
    pub shapes: f64,
    pub trends: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub fidelity: Fidelity,
    pub utility: Option<UtilityReport>,
    pub detection: DetectionReport,
    pub privacy: Option<PrivacyReport>,
    pub array_lengths: Vec<ArrayLengthReport>,
    pub columns: Vec<ColumnShape>,
    pub rows: RowCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowCounts {
    pub real_train: usize,
    pub real_test: usize,
    pub synth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Dot path of the classification target; utility is skipped without it.
    pub target: Option<String>,
    pub seed: u64,
    pub utility: GbdtParams,
    pub detection: GbdtParams,
    pub privacy: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            target: None,
            seed: 0,
            utility: GbdtParams::default(),
            detection: detection::detection_params(),
            privacy: true,
        }
    }
}

/// Fidelity and detection compare `synth` with `real_test`; utility trains
/// on `synth` or `real_train` and tests on `real_test`; privacy compares
/// equal-size samples of all three.
pub fn evaluate(real_train: &[Value], real_test: &[Value], synth: &[Value], opts: &EvalOptions) -> Result<MetricReport, EvalError> {
    if real_test.is_empty() || synth.is_empty() {
        return Err(EvalError::Empty("evaluate"));
    }
    let flat = flatten_all(&[real_test, synth]);
    let real_t = type_separate(&flat[0], Mode::Evaluation);
    let synth_t = type_separate(&flat[1], Mode::Evaluation);
    let shapes = column_shapes(&real_t, &synth_t)?;
    let trends = pair_trends(&real_t, &synth_t, false)?;
    let utility = match &opts.target {
        Some(t) => Some(utility_tstr(synth, real_train, real_test, t, &opts.utility)?),
        None => None,
    };
    let detection = detection_c2st(real_test, synth, &opts.detection, opts.seed)?;
    let privacy = if opts.privacy && !real_train.is_empty() {
        let n = real_train.len().min(real_test.len()).min(synth.len());
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut sample = |c: &[Value]| -> Vec<Value> { c.choose_multiple(&mut rng, n).cloned().collect() };
        let (s, a, b) = (sample(synth), sample(real_train), sample(real_test));
        Some(privacy_dcr(&s, &a, &b)?)
    } else {
        None
    };
    let mut array_lengths = Vec::new();
    let mut paths = wasserstein::array_paths(real_test);
    for p in wasserstein::array_paths(synth) {
        if !paths.contains(&p) {
            paths.push(p);
        }
    }
    for p in paths {
        array_lengths.push(array_length_wasserstein(real_test, synth, &p)?);
    }
    Ok(MetricReport {
        fidelity: Fidelity { overall: (shapes.score + trends.score) / 2.0, shapes: shapes.score, trends: trends.score },
        utility,
        detection,
        privacy,
        array_lengths,
        columns: shapes.columns,
        rows: RowCounts { real_train: real_train.len(), real_test: real_test.len(), synth: synth.len() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use docsynth_core::fixtures::movies;

    #[test]
    fn movies_against_themselves() {
        let m = movies();
        let r = evaluate(&m, &m, &m, &EvalOptions::default()).unwrap();
        assert_eq!((r.fidelity.shapes, r.fidelity.trends, r.fidelity.overall), (1.0, 1.0, 1.0));
        assert_eq!(r.array_lengths[0].distance, 0.0);
        let p = r.privacy.unwrap();
        assert_eq!(p.exact_matches, 2);
    }

    #[test]
    fn empty_synth_is_an_error() {
        let m = movies();
        assert!(matches!(evaluate(&m, &m, &[], &EvalOptions::default()), Err(EvalError::Empty(_))));
    }
}
