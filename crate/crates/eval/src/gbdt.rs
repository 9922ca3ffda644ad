//! Histogram gradient-boosted trees with partition splits on categoricals.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 6, learning_rate: 0.3, lambda: 1.0, min_child_weight: 1.0, max_bins: 256 }
    }
}

/// One input column. Numeric gaps are `NaN`; categorical gaps are `None`.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Numeric(Vec<f64>),
    Categorical(Vec<Option<u32>>),
}

impl Feature {
    pub fn len(&self) -> usize {
        match self {
            Feature::Numeric(v) => v.len(),
            Feature::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Feature {
        match self {
            Feature::Numeric(v) => Feature::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Feature::Categorical(v) => Feature::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

pub fn select_rows(features: &[Feature], rows: &[usize]) -> Vec<Feature> {
    features.iter().map(|f| f.select(rows)).collect()
}

/// Bin boundaries learned on training data. Bin `b` of a numeric feature
/// holds values in `(edges[b-1], edges[b]]`; the last bin is open above.
#[derive(Clone, Debug)]
enum Binner {
    Numeric { edges: Vec<f64> },
    Categorical { n: usize },
}

impl Binner {
    fn fit(f: &Feature, max_bins: usize) -> Self {
        match f {
            Feature::Numeric(v) => {
                let mut xs: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let edges = if xs.len() <= max_bins {
                    xs
                } else {
                    let mut e: Vec<f64> =
                        (1..=max_bins).map(|i| xs[(i * xs.len() / max_bins).min(xs.len()) - 1]).collect();
                    e.dedup();
                    e
                };
                Binner::Numeric { edges }
            }
            Feature::Categorical(v) => Binner::Categorical { n: v.iter().flatten().map(|c| *c as usize + 1).max().unwrap_or(0) },
        }
    }

    /// Bins plus one slot for missing values.
    fn slots(&self) -> usize {
        match self {
            Binner::Numeric { edges } => edges.len() + 2,
            Binner::Categorical { n } => n + 1,
        }
    }

    fn missing(&self) -> u16 {
        (self.slots() - 1) as u16
    }

    fn bin_numeric(edges: &[f64], x: f64) -> usize {
        edges.partition_point(|e| *e < x)
    }

    fn apply(&self, f: &Feature) -> Vec<u16> {
        let miss = self.missing();
        match (self, f) {
            (Binner::Numeric { edges }, Feature::Numeric(v)) => {
                v.iter().map(|&x| if x.is_nan() { miss } else { Self::bin_numeric(edges, x) as u16 }).collect()
            }
            (Binner::Categorical { n }, Feature::Categorical(v)) => v
                .iter()
                .map(|c| match c {
                    Some(c) if (*c as usize) < *n => *c as u16,
                    _ => miss,
                })
                .collect(),
            _ => panic!("feature kind changed between fit and apply"),
        }
    }
}

#[derive(Clone, Debug)]
enum Rule {
    /// Left when the bin index is at most `bin`.
    Threshold { bin: u16, missing_left: bool },
    /// Left when the slot is in the set (missing included as a slot).
    Set(Vec<bool>),
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split { feature: usize, rule: Rule, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, bins: &[Vec<u16>], r: usize, missing: &[u16]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(w) => return *w,
                Node::Split { feature, rule, left, right } => {
                    let b = bins[*feature][r];
                    let go_left = match rule {
                        Rule::Threshold { bin, missing_left } => {
                            if b == missing[*feature] {
                                *missing_left
                            } else {
                                b <= *bin
                            }
                        }
                        Rule::Set(s) => s[b as usize],
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }
}

struct Best {
    gain: f64,
    feature: usize,
    rule: Rule,
}

struct Builder<'a> {
    params: &'a GbdtParams,
    bins: &'a [Vec<u16>],
    binners: &'a [Binner],
    grad: &'a [f64],
    hess: &'a [f64],
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn best_split(&self, rows: &[usize]) -> Option<Best> {
        let (gt, ht) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        let parent = self.score(gt, ht);
        let mcw = self.params.min_child_weight;
        let mut best: Option<Best> = None;
        for (f, binner) in self.binners.iter().enumerate() {
            let slots = binner.slots();
            let mut hist = vec![(0.0f64, 0.0f64); slots];
            for &r in rows {
                let e = &mut hist[self.bins[f][r] as usize];
                e.0 += self.grad[r];
                e.1 += self.hess[r];
            }
            let mut consider = |gl: f64, hl: f64, rule: &dyn Fn() -> Rule| {
                let (gr, hr) = (gt - gl, ht - hl);
                if hl < mcw || hr < mcw {
                    return;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best { gain, feature: f, rule: rule() });
                }
            };
            match binner {
                Binner::Numeric { .. } => {
                    let (gm, hm) = hist[slots - 1];
                    let (mut gl, mut hl) = (0.0, 0.0);
                    for b in 0..slots - 2 {
                        gl += hist[b].0;
                        hl += hist[b].1;
                        for missing_left in [false, true] {
                            let (g, h) = if missing_left { (gl + gm, hl + hm) } else { (gl, hl) };
                            consider(g, h, &|| Rule::Threshold { bin: b as u16, missing_left });
                        }
                    }
                }
                Binner::Categorical { .. } => {
                    let mut order: Vec<usize> = (0..slots).filter(|&c| hist[c].1 > 0.0).collect();
                    order.sort_by(|&a, &b| (hist[a].0 / hist[a].1).total_cmp(&(hist[b].0 / hist[b].1)));
                    let (mut gl, mut hl) = (0.0, 0.0);
                    for k in 0..order.len().saturating_sub(1) {
                        gl += hist[order[k]].0;
                        hl += hist[order[k]].1;
                        let prefix = &order[..=k];
                        consider(gl, hl, &|| {
                            let mut set = vec![false; slots];
                            for &c in prefix {
                                set[c] = true;
                            }
                            Rule::Set(set)
                        });
                    }
                }
            }
        }
        best
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        Node::Leaf(-g / (h + self.params.lambda) * self.params.learning_rate)
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf(0.0));
        let split = if depth < self.params.max_depth { self.best_split(&rows) } else { None };
        let Some(Best { feature, rule, .. }) = split else {
            nodes[id] = self.leaf(&rows);
            return id;
        };
        let miss = self.binners[feature].missing();
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| {
            let b = self.bins[feature][i];
            match &rule {
                Rule::Threshold { bin, missing_left } => {
                    if b == miss {
                        *missing_left
                    } else {
                        b <= *bin
                    }
                }
                Rule::Set(s) => s[b as usize],
            }
        });
        let left = self.grow(l, depth + 1, nodes);
        let right = self.grow(r, depth + 1, nodes);
        nodes[id] = Node::Split { feature, rule, left, right };
        id
    }
}

/// A fitted classifier. Binary problems use one logit; more classes use a
/// softmax with one tree per class per round.
#[derive(Clone, Debug)]
pub struct Gbdt {
    binners: Vec<Binner>,
    trees: Vec<Vec<Tree>>,
    n_classes: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GbdtError {
    #[error("training labels hold a single class")]
    SingleClass,
    #[error("feature columns and labels disagree on row count")]
    Shape,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Gbdt {
    pub fn fit(features: &[Feature], labels: &[u32], n_classes: usize, params: &GbdtParams) -> Result<Self, GbdtError> {
        let n = labels.len();
        if features.iter().any(|f| f.len() != n) {
            return Err(GbdtError::Shape);
        }
        if labels.iter().all(|l| Some(l) == labels.first()) || n_classes < 2 {
            return Err(GbdtError::SingleClass);
        }
        let binners: Vec<Binner> = features.iter().map(|f| Binner::fit(f, params.max_bins)).collect();
        let bins: Vec<Vec<u16>> = binners.iter().zip(features).map(|(b, f)| b.apply(f)).collect();
        let k = if n_classes == 2 { 1 } else { n_classes };
        let mut margin = vec![0.0; n * k];
        let mut trees = Vec::with_capacity(params.n_trees);
        let (mut grad, mut hess) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..params.n_trees {
            let probs: Vec<Vec<f64>> = (0..n)
                .map(|r| if k == 1 { vec![sigmoid(margin[r])] } else { softmax(&margin[r * k..(r + 1) * k]) })
                .collect();
            let mut round = Vec::with_capacity(k);
            for c in 0..k {
                for r in 0..n {
                    let p = probs[r][c];
                    let y = if k == 1 { f64::from(labels[r] == 1) } else { f64::from(labels[r] as usize == c) };
                    grad[r] = p - y;
                    hess[r] = (p * (1.0 - p)).max(1e-16);
                }
                let b = Builder { params, bins: &bins, binners: &binners, grad: &grad, hess: &hess };
                let mut nodes = Vec::new();
                b.grow((0..n).collect(), 0, &mut nodes);
                let tree = Tree { nodes };
                let miss: Vec<u16> = binners.iter().map(Binner::missing).collect();
                for r in 0..n {
                    margin[r * k + c] += tree.predict(&bins, r, &miss);
                }
                round.push(tree);
            }
            trees.push(round);
        }
        Ok(Self { binners, trees, n_classes })
    }

    /// Class probabilities, one row per input row.
    pub fn predict_proba(&self, features: &[Feature]) -> Vec<Vec<f64>> {
        let bins: Vec<Vec<u16>> = self.binners.iter().zip(features).map(|(b, f)| b.apply(f)).collect();
        let miss: Vec<u16> = self.binners.iter().map(Binner::missing).collect();
        let n = features.first().map_or(0, Feature::len);
        let k = if self.n_classes == 2 { 1 } else { self.n_classes };
        (0..n)
            .map(|r| {
                let mut z = vec![0.0; k];
                for round in &self.trees {
                    for (c, t) in round.iter().enumerate() {
                        z[c] += t.predict(&bins, r, &miss);
                    }
                }
                if k == 1 {
                    let p = sigmoid(z[0]);
                    vec![1.0 - p, p]
                } else {
                    softmax(&z)
                }
            })
            .collect()
    }

    pub fn predict(&self, features: &[Feature]) -> Vec<u32> {
        self.predict_proba(features)
            .into_iter()
            .map(|p| (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a))).unwrap_or(0) as u32)
            .collect()
    }
}
