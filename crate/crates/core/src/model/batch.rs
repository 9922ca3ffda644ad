use fixedbitset::FixedBitSet;

use crate::path::PathElement;
use crate::tokenizer::{TokenId, TokenStream, NUM, PAD};

/// Distinct constraint masks, each with its enabled ids listed for fast
/// masked softmax.
#[derive(Clone, Debug, Default)]
pub struct MaskPool {
    pub sets: Vec<FixedBitSet>,
    pub lists: Vec<Vec<u32>>,
}

impl MaskPool {
    pub fn push(&mut self, set: FixedBitSet) -> u32 {
        self.lists.push(set.ones().map(|i| i as u32).collect());
        self.sets.push(set);
        (self.sets.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Row of an embedding table added into a position's encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathRef {
    Key(u32),
    Index(u32),
}

/// Left-padded batch of token streams with next-token targets.
///
/// Position `t` of row `r` lives at `r * len + t`. The target at a position is
/// the following token, `PAD` where there is none.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub rows: usize,
    pub len: usize,
    pub tokens: Vec<TokenId>,
    pub pad: Vec<usize>,
    /// `path_refs[path_off[i]..path_off[i + 1]]` is the path of position `i`.
    pub path_off: Vec<u32>,
    pub path_refs: Vec<PathRef>,
    /// Standardized value for `NUM` inputs, 0 elsewhere.
    pub cont: Vec<f64>,
    pub targets: Vec<TokenId>,
    pub target_cont: Vec<f64>,
    /// Constraint mask per position; empty when training unmasked.
    pub mask_ids: Vec<u32>,
}

impl Batch {
    /// `mask_ids[s][t]` is the mask governing token `t + 1` of stream `s`.
    pub fn from_streams(streams: &[&TokenStream], mask_ids: Option<&[Vec<u32>]>) -> Batch {
        let rows = streams.len();
        let len = streams.iter().map(|s| s.len()).max().unwrap_or(0);
        let n = rows * len;
        let mut b = Batch {
            rows,
            len,
            tokens: vec![PAD; n],
            pad: Vec::with_capacity(rows),
            path_off: Vec::with_capacity(n + 1),
            path_refs: Vec::new(),
            cont: vec![0.0; n],
            targets: vec![PAD; n],
            target_cont: vec![0.0; n],
            mask_ids: if mask_ids.is_some() {
                vec![0; n]
            } else {
                Vec::new()
            },
        };
        b.path_off.push(0);
        for (r, s) in streams.iter().enumerate() {
            let pad = len - s.len();
            b.pad.push(pad);
            for _ in 0..pad {
                b.path_off.push(b.path_refs.len() as u32);
            }
            for t in 0..s.len() {
                let i = r * len + pad + t;
                b.tokens[i] = s.tokens[t];
                if let Some(x) = s.continuous[t] {
                    b.cont[i] = x;
                }
                for e in s.paths[t].elements() {
                    b.path_refs.push(match *e {
                        PathElement::Key(k) => PathRef::Key(k),
                        PathElement::Index(j) => PathRef::Index(j),
                    });
                }
                b.path_off.push(b.path_refs.len() as u32);
                if t + 1 < s.len() {
                    b.targets[i] = s.tokens[t + 1];
                    if s.tokens[t + 1] == NUM {
                        b.target_cont[i] = s.continuous[t + 1].unwrap_or(0.0);
                    }
                    if let Some(m) = mask_ids {
                        b.mask_ids[i] = m[r][t];
                    }
                }
            }
        }
        b
    }

    pub fn positions(&self) -> usize {
        self.rows * self.len
    }

    pub fn path(&self, i: usize) -> &[PathRef] {
        &self.path_refs[self.path_off[i] as usize..self.path_off[i + 1] as usize]
    }

    pub fn n_targets(&self) -> usize {
        self.targets.iter().filter(|t| **t != PAD).count()
    }

    pub fn n_numeric_targets(&self) -> usize {
        self.targets.iter().filter(|t| **t == NUM).count()
    }
}
