//! Dual-head decoder-only transformer over token streams.
//!
//! Input embedding is the token embedding (or `x̃·v_num` for `NUM`) plus the
//! key-path position encoding: the sum of the embeddings of every element of
//! the token's path. Keys reuse the token table, array positions use a
//! separate index table. The backbone is a pre-norm causal stack; the final
//! hidden state feeds a vocabulary head and a Gaussian-mixture head.

mod batch;
mod infer;
mod mog;
mod ops;
mod optim;
mod real;
mod tape;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{Batch, MaskPool, PathRef};
pub use infer::{InferenceState, StepOutput};
pub use mog::{mog_nll, mog_nll_grad, mog_params, MogOutput, LOG_VAR_FLOOR};
pub use ops::{apply_mask, gelu, log_softmax_masked};
pub use optim::{clip_grad_norm, Adam, AdamConfig, LrSchedule};
pub use real::{linear, matmul, Op, Real};
pub use tape::{forward_hidden, loss_and_grad, loss_only, LossStats};

use crate::path::{KeyPath, PathElement};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence length {len} exceeds the maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("array index {index} exceeds the index table ({max})")]
    IndexOutOfRange { index: u32, max: usize },
    #[error("token {token} out of vocabulary range {size}")]
    TokenOutOfRange { token: u32, size: usize },
    #[error("mask at position {position} disables the target token {token}")]
    TargetMasked { position: usize, token: u32 },
    #[error("mask at position {0} enables no token")]
    EmptyMask(usize),
    #[error("non-finite loss")]
    NonFinite,
}

/// How positions enter the input embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionEncoding {
    #[default]
    KeyPath,
    /// Learned absolute position table indexed by sequence offset, in place of
    /// the path sum. Only used for the ablation.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_mixtures: usize,
    pub max_array_len: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    #[serde(default)]
    pub position: PositionEncoding,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.n_layers == 0 {
            return bad("n_layers must be at least 1");
        }
        if self.n_mixtures == 0 {
            return bad("n_mixtures must be at least 1");
        }
        if self.d_ff == 0 || self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("d_ff, vocab_size and max_seq_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_in: usize,
    pub b_in: usize,
    pub w_out: usize,
    pub b_out: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Offsets {
    pub tok_emb: usize,
    pub idx_emb: usize,
    pub pos_emb: Option<usize>,
    pub num_dir: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub w_disc: usize,
    pub b_disc: usize,
    pub w_mog: usize,
    pub b_mog: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Named tensors packed into one flat buffer.
#[derive(Clone, Debug)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
    pub(crate) off: Offsets,
    inits: Vec<Init>,
}

impl std::fmt::Debug for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Init::Normal => "normal",
            Init::Zeros => "zeros",
            Init::Ones => "ones",
        })
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut tensors = Vec::new();
        let mut inits = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorInfo {
                name,
                shape,
                offset,
            });
            inits.push(init);
            offset
        };
        let (d, f, v, k3) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, 3 * cfg.n_mixtures);
        let tok_emb = add("tok_emb".into(), vec![v, d], Init::Normal);
        let idx_emb = add(
            "idx_emb".into(),
            vec![cfg.max_array_len + 1, d],
            Init::Normal,
        );
        let pos_emb = (cfg.position == PositionEncoding::Sequential)
            .then(|| add("pos_emb".into(), vec![cfg.max_seq_len, d], Init::Normal));
        let num_dir = add("num_dir".into(), vec![d], Init::Normal);
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let mut t = |n: &str, s: Vec<usize>, i| add(format!("layers.{l}.{n}"), s, i);
                LayerOffsets {
                    ln1_g: t("ln1.gamma", vec![d], Init::Ones),
                    ln1_b: t("ln1.beta", vec![d], Init::Zeros),
                    w_qkv: t("attn.w_qkv", vec![d, 3 * d], Init::Normal),
                    b_qkv: t("attn.b_qkv", vec![3 * d], Init::Zeros),
                    w_o: t("attn.w_out", vec![d, d], Init::Normal),
                    b_o: t("attn.b_out", vec![d], Init::Zeros),
                    ln2_g: t("ln2.gamma", vec![d], Init::Ones),
                    ln2_b: t("ln2.beta", vec![d], Init::Zeros),
                    w_in: t("ffn.w_in", vec![d, f], Init::Normal),
                    b_in: t("ffn.b_in", vec![f], Init::Zeros),
                    w_out: t("ffn.w_out", vec![f, d], Init::Normal),
                    b_out: t("ffn.b_out", vec![d], Init::Zeros),
                }
            })
            .collect();
        let lnf_g = add("ln_f.gamma".into(), vec![d], Init::Ones);
        let lnf_b = add("ln_f.beta".into(), vec![d], Init::Zeros);
        let w_disc = add("head.w_disc".into(), vec![d, v], Init::Normal);
        let b_disc = add("head.b_disc".into(), vec![v], Init::Zeros);
        let w_mog = add("head.w_mog".into(), vec![d, k3], Init::Normal);
        let b_mog = add("head.b_mog".into(), vec![k3], Init::Zeros);
        let off = Offsets {
            tok_emb,
            idx_emb,
            pos_emb,
            num_dir,
            layers,
            lnf_g,
            lnf_b,
            w_disc,
            b_disc,
            w_mog,
            b_mog,
        };
        Self {
            tensors,
            total,
            off,
            inits,
        }
    }

    pub fn get(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Model weights. `T` is f32 for training and sampling, f64 for gradient checks.
#[derive(Clone, Debug)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

pub const INIT_STD: f64 = 0.02;

impl<T: Real> Params<T> {
    /// Normal(0, 0.02) for embeddings and weight matrices, zero biases, unit
    /// layer-norm gains.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut data = vec![T::zero(); layout.total];
        for (t, init) in layout.tensors.iter().zip(&layout.inits) {
            for x in &mut data[t.range()] {
                *x = match init {
                    Init::Normal => T::of(normal.sample(rng)),
                    Init::Zeros => T::zero(),
                    Init::Ones => T::one(),
                };
            }
        }
        Ok(Self {
            config,
            layout,
            data,
        })
    }

    pub fn from_data(config: ModelConfig, data: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.total {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                layout.total,
                data.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            data,
        })
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| U::of(x.f64())).collect(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.layout.get(name)?.range();
        Some(&mut self.data[r])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn slice(&self, offset: usize, len: usize) -> &[T] {
        &self.data[offset..offset + len]
    }

    /// Key-path position encoding: `Σ_i emb(e_i)`, zero for the root path.
    pub fn kvpe(&self, path: &KeyPath) -> Result<Vec<T>, ModelError> {
        let d = self.config.d_model;
        let mut out = vec![T::zero(); d];
        for e in path.elements() {
            let row = match *e {
                PathElement::Key(k) => {
                    if k as usize >= self.config.vocab_size {
                        return Err(ModelError::TokenOutOfRange {
                            token: k,
                            size: self.config.vocab_size,
                        });
                    }
                    self.layout.off.tok_emb + k as usize * d
                }
                PathElement::Index(i) => {
                    if i as usize > self.config.max_array_len {
                        return Err(ModelError::IndexOutOfRange {
                            index: i,
                            max: self.config.max_array_len,
                        });
                    }
                    self.layout.off.idx_emb + i as usize * d
                }
            };
            for (o, x) in out.iter_mut().zip(&self.data[row..row + d]) {
                *o += *x;
            }
        }
        Ok(out)
    }
}
