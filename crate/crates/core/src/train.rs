//! Training loop.
//!
//! A producer thread shuffles keys, encodes, computes mask ids and assembles
//! padded batches into a bounded queue; the loop owns the parameters.

use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::constraints::Constraints;
use crate::grammar::TransitionError;
use crate::model::{
    clip_grad_norm, loss_and_grad, loss_only, Adam, AdamConfig, Batch, LrSchedule, ModelConfig,
    ModelError, Params,
};
use crate::schema::{derive_schema, DerivedSchema, SchemaError, SchemaMaskTable};
use crate::tokenizer::{shuffle_keys, TokenStream, Tokenizer, TokenizerConfig, TokenizerError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grammar(#[from] TransitionError),
    #[error("training record {index}: target at position {position} is masked out")]
    MaskViolation { index: usize, position: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (last finite loss {last_finite:?}, grad norm {grad_norm})")]
    NonFinite {
        epoch: usize,
        step: usize,
        last_finite: Option<f64>,
        grad_norm: f64,
    },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle_keys: bool,
    pub use_masks: bool,
    pub adam: AdamConfig,
    pub warmup_steps: usize,
    pub min_lr_factor: f64,
    pub clip_norm: f64,
    /// Keep the parameters with the lowest validation loss instead of the last.
    pub best_by_valid: bool,
    pub queue_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            seed: 0,
            shuffle_keys: true,
            use_masks: true,
            adam: AdamConfig::default(),
            warmup_steps: 100,
            min_lr_factor: 0.0,
            clip_norm: 1.0,
            best_by_valid: false,
            queue_depth: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub lr: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,valid_loss,lr,grad_norm,seconds";

    pub fn csv_row(&self) -> String {
        let v = self.valid_loss.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch, self.train_loss, v, self.lr, self.grad_norm, self.seconds
        )
    }
}

/// Everything derived from the training corpus before any parameter exists.
pub struct Prepared {
    pub tokenizer: Tokenizer,
    pub schema: DerivedSchema,
    pub scaled_schema: DerivedSchema,
    pub constraints: Constraints,
    pub max_stream_len: usize,
}

impl Prepared {
    pub fn fit(corpus: &[Value], tau: usize, max_array_len: usize) -> Result<Self, TrainError> {
        let tokenizer = Tokenizer::fit(corpus, TokenizerConfig { tau, max_array_len })?;
        let schema = derive_schema(corpus, tau)?;
        let scaled_schema = schema.transform_scaled(&tokenizer.scalers)?;
        let table = SchemaMaskTable::compile(&scaled_schema, &tokenizer.vocab);
        let constraints = Constraints::new(&tokenizer.vocab, table);
        let mut max_stream_len = 0;
        for r in corpus {
            max_stream_len = max_stream_len.max(tokenizer.encode(r)?.len());
        }
        Ok(Self {
            tokenizer,
            schema,
            scaled_schema,
            constraints,
            max_stream_len,
        })
    }

    /// Streams for records the fitted artifacts can represent without a
    /// mask violation; returns the number skipped.
    pub fn encode_valid(&self, corpus: &[Value]) -> (Vec<(TokenStream, Vec<u32>)>, usize) {
        let mut out = Vec::new();
        let mut skipped = 0;
        for r in corpus {
            match self.encode_masked(r) {
                Ok(Some(x)) => out.push(x),
                _ => skipped += 1,
            }
        }
        (out, skipped)
    }

    /// `Ok(None)` when the true next token is masked out somewhere.
    fn encode_masked(&self, record: &Value) -> Result<Option<(TokenStream, Vec<u32>)>, TrainError> {
        let s = self.tokenizer.encode(record)?;
        let ids = self
            .constraints
            .sequence_mask_ids(&s, &self.tokenizer.vocab)?;
        let ok = (0..s.len() - 1).all(|t| {
            self.constraints.pool.sets[ids[t] as usize].contains(s.tokens[t + 1] as usize)
        });
        Ok(ok.then_some((s, ids)))
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub valid_skipped: usize,
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ ((epoch as u64) << 32 | batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn mean_loss(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Fits the artifacts on `train` and trains a fresh model. `model.vocab_size`
/// is overwritten and `model.max_seq_len` raised to twice the longest stream.
pub fn train(
    train: &[Value],
    valid: &[Value],
    tau: usize,
    mut model: ModelConfig,
    cfg: &TrainConfig,
    metadata: Value,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(TrainError::Config(
            "need records, a positive batch size and at least one epoch".into(),
        ));
    }
    let prep = Prepared::fit(train, tau, model.max_array_len)?;
    for (i, r) in train.iter().enumerate() {
        if prep.encode_masked(r)?.is_none() {
            let s = prep.tokenizer.encode(r)?;
            let position = prep
                .constraints
                .first_violation(&s, &prep.tokenizer.vocab)?
                .unwrap_or(0);
            return Err(TrainError::MaskViolation { index: i, position });
        }
    }
    model.vocab_size = prep.tokenizer.vocab.size();
    model.max_seq_len = model.max_seq_len.max(2 * prep.max_stream_len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: Params<f32> = Params::init(model, &mut rng)?;
    let (valid_streams, valid_skipped) = prep.encode_valid(valid);
    let valid_batches: Vec<Batch> = valid_streams
        .chunks(cfg.batch_size)
        .map(|c| {
            let streams: Vec<&TokenStream> = c.iter().map(|x| &x.0).collect();
            let ids: Vec<Vec<u32>> = c.iter().map(|x| x.1.clone()).collect();
            Batch::from_streams(&streams, cfg.use_masks.then_some(ids.as_slice()))
        })
        .collect();

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let schedule = LrSchedule {
        total_steps: steps_per_epoch * cfg.epochs,
        warmup_steps: cfg.warmup_steps,
        min_factor: cfg.min_lr_factor,
    };
    let mut adam = Adam::new(cfg.adam.clone(), params.len());
    let mut grad = vec![0.0f32; params.len()];
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let masks = cfg.use_masks.then_some(&prep.constraints.pool);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f32>)> = None;
    let mut last_finite = None;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut targets, mut norm_sum) = (0.0, 0usize, 0.0);
        let prep_ref = &prep;
        let order_ref = &order;
        let result: Result<(), TrainError> = std::thread::scope(|scope| {
            let (tx, rx) = sync_channel::<Result<Batch, TrainError>>(cfg.queue_depth.max(1));
            scope.spawn(move || {
                for (b, idx) in order_ref.chunks(cfg.batch_size).enumerate() {
                    let mut brng = ChaCha8Rng::seed_from_u64(batch_seed(cfg.seed, epoch, b));
                    let built = idx
                        .iter()
                        .map(|&i| {
                            let rec = if cfg.shuffle_keys {
                                shuffle_keys(&train[i], &mut brng)
                            } else {
                                train[i].clone()
                            };
                            let s = prep_ref.tokenizer.encode(&rec)?;
                            let ids = prep_ref
                                .constraints
                                .sequence_mask_ids(&s, &prep_ref.tokenizer.vocab)?;
                            Ok((s, ids))
                        })
                        .collect::<Result<Vec<_>, TrainError>>()
                        .map(|v| {
                            let streams: Vec<&TokenStream> = v.iter().map(|x| &x.0).collect();
                            let ids: Vec<Vec<u32>> = v.iter().map(|x| x.1.clone()).collect();
                            Batch::from_streams(&streams, cfg.use_masks.then_some(ids.as_slice()))
                        });
                    if tx.send(built).is_err() {
                        break;
                    }
                }
            });
            for batch in rx {
                let batch = batch?;
                let step = adam.steps();
                let stats = loss_and_grad(
                    &params,
                    &batch,
                    masks,
                    Some(&mut dropout_rng as &mut dyn RngCore),
                    &mut grad,
                )?;
                let norm = clip_grad_norm(&mut grad, cfg.clip_norm);
                if !stats.loss.is_finite() || !norm.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        step,
                        last_finite,
                        grad_norm: norm,
                    });
                }
                last_finite = Some(stats.loss);
                adam.update(&mut params.data, &grad, schedule.factor(step));
                loss_sum += stats.ce_sum + stats.nll_sum;
                targets += stats.n_targets;
                norm_sum += norm;
            }
            Ok(())
        });
        result?;

        let valid_loss = if valid_batches.is_empty() {
            None
        } else {
            let (mut s, mut n) = (0.0, 0usize);
            for b in &valid_batches {
                let st = loss_only(&params, b, masks)?;
                s += st.ce_sum + st.nll_sum;
                n += st.n_targets;
            }
            Some(mean_loss(s, n))
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss: mean_loss(loss_sum, targets),
            valid_loss,
            lr: cfg.adam.lr * schedule.factor(adam.steps().saturating_sub(1)),
            grad_norm: norm_sum / steps_per_epoch as f64,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        if let (true, Some(v)) = (cfg.best_by_valid, valid_loss) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.data.clone()));
            }
        }
        log.push(entry);
    }
    if let Some((_, data)) = best {
        params.data = data;
    }
    let checkpoint = Checkpoint {
        tokenizer: prep.tokenizer,
        schema: prep.schema,
        scaled_schema: prep.scaled_schema,
        params,
        max_stream_len: prep.max_stream_len,
        metadata,
    };
    Ok(TrainOutcome {
        checkpoint,
        log,
        valid_skipped,
    })
}

/// Seeded split into `(train, holdout)` with `holdout_frac` of the records held out.
pub fn split_holdout(corpus: &[Value], holdout_frac: f64, seed: u64) -> (Vec<Value>, Vec<Value>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((corpus.len() as f64) * holdout_frac).round() as usize;
    let hold = idx[..k].iter().map(|&i| corpus[i].clone()).collect();
    let rest = idx[k..].iter().map(|&i| corpus[i].clone()).collect();
    (rest, hold)
}
