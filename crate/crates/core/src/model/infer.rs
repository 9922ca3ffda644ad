//! Incremental decoding with a key/value cache. All rows of a batch advance
//! in lockstep, one position per call.

use super::ops::{gelu, layer_norm};
use super::real::{linear, Real};
use super::{ModelError, Params};
use crate::path::{KeyPath, PathElement};
use crate::tokenizer::{TokenId, NUM};

pub struct StepOutput<T> {
    /// `rows × |V|` vocabulary logits.
    pub logits: Vec<T>,
    /// `rows × 3K` mixture-head projections.
    pub mog: Vec<T>,
}

pub struct InferenceState<'a, T> {
    params: &'a Params<T>,
    rows: usize,
    max_len: usize,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    t: usize,
}

impl<'a, T: Real> InferenceState<'a, T> {
    pub fn new(params: &'a Params<T>, rows: usize, max_len: usize) -> Self {
        let cfg = &params.config;
        let size = rows * cfg.n_heads * max_len * cfg.head_dim();
        Self {
            params,
            rows,
            max_len,
            keys: vec![vec![T::zero(); size]; cfg.n_layers],
            values: vec![vec![T::zero(); size]; cfg.n_layers],
            t: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Feeds one token per row at the current position.
    pub fn step(
        &mut self,
        tokens: &[TokenId],
        paths: &[&KeyPath],
        cont: &[f64],
    ) -> Result<StepOutput<T>, ModelError> {
        let p = self.params;
        let cfg = &p.config;
        let off = &p.layout.off;
        let (n, d, f, heads, dh) = (
            self.rows,
            cfg.d_model,
            cfg.d_ff,
            cfg.n_heads,
            cfg.head_dim(),
        );
        let t = self.t;
        let limit = self.max_len.min(cfg.max_seq_len);
        if t >= limit {
            return Err(ModelError::SequenceTooLong {
                len: t + 1,
                max: limit,
            });
        }
        let mut x = vec![T::zero(); n * d];
        for r in 0..n {
            let row = &mut x[r * d..(r + 1) * d];
            let tok = tokens[r];
            if tok as usize >= cfg.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    token: tok,
                    size: cfg.vocab_size,
                });
            }
            if tok == NUM {
                let c = T::of(cont[r]);
                row.iter_mut()
                    .zip(p.slice(off.num_dir, d))
                    .for_each(|(o, v)| *o += *v * c);
            } else {
                row.iter_mut()
                    .zip(p.slice(off.tok_emb + tok as usize * d, d))
                    .for_each(|(o, v)| *o += *v);
            }
            for e in paths[r].elements().iter().filter(|_| off.pos_emb.is_none()) {
                let src = match *e {
                    PathElement::Key(k) => off.tok_emb + k as usize * d,
                    PathElement::Index(i) => {
                        if i as usize > cfg.max_array_len {
                            return Err(ModelError::IndexOutOfRange {
                                index: i,
                                max: cfg.max_array_len,
                            });
                        }
                        off.idx_emb + i as usize * d
                    }
                };
                row.iter_mut()
                    .zip(p.slice(src, d))
                    .for_each(|(o, v)| *o += *v);
            }
            if let Some(pe) = off.pos_emb {
                row.iter_mut()
                    .zip(p.slice(pe + t * d, d))
                    .for_each(|(o, v)| *o += *v);
            }
        }
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (mut xn, mut xhat, mut rstd) = (
            vec![T::zero(); n * d],
            vec![T::zero(); n * d],
            vec![T::zero(); n],
        );
        let mut qkv = vec![T::zero(); n * 3 * d];
        let mut ctx = vec![T::zero(); n * d];
        let mut a = vec![T::zero(); n * d];
        let mut u = vec![T::zero(); n * f];
        let mut scores = vec![T::zero(); t + 1];
        for (l, lo) in off.layers.iter().enumerate() {
            layer_norm(
                &x,
                n,
                p.slice(lo.ln1_g, d),
                p.slice(lo.ln1_b, d),
                &mut xn,
                &mut xhat,
                &mut rstd,
            );
            linear(
                &xn,
                n,
                p.slice(lo.w_qkv, d * 3 * d),
                p.slice(lo.b_qkv, 3 * d),
                &mut qkv,
            );
            let (kc, vc) = (&mut self.keys[l], &mut self.values[l]);
            for r in 0..n {
                for h in 0..heads {
                    let base = ((r * heads + h) * self.max_len) * dh;
                    let src = r * 3 * d + h * dh;
                    kc[base + t * dh..base + (t + 1) * dh]
                        .copy_from_slice(&qkv[src + d..src + d + dh]);
                    vc[base + t * dh..base + (t + 1) * dh]
                        .copy_from_slice(&qkv[src + 2 * d..src + 2 * d + dh]);
                    let q = &qkv[src..src + dh];
                    let mut m = T::neg_infinity();
                    for (j, s) in scores.iter_mut().enumerate() {
                        let k = &kc[base + j * dh..base + (j + 1) * dh];
                        *s = q.iter().zip(k).map(|(a, b)| *a * *b).sum::<T>() * scale;
                        m = m.max(*s);
                    }
                    let mut z = T::zero();
                    for s in scores.iter_mut() {
                        *s = (*s - m).exp();
                        z += *s;
                    }
                    let out = &mut ctx[r * d + h * dh..r * d + (h + 1) * dh];
                    out.iter_mut().for_each(|o| *o = T::zero());
                    for (j, s) in scores.iter().enumerate() {
                        let w = *s / z;
                        let v = &vc[base + j * dh..base + (j + 1) * dh];
                        out.iter_mut().zip(v).for_each(|(o, v)| *o += *v * w);
                    }
                }
            }
            linear(&ctx, n, p.slice(lo.w_o, d * d), p.slice(lo.b_o, d), &mut a);
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += *a);
            layer_norm(
                &x,
                n,
                p.slice(lo.ln2_g, d),
                p.slice(lo.ln2_b, d),
                &mut xn,
                &mut xhat,
                &mut rstd,
            );
            linear(&xn, n, p.slice(lo.w_in, d * f), p.slice(lo.b_in, f), &mut u);
            u.iter_mut().for_each(|v| *v = gelu(*v));
            linear(
                &u,
                n,
                p.slice(lo.w_out, f * d),
                p.slice(lo.b_out, d),
                &mut a,
            );
            x.iter_mut().zip(&a).for_each(|(x, a)| *x += *a);
        }
        layer_norm(
            &x,
            n,
            p.slice(off.lnf_g, d),
            p.slice(off.lnf_b, d),
            &mut xn,
            &mut xhat,
            &mut rstd,
        );
        let (v, k3) = (cfg.vocab_size, 3 * cfg.n_mixtures);
        let mut logits = vec![T::zero(); n * v];
        linear(
            &xn,
            n,
            p.slice(off.w_disc, d * v),
            p.slice(off.b_disc, v),
            &mut logits,
        );
        let mut mog = vec![T::zero(); n * k3];
        linear(
            &xn,
            n,
            p.slice(off.w_mog, d * k3),
            p.slice(off.b_mog, k3),
            &mut mog,
        );
        self.t += 1;
        Ok(StepOutput { logits, mog })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_config;
    use super::super::{forward_hidden, Batch, PositionEncoding};
    use super::*;
    use crate::tokenizer::{Tokenizer, TokenizerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    #[test]
    fn cached_steps_match_full_forward() {
        let corpus = vec![
            json!({"a": [1, 2], "b": {"c": 3.5}}),
            json!({"a": [], "b": {"c": -1.0}}),
        ];
        let tok = Tokenizer::fit(
            &corpus,
            TokenizerConfig {
                tau: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let s = tok.encode(&corpus[0]).unwrap();
        for position in [PositionEncoding::KeyPath, PositionEncoding::Sequential] {
            let mut cfg = tiny_config(tok.vocab.size());
            cfg.position = position;
            let p: Params<f64> = Params::init(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let hf = forward_hidden(&p, &Batch::from_streams(&[&s], None)).unwrap();
            let (d, v) = (p.config.d_model, p.config.vocab_size);
            let (w, bias) = (
                p.tensor("head.w_disc").unwrap(),
                p.tensor("head.b_disc").unwrap(),
            );
            let mut st = InferenceState::new(&p, 1, s.len());
            for t in 0..s.len() {
                let out = st
                    .step(
                        &[s.tokens[t]],
                        &[&s.paths[t]],
                        &[s.continuous[t].unwrap_or(0.0)],
                    )
                    .unwrap();
                let mut want = vec![0.0; v];
                linear(&hf[t * d..(t + 1) * d], 1, w, bias, &mut want);
                for (a, b) in out.logits.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-10, "{position:?} t={t}");
                }
            }
            assert!(st.step(&[0], &[&KeyPath::root()], &[0.0]).is_err());
        }
    }
}
