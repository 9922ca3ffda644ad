//! Batched training forward pass with cached activations, and its backward.

use rand::RngCore;

use super::batch::{Batch, MaskPool, PathRef};
use super::mog::mog_nll_grad;
use super::ops::{gelu_with_grad, layer_norm, layer_norm_backward, log_softmax_masked};
use super::real::{linear, linear_backward, matmul, matmul_ld, Op, Real};
use super::{LayerOffsets, ModelError, Params};
use crate::tokenizer::{NUM, PAD};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    /// `(Σ CE + Σ NLL) / n_targets`, i.e. `L_CE + λ·L_NLL` with
    /// `λ = n_numeric / n_targets`.
    pub loss: f64,
    pub ce_sum: f64,
    pub nll_sum: f64,
    pub n_targets: usize,
    pub n_numeric: usize,
}

struct LayerTape<T> {
    x: Vec<T>,
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    xn1: Vec<T>,
    qkv: Vec<T>,
    probs: Vec<T>,
    att_keep: Vec<T>,
    ctx: Vec<T>,
    keep1: Vec<T>,
    z: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    zn: Vec<T>,
    /// Pre-activation on input, GELU derivative after the forward pass.
    u: Vec<T>,
    g: Vec<T>,
    keep2: Vec<T>,
}

struct Tape<T> {
    layers: Vec<LayerTape<T>>,
    xhat_f: Vec<T>,
    rstd_f: Vec<T>,
    hf: Vec<T>,
}

fn keep_mask<T: Real>(n: usize, p: f64, rng: &mut Option<&mut dyn RngCore>) -> Vec<T> {
    match rng {
        Some(r) if p > 0.0 => {
            let scale = T::of(1.0 / (1.0 - p));
            let threshold = (p * u32::MAX as f64) as u32;
            (0..n)
                .map(|_| {
                    if r.next_u32() < threshold {
                        T::zero()
                    } else {
                        scale
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn check_batch<T: Real>(p: &Params<T>, b: &Batch) -> Result<(), ModelError> {
    let cfg = &p.config;
    if b.len > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: b.len,
            max: cfg.max_seq_len,
        });
    }
    for &t in b.tokens.iter().chain(&b.targets) {
        if t as usize >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                token: t,
                size: cfg.vocab_size,
            });
        }
    }
    for r in &b.path_refs {
        match *r {
            PathRef::Key(k) if k as usize >= cfg.vocab_size => {
                return Err(ModelError::TokenOutOfRange {
                    token: k,
                    size: cfg.vocab_size,
                })
            }
            PathRef::Index(i) if i as usize > cfg.max_array_len => {
                return Err(ModelError::IndexOutOfRange {
                    index: i,
                    max: cfg.max_array_len,
                })
            }
            _ => {}
        }
    }
    Ok(())
}

fn add_row<T: Real>(dst: &mut [T], src: &[T], scale: T) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s * scale;
    }
}

fn embed<T: Real>(p: &Params<T>, b: &Batch) -> Vec<T> {
    let d = p.config.d_model;
    let off = &p.layout.off;
    let mut h = vec![T::zero(); b.positions() * d];
    for i in 0..b.positions() {
        let row = &mut h[i * d..(i + 1) * d];
        let tok = b.tokens[i];
        if tok == NUM {
            add_row(row, p.slice(off.num_dir, d), T::of(b.cont[i]));
        } else {
            add_row(row, p.slice(off.tok_emb + tok as usize * d, d), T::one());
        }
        for r in b.path(i).iter().filter(|_| off.pos_emb.is_none()) {
            let src = match *r {
                PathRef::Key(k) => off.tok_emb + k as usize * d,
                PathRef::Index(j) => off.idx_emb + j as usize * d,
            };
            add_row(row, p.slice(src, d), T::one());
        }
        if let Some(pe) = off.pos_emb {
            let (r, t) = (i / b.len, i % b.len);
            if t >= b.pad[r] {
                add_row(row, p.slice(pe + (t - b.pad[r]) * d, d), T::one());
            }
        }
    }
    h
}

fn embed_backward<T: Real>(p: &Params<T>, b: &Batch, dh: &[T], grad: &mut [T]) {
    let d = p.config.d_model;
    let off = &p.layout.off;
    for i in 0..b.positions() {
        let g = &dh[i * d..(i + 1) * d];
        let tok = b.tokens[i];
        if tok == NUM {
            add_row(&mut grad[off.num_dir..off.num_dir + d], g, T::of(b.cont[i]));
        } else {
            let o = off.tok_emb + tok as usize * d;
            add_row(&mut grad[o..o + d], g, T::one());
        }
        for r in b.path(i).iter().filter(|_| off.pos_emb.is_none()) {
            let o = match *r {
                PathRef::Key(k) => off.tok_emb + k as usize * d,
                PathRef::Index(j) => off.idx_emb + j as usize * d,
            };
            add_row(&mut grad[o..o + d], g, T::one());
        }
        if let Some(pe) = off.pos_emb {
            let (r, t) = (i / b.len, i % b.len);
            if t >= b.pad[r] {
                let o = pe + (t - b.pad[r]) * d;
                add_row(&mut grad[o..o + d], g, T::one());
            }
        }
    }
}

/// Causal multi-head attention over `qkv` (N×3d). Pad keys are excluded and
/// pad queries produce zeros. Per row and head, `probs` holds the unpadded
/// `l×l` block contiguously at offset `(r·heads + h)·len²`.
fn attention<T: Real>(
    qkv: &[T],
    b: &Batch,
    heads: usize,
    d: usize,
    probs: &mut [T],
    keep: &[T],
    ctx: &mut [T],
) {
    let (len, dh) = (b.len, d / heads);
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dropped = vec![T::zero(); if keep.is_empty() { 0 } else { len * len }];
    for r in 0..b.rows {
        let pad = b.pad[r];
        let l = len - pad;
        let base = (r * len + pad) * 3 * d;
        for h in 0..heads {
            for i in 0..pad {
                ctx[(r * len + i) * d + h * dh..][..dh]
                    .iter_mut()
                    .for_each(|x| *x = T::zero());
            }
            if l == 0 {
                continue;
            }
            let pbase = (r * heads + h) * len * len;
            let p = &mut probs[pbase..pbase + l * l];
            let q = Op::strided(&qkv[base + h * dh..], l, dh, 3 * d);
            let k = Op::strided(&qkv[base + d + h * dh..], l, dh, 3 * d);
            matmul(q, k.tr(), p, false);
            for i in 0..l {
                let row = &mut p[i * l..(i + 1) * l];
                let m = row[..=i].iter().fold(T::neg_infinity(), |a, x| a.max(*x));
                let mut z = T::zero();
                for s in &mut row[..=i] {
                    *s = ((*s - m) * scale).exp();
                    z += *s;
                }
                let inv = T::one() / z;
                row[..=i].iter_mut().for_each(|s| *s *= inv);
                row[i + 1..].iter_mut().for_each(|s| *s = T::zero());
            }
            let pm: &[T] = if keep.is_empty() {
                p
            } else {
                for ((o, x), k) in dropped
                    .iter_mut()
                    .zip(p.iter())
                    .zip(&keep[pbase..pbase + l * l])
                {
                    *o = *x * *k;
                }
                &dropped[..l * l]
            };
            let v = Op::strided(&qkv[base + 2 * d + h * dh..], l, dh, 3 * d);
            matmul_ld(
                Op::n(pm, l, l),
                v,
                &mut ctx[(r * len + pad) * d + h * dh..],
                d,
                false,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Real>(
    qkv: &[T],
    b: &Batch,
    heads: usize,
    d: usize,
    probs: &[T],
    keep: &[T],
    dctx: &[T],
    dqkv: &mut [T],
) {
    let (len, dh) = (b.len, d / heads);
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut dp = vec![T::zero(); len * len];
    let mut dropped = vec![T::zero(); if keep.is_empty() { 0 } else { len * len }];
    dqkv.iter_mut().for_each(|x| *x = T::zero());
    for r in 0..b.rows {
        let pad = b.pad[r];
        let l = len - pad;
        if l == 0 {
            continue;
        }
        let base = (r * len + pad) * 3 * d;
        for h in 0..heads {
            let pbase = (r * heads + h) * len * len;
            let p = &probs[pbase..pbase + l * l];
            let kp = if keep.is_empty() {
                &[][..]
            } else {
                &keep[pbase..pbase + l * l]
            };
            let dc = Op::strided(&dctx[(r * len + pad) * d + h * dh..], l, dh, d);
            let q = Op::strided(&qkv[base + h * dh..], l, dh, 3 * d);
            let k = Op::strided(&qkv[base + d + h * dh..], l, dh, 3 * d);
            let v = Op::strided(&qkv[base + 2 * d + h * dh..], l, dh, 3 * d);
            let dp = &mut dp[..l * l];
            matmul(dc, v.tr(), dp, false);
            let pm: &[T] = if kp.is_empty() {
                p
            } else {
                for ((o, x), k) in dropped.iter_mut().zip(p).zip(kp) {
                    *o = *x * *k;
                }
                &dropped[..l * l]
            };
            matmul_ld(
                Op::n(pm, l, l).tr(),
                dc,
                &mut dqkv[base + 2 * d + h * dh..],
                3 * d,
                false,
            );
            for i in 0..l {
                let (pr, dr) = (&p[i * l..(i + 1) * l], &mut dp[i * l..(i + 1) * l]);
                if !kp.is_empty() {
                    dr.iter_mut()
                        .zip(&kp[i * l..(i + 1) * l])
                        .for_each(|(g, k)| *g *= *k);
                }
                let dot = pr[..=i]
                    .iter()
                    .zip(&dr[..=i])
                    .map(|(a, b)| *a * *b)
                    .sum::<T>();
                for (g, pv) in dr[..=i].iter_mut().zip(&pr[..=i]) {
                    *g = *pv * (*g - dot) * scale;
                }
                dr[i + 1..].iter_mut().for_each(|g| *g = T::zero());
            }
            let ds = Op::n(&dp[..], l, l);
            matmul_ld(ds, k, &mut dqkv[base + h * dh..], 3 * d, false);
            matmul_ld(ds.tr(), q, &mut dqkv[base + d + h * dh..], 3 * d, false);
        }
    }
}

fn run_forward<T: Real>(
    p: &Params<T>,
    b: &Batch,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Tape<T>, ModelError> {
    check_batch(p, b)?;
    let cfg = &p.config;
    let (n, d, f, heads) = (b.positions(), cfg.d_model, cfg.d_ff, cfg.n_heads);
    let drop = cfg.dropout;
    let mut x = embed(p, b);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lo in &p.layout.off.layers {
        let lo: &LayerOffsets = lo;
        let mut t = LayerTape {
            x: Vec::new(),
            xhat1: vec![T::zero(); n * d],
            rstd1: vec![T::zero(); n],
            xn1: vec![T::zero(); n * d],
            qkv: vec![T::zero(); n * 3 * d],
            probs: vec![T::zero(); b.rows * heads * b.len * b.len],
            att_keep: keep_mask(b.rows * heads * b.len * b.len, drop, &mut rng),
            ctx: vec![T::zero(); n * d],
            keep1: keep_mask(n * d, drop, &mut rng),
            z: vec![T::zero(); n * d],
            xhat2: vec![T::zero(); n * d],
            rstd2: vec![T::zero(); n],
            zn: vec![T::zero(); n * d],
            u: vec![T::zero(); n * f],
            g: vec![T::zero(); n * f],
            keep2: keep_mask(n * d, drop, &mut rng),
        };
        layer_norm(
            &x,
            n,
            p.slice(lo.ln1_g, d),
            p.slice(lo.ln1_b, d),
            &mut t.xn1,
            &mut t.xhat1,
            &mut t.rstd1,
        );
        linear(
            &t.xn1,
            n,
            p.slice(lo.w_qkv, d * 3 * d),
            p.slice(lo.b_qkv, 3 * d),
            &mut t.qkv,
        );
        attention(&t.qkv, b, heads, d, &mut t.probs, &t.att_keep, &mut t.ctx);
        let mut a = vec![T::zero(); n * d];
        linear(
            &t.ctx,
            n,
            p.slice(lo.w_o, d * d),
            p.slice(lo.b_o, d),
            &mut a,
        );
        for i in 0..n * d {
            let k = if t.keep1.is_empty() {
                T::one()
            } else {
                t.keep1[i]
            };
            t.z[i] = x[i] + a[i] * k;
        }
        layer_norm(
            &t.z,
            n,
            p.slice(lo.ln2_g, d),
            p.slice(lo.ln2_b, d),
            &mut t.zn,
            &mut t.xhat2,
            &mut t.rstd2,
        );
        linear(
            &t.zn,
            n,
            p.slice(lo.w_in, d * f),
            p.slice(lo.b_in, f),
            &mut t.u,
        );
        for (g, u) in t.g.iter_mut().zip(&mut t.u) {
            (*g, *u) = gelu_with_grad(*u);
        }
        let mut o = vec![T::zero(); n * d];
        linear(
            &t.g,
            n,
            p.slice(lo.w_out, f * d),
            p.slice(lo.b_out, d),
            &mut o,
        );
        let mut next = vec![T::zero(); n * d];
        for i in 0..n * d {
            let k = if t.keep2.is_empty() {
                T::one()
            } else {
                t.keep2[i]
            };
            next[i] = t.z[i] + o[i] * k;
        }
        t.x = std::mem::replace(&mut x, next);
        layers.push(t);
    }
    let off = &p.layout.off;
    let mut tape = Tape {
        layers,
        xhat_f: vec![T::zero(); n * d],
        rstd_f: vec![T::zero(); n],
        hf: vec![T::zero(); n * d],
    };
    layer_norm(
        &x,
        n,
        p.slice(off.lnf_g, d),
        p.slice(off.lnf_b, d),
        &mut tape.hf,
        &mut tape.xhat_f,
        &mut tape.rstd_f,
    );
    Ok(tape)
}

/// Final hidden states (after the last layer norm), `positions × d`.
pub fn forward_hidden<T: Real>(p: &Params<T>, b: &Batch) -> Result<Vec<T>, ModelError> {
    Ok(run_forward(p, b, None)?.hf)
}

fn gather<T: Real>(src: &[T], rows: &[usize], d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&src[r * d..(r + 1) * d]);
    }
    out
}

/// Loss and `dL/d(head inputs)`, plus head parameter gradients when `grad`
/// is given.
fn heads<T: Real>(
    p: &Params<T>,
    b: &Batch,
    masks: Option<&MaskPool>,
    hf: &[T],
    mut grad: Option<&mut [T]>,
) -> Result<(LossStats, Vec<T>), ModelError> {
    let cfg = &p.config;
    let (d, v, k3) = (cfg.d_model, cfg.vocab_size, 3 * cfg.n_mixtures);
    let off = &p.layout.off;
    let rows: Vec<usize> = (0..b.positions())
        .filter(|&i| b.targets[i] != PAD)
        .collect();
    let num_rows: Vec<usize> = (0..rows.len())
        .filter(|&j| b.targets[rows[j]] == NUM)
        .collect();
    let nt = rows.len();
    let mut stats = LossStats {
        n_targets: nt,
        n_numeric: num_rows.len(),
        ..Default::default()
    };
    let mut dhf = vec![T::zero(); b.positions() * d];
    if nt == 0 {
        return Ok((stats, dhf));
    }
    let inv_n = T::one() / T::of(nt as f64);
    let h = gather(hf, &rows, d);
    let mut logits = vec![T::zero(); nt * v];
    linear(
        &h,
        nt,
        p.slice(off.w_disc, d * v),
        p.slice(off.b_disc, v),
        &mut logits,
    );
    let all: Vec<u32> = (0..v as u32).collect();
    let mut dlogits = vec![T::zero(); nt * v];
    for (j, &i) in rows.iter().enumerate() {
        let target = b.targets[i];
        let enabled: &[u32] = match masks {
            Some(pool) => {
                let m = b.mask_ids[i] as usize;
                if !pool.sets[m].contains(target as usize) {
                    return Err(ModelError::TargetMasked {
                        position: i,
                        token: target,
                    });
                }
                &pool.lists[m]
            }
            None => &all,
        };
        let l = &logits[j * v..(j + 1) * v];
        let lse = log_softmax_masked(l, enabled);
        stats.ce_sum += (lse - l[target as usize]).f64();
        let dl = &mut dlogits[j * v..(j + 1) * v];
        for &e in enabled {
            dl[e as usize] = (l[e as usize] - lse).exp() * inv_n;
        }
        dl[target as usize] -= inv_n;
    }
    let mut dh = vec![T::zero(); nt * d];
    if let Some(g) = grad.as_deref_mut() {
        let (gw, gb) = split2(g, off.w_disc, off.b_disc, d * v);
        linear_backward(
            &h,
            nt,
            p.slice(off.w_disc, d * v),
            &dlogits,
            gw,
            &mut gb[..v],
            Some(&mut dh),
            false,
        );
    }
    if !num_rows.is_empty() {
        let nn = num_rows.len();
        let hn = gather(&h, &num_rows, d);
        let mut raw = vec![T::zero(); nn * k3];
        linear(
            &hn,
            nn,
            p.slice(off.w_mog, d * k3),
            p.slice(off.b_mog, k3),
            &mut raw,
        );
        let mut draw = vec![T::zero(); nn * k3];
        for (q, &j) in num_rows.iter().enumerate() {
            let x = T::of(b.target_cont[rows[j]]);
            let nll = mog_nll_grad(
                &raw[q * k3..(q + 1) * k3],
                x,
                &mut draw[q * k3..(q + 1) * k3],
            );
            stats.nll_sum += nll.f64();
            draw[q * k3..(q + 1) * k3]
                .iter_mut()
                .for_each(|g| *g *= inv_n);
        }
        if let Some(g) = grad {
            let (gw, gb) = split2(g, off.w_mog, off.b_mog, d * k3);
            let mut dhn = vec![T::zero(); nn * d];
            linear_backward(
                &hn,
                nn,
                p.slice(off.w_mog, d * k3),
                &draw,
                gw,
                &mut gb[..k3],
                Some(&mut dhn),
                false,
            );
            for (q, &j) in num_rows.iter().enumerate() {
                add_row(
                    &mut dh[j * d..(j + 1) * d],
                    &dhn[q * d..(q + 1) * d],
                    T::one(),
                );
            }
        }
    }
    for (j, &i) in rows.iter().enumerate() {
        dhf[i * d..(i + 1) * d].copy_from_slice(&dh[j * d..(j + 1) * d]);
    }
    stats.loss = (stats.ce_sum + stats.nll_sum) / nt as f64;
    if !stats.loss.is_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok((stats, dhf))
}

/// Masked CE + NLL without gradients or dropout.
pub fn loss_only<T: Real>(
    p: &Params<T>,
    b: &Batch,
    masks: Option<&MaskPool>,
) -> Result<LossStats, ModelError> {
    let tape = run_forward(p, b, None)?;
    Ok(heads(p, b, masks, &tape.hf, None)?.0)
}

/// Loss and full parameter gradient (overwrites `grad`). Dropout is active
/// when `rng` is given and the configured rate is positive.
pub fn loss_and_grad<T: Real>(
    p: &Params<T>,
    b: &Batch,
    masks: Option<&MaskPool>,
    rng: Option<&mut dyn RngCore>,
    grad: &mut [T],
) -> Result<LossStats, ModelError> {
    assert_eq!(grad.len(), p.len());
    grad.iter_mut().for_each(|g| *g = T::zero());
    let tape = run_forward(p, b, rng)?;
    let (stats, dhf) = heads(p, b, masks, &tape.hf, Some(grad))?;
    let cfg = &p.config;
    let (n, d, f, heads_n) = (b.positions(), cfg.d_model, cfg.d_ff, cfg.n_heads);
    let off = &p.layout.off;

    let mut dx = vec![T::zero(); n * d];
    {
        let (gg, gb) = split2(grad, off.lnf_g, off.lnf_b, d);
        layer_norm_backward(
            &dhf,
            &tape.xhat_f,
            &tape.rstd_f,
            p.slice(off.lnf_g, d),
            n,
            gg,
            gb,
            &mut dx,
            false,
        );
    }
    for (lo, t) in off.layers.iter().zip(&tape.layers).rev() {
        // h' = z + keep2 ⊙ FFN(LN(z))
        let mut dz = dx.clone();
        let mut dout = dx;
        if !t.keep2.is_empty() {
            dout.iter_mut().zip(&t.keep2).for_each(|(g, k)| *g *= *k);
        }
        let mut dg = vec![T::zero(); n * f];
        {
            let (gw, gb) = split2(grad, lo.w_out, lo.b_out, f * d);
            linear_backward(
                &t.g,
                n,
                p.slice(lo.w_out, f * d),
                &dout,
                gw,
                &mut gb[..d],
                Some(&mut dg),
                false,
            );
        }
        for (g, u) in dg.iter_mut().zip(&t.u) {
            *g *= *u;
        }
        let mut dzn = vec![T::zero(); n * d];
        {
            let (gw, gb) = split2(grad, lo.w_in, lo.b_in, d * f);
            linear_backward(
                &t.zn,
                n,
                p.slice(lo.w_in, d * f),
                &dg,
                gw,
                &mut gb[..f],
                Some(&mut dzn),
                false,
            );
        }
        {
            let (gg, gb) = split2(grad, lo.ln2_g, lo.ln2_b, d);
            layer_norm_backward(
                &dzn,
                &t.xhat2,
                &t.rstd2,
                p.slice(lo.ln2_g, d),
                n,
                gg,
                gb,
                &mut dz,
                true,
            );
        }
        // z = x + keep1 ⊙ Attn(LN(x))
        let mut da = dz.clone();
        if !t.keep1.is_empty() {
            da.iter_mut().zip(&t.keep1).for_each(|(g, k)| *g *= *k);
        }
        let mut dctx = vec![T::zero(); n * d];
        {
            let (gw, gb) = split2(grad, lo.w_o, lo.b_o, d * d);
            linear_backward(
                &t.ctx,
                n,
                p.slice(lo.w_o, d * d),
                &da,
                gw,
                &mut gb[..d],
                Some(&mut dctx),
                false,
            );
        }
        let mut dqkv = vec![T::zero(); n * 3 * d];
        attention_backward(
            &t.qkv,
            b,
            heads_n,
            d,
            &t.probs,
            &t.att_keep,
            &dctx,
            &mut dqkv,
        );
        let mut dxn1 = vec![T::zero(); n * d];
        {
            let (gw, gb) = split2(grad, lo.w_qkv, lo.b_qkv, d * 3 * d);
            linear_backward(
                &t.xn1,
                n,
                p.slice(lo.w_qkv, d * 3 * d),
                &dqkv,
                gw,
                &mut gb[..3 * d],
                Some(&mut dxn1),
                false,
            );
        }
        {
            let (gg, gb) = split2(grad, lo.ln1_g, lo.ln1_b, d);
            layer_norm_backward(
                &dxn1,
                &t.xhat1,
                &t.rstd1,
                p.slice(lo.ln1_g, d),
                n,
                gg,
                gb,
                &mut dz,
                true,
            );
        }
        dx = dz;
    }
    embed_backward(p, b, &dx, grad);
    Ok(stats)
}

/// Disjoint mutable views `grad[a..a+len_a]` and `grad[b..]` for `a < b`.
fn split2<T>(grad: &mut [T], a: usize, b: usize, len_a: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + len_a <= b);
    let (lo, hi) = grad.split_at_mut(b);
    (&mut lo[a..a + len_a], hi)
}
