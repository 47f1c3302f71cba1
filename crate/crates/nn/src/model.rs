//! The decoder: embeddings, pre-norm blocks with causal self-attention,
//! cross-attention over the conditioning row and a GELU MLP, then a final
//! norm and the output projection.

use sewgpt_core::{TokenMeta, END};

use crate::cond::{project_condition, vec_mat, Cond, CondEmbedding};
use crate::config::ModelConfig;
use crate::error::NnError;
use crate::params::{AttnIdx, Layout, ModelParams};
use crate::tape::{gelu, softmax_in_place, Tape, Var};
use crate::tensor::{Mat, Scalar};

const LN_EPS: f64 = 1e-5;

/// Rejects ids outside the vocabulary, panels beyond the table and over-long inputs.
pub fn check_tokens(cfg: &ModelConfig, ids: &[u32], meta: &[TokenMeta]) -> Result<(), NnError> {
    if ids.len() != meta.len() {
        return Err(NnError::Shape(format!("{} ids but {} meta entries", ids.len(), meta.len())));
    }
    if ids.len() > cfg.max_seq_len {
        return Err(NnError::SequenceTooLong { len: ids.len(), max: cfg.max_seq_len });
    }
    for (pos, (&id, m)) in ids.iter().zip(meta).enumerate() {
        if id as usize >= cfg.vocab_size {
            return Err(NnError::TokenOutOfRange { id, pos, vocab: cfg.vocab_size });
        }
        if m.panel > cfg.max_panels {
            return Err(NnError::PanelOutOfRange { pos, panel: m.panel, max: cfg.max_panels });
        }
        if m.slot >= cfg.tokens_per_panel() {
            return Err(NnError::Shape(format!("slot {} at position {pos} exceeds the panel width", m.slot)));
        }
    }
    Ok(())
}

/// Row `t` is `value[id] + class[class] + panel[panel] + slot[slot]`.
pub fn embed_tokens<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    ids: &[u32],
    meta: &[TokenMeta],
) -> Result<Mat<T>, NnError> {
    check_tokens(cfg, ids, meta)?;
    let lay = Layout::new(cfg);
    params.check_layout(&lay)?;
    let mut out = Mat::zeros(ids.len(), cfg.d_model);
    for (t, (&id, m)) in ids.iter().zip(meta).enumerate() {
        embed_row(params, &lay, id, m, out.row_mut(t));
    }
    Ok(out)
}

fn embed_row<T: Scalar>(params: &ModelParams<T>, lay: &Layout, id: u32, m: &TokenMeta, out: &mut [T]) {
    let p = &params.tensors;
    let mut tables = vec![(lay.value_emb, id as usize), (lay.class_emb, m.class.index()), (lay.panel_emb, m.panel)];
    if let Some(s) = lay.slot_emb {
        tables.push((s, m.slot));
    }
    out.fill(T::ZERO);
    for (table, row) in tables {
        for (o, &v) in out.iter_mut().zip(p[table].row(row)) {
            *o += v;
        }
    }
}

fn cond_var<T: Scalar>(tape: &mut Tape<'_, T>, lay: &Layout, cond: &Cond) -> Result<Var, NnError> {
    Ok(match cond {
        Cond::Null => tape.param(lay.null_token),
        Cond::Raw(raw) => {
            let w1 = tape.value(tape.param(lay.cond_w1));
            if raw.len() != w1.rows {
                return Err(NnError::Shape(format!("condition width {} but d_cond_in is {}", raw.len(), w1.rows)));
            }
            let x = tape.input(Mat::from_vec(1, raw.len(), raw.iter().map(|&v| T::from_f64(v as f64)).collect()));
            let h = tape.linear(x, tape.param(lay.cond_w1), tape.param(lay.cond_b1));
            let h = tape.gelu(h);
            tape.linear(h, tape.param(lay.cond_w2), tape.param(lay.cond_b2))
        }
    })
}

fn attn_block<T: Scalar>(tape: &mut Tape<'_, T>, a: &AttnIdx, x: Var, kv: Option<Var>, heads: usize) -> Var {
    let p = |i: usize| Var(i);
    let h = tape.layer_norm(x, p(a.ln_g), p(a.ln_b));
    let src = kv.unwrap_or(h);
    let q = tape.linear(h, p(a.wq), p(a.bq));
    let k = tape.matmul(src, p(a.wk));
    let v = tape.linear(src, p(a.wv), p(a.bv));
    let o = tape.attention(q, k, v, heads, kv.is_none());
    let o = tape.linear(o, p(a.wo), p(a.bo));
    tape.add(x, o)
}

/// Records the forward pass on `tape` (whose leaves are the model parameters)
/// and returns the logits node `[len × vocab]`.
pub fn forward_on_tape<T: Scalar>(
    tape: &mut Tape<'_, T>,
    cfg: &ModelConfig,
    lay: &Layout,
    ids: &[u32],
    meta: &[TokenMeta],
    cond: &Cond,
) -> Result<Var, NnError> {
    check_tokens(cfg, ids, meta)?;
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let classes: Vec<usize> = meta.iter().map(|m| m.class.index()).collect();
    let panels: Vec<usize> = meta.iter().map(|m| m.panel).collect();
    let mut x = tape.gather(Var(lay.value_emb), &idx);
    let c = tape.gather(Var(lay.class_emb), &classes);
    x = tape.add(x, c);
    let pn = tape.gather(Var(lay.panel_emb), &panels);
    x = tape.add(x, pn);
    if let Some(s) = lay.slot_emb {
        let slots: Vec<usize> = meta.iter().map(|m| m.slot).collect();
        let sv = tape.gather(Var(s), &slots);
        x = tape.add(x, sv);
    }
    let cv = cond_var(tape, lay, cond)?;

    for l in &lay.layers {
        x = attn_block(tape, &l.self_attn, x, None, cfg.n_heads);
        x = attn_block(tape, &l.cross_attn, x, Some(cv), cfg.n_heads);
        let h = tape.layer_norm(x, Var(l.ln_g), Var(l.ln_b));
        let h = tape.linear(h, Var(l.w1), Var(l.b1));
        let h = tape.gelu(h);
        let h = tape.linear(h, Var(l.w2), Var(l.b2));
        x = tape.add(x, h);
    }
    let h = tape.layer_norm(x, Var(lay.lnf_g), Var(lay.lnf_b));
    Ok(tape.matmul(h, Var(lay.out_w)))
}

/// Logits for every position.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    ids: &[u32],
    meta: &[TokenMeta],
    cond: &Cond,
) -> Result<Mat<T>, NnError> {
    let lay = Layout::new(cfg);
    params.check_layout(&lay)?;
    let mut tape = Tape::new(&params.tensors);
    let out = forward_on_tape(&mut tape, cfg, &lay, ids, meta, cond)?;
    Ok(tape.value(out).clone())
}

/// Teacher-forcing targets for a full sequence: position `i` predicts `ids[i + 1]`.
/// Positions from the first END onward are masked.
pub fn shifted_targets(ids: &[u32]) -> Vec<Option<usize>> {
    let mut done = false;
    (0..ids.len().saturating_sub(1))
        .map(|i| {
            done |= ids[i] == END;
            (!done).then_some(ids[i + 1] as usize)
        })
        .collect()
}

/// Mean of `-log softmax(logits)[target]` over unmasked rows.
pub fn nll_loss<T: Scalar>(logits: &Mat<T>, targets: &[Option<usize>]) -> Result<f64, NnError> {
    if logits.rows != targets.len() {
        return Err(NnError::Shape(format!("{} logit rows but {} targets", logits.rows, targets.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        if t >= logits.cols {
            return Err(NnError::Shape(format!("target {t} beyond {} classes", logits.cols)));
        }
        let row = logits.row(r);
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
        let lse = mx + row.iter().map(|v| (v.to_f64() - mx).exp()).sum::<f64>().ln();
        total += lse - row[t].to_f64();
        count += 1;
    }
    if count == 0 {
        return Err(NnError::Shape("no unmasked targets".into()));
    }
    Ok(total / count as f64)
}

/// Per-token loss of one full sequence under teacher forcing.
pub fn sequence_loss<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    ids: &[u32],
    meta: &[TokenMeta],
    cond: &Cond,
) -> Result<f64, NnError> {
    if ids.len() < 2 {
        return Err(NnError::Shape("a sequence needs at least two tokens".into()));
    }
    let n = ids.len() - 1;
    let logits = forward(params, cfg, &ids[..n], &meta[..n], cond)?;
    nll_loss(&logits, &shifted_targets(ids))
}

fn layer_norm_row<T: Scalar>(x: &[T], g: &[T], b: &[T]) -> Vec<T> {
    let n = T::from_f64(1.0 / x.len() as f64);
    let mut mean = T::ZERO;
    for &v in x {
        mean += v;
    }
    mean *= n;
    let mut var = T::ZERO;
    for &v in x {
        var += (v - mean) * (v - mean);
    }
    var *= n;
    let rs = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
    x.iter().zip(g).zip(b).map(|((&v, &g), &b)| (v - mean) * rs * g + b).collect()
}

struct AttnCache<T> {
    keys: Vec<T>,
    values: Vec<T>,
}

/// Incremental decoder that keeps per-layer keys and values, so each new
/// token costs one row of work. Logits agree with [`forward`] up to rounding.
pub struct Decoder<'a, T> {
    params: &'a ModelParams<T>,
    cfg: &'a ModelConfig,
    lay: Layout,
    self_cache: Vec<AttnCache<T>>,
    cross_cache: Vec<AttnCache<T>>,
    len: usize,
}

impl<'a, T: Scalar> Decoder<'a, T> {
    pub fn new(params: &'a ModelParams<T>, cfg: &'a ModelConfig, cond: &Cond) -> Result<Self, NnError> {
        cfg.validate()?;
        let lay = Layout::new(cfg);
        params.check_layout(&lay)?;
        let CondEmbedding { rows } = project_condition(params, &lay, cond)?;
        let p = &params.tensors;
        let cross_cache = lay
            .layers
            .iter()
            .map(|l| {
                let a = &l.cross_attn;
                let mut keys = Vec::new();
                let mut values = Vec::new();
                for r in 0..rows.rows {
                    keys.extend(vec_mat(rows.row(r), &p[a.wk], &vec![T::ZERO; cfg.d_model]));
                    values.extend(vec_mat(rows.row(r), &p[a.wv], &p[a.bv].data));
                }
                AttnCache { keys, values }
            })
            .collect();
        let self_cache = lay.layers.iter().map(|_| AttnCache { keys: Vec::new(), values: Vec::new() }).collect();
        Ok(Decoder { params, cfg, lay, self_cache, cross_cache, len: 0 })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn attend(&self, q: &[T], cache: &AttnCache<T>) -> Vec<T> {
        let d = self.cfg.d_model;
        let heads = self.cfg.n_heads;
        let dh = d / heads;
        let n = cache.keys.len() / d;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let mut out = vec![T::ZERO; d];
        let mut s = vec![T::ZERO; n];
        for h in 0..heads {
            let qh = &q[h * dh..(h + 1) * dh];
            for (j, sj) in s.iter_mut().enumerate() {
                let kh = &cache.keys[j * d + h * dh..j * d + (h + 1) * dh];
                let mut acc = T::ZERO;
                for (&a, &b) in qh.iter().zip(kh) {
                    acc += a * b;
                }
                *sj = acc * scale;
            }
            softmax_in_place(&mut s);
            let oh = &mut out[h * dh..(h + 1) * dh];
            for (j, &pj) in s.iter().enumerate() {
                for (o, &v) in oh.iter_mut().zip(&cache.values[j * d + h * dh..j * d + (h + 1) * dh]) {
                    *o += pj * v;
                }
            }
        }
        out
    }

    /// Feeds one token and returns the logits predicting the next one.
    pub fn push(&mut self, id: u32, meta: &TokenMeta) -> Result<Vec<T>, NnError> {
        check_tokens(self.cfg, &[id], std::slice::from_ref(meta))?;
        if self.len >= self.cfg.max_seq_len {
            return Err(NnError::SequenceTooLong { len: self.len + 1, max: self.cfg.max_seq_len });
        }
        let p = &self.params.tensors;
        let mut x = vec![T::ZERO; self.cfg.d_model];
        embed_row(self.params, &self.lay, id, meta, &mut x);

        for li in 0..self.lay.layers.len() {
            let l = self.lay.layers[li];
            for (a, cross) in [(&l.self_attn, false), (&l.cross_attn, true)] {
                let h = layer_norm_row(&x, &p[a.ln_g].data, &p[a.ln_b].data);
                let q = vec_mat(&h, &p[a.wq], &p[a.bq].data);
                let o = if cross {
                    self.attend(&q, &self.cross_cache[li])
                } else {
                    let k = vec_mat(&h, &p[a.wk], &vec![T::ZERO; self.cfg.d_model]);
                    let v = vec_mat(&h, &p[a.wv], &p[a.bv].data);
                    self.self_cache[li].keys.extend(k);
                    self.self_cache[li].values.extend(v);
                    self.attend(&q, &self.self_cache[li])
                };
                let o = vec_mat(&o, &p[a.wo], &p[a.bo].data);
                for (xv, ov) in x.iter_mut().zip(o) {
                    *xv += ov;
                }
            }
            let h = layer_norm_row(&x, &p[l.ln_g].data, &p[l.ln_b].data);
            let h: Vec<T> = vec_mat(&h, &p[l.w1], &p[l.b1].data).into_iter().map(gelu).collect();
            let h = vec_mat(&h, &p[l.w2], &p[l.b2].data);
            for (xv, hv) in x.iter_mut().zip(h) {
                *xv += hv;
            }
        }
        let h = layer_norm_row(&x, &p[self.lay.lnf_g].data, &p[self.lay.lnf_b].data);
        let zero = vec![T::ZERO; self.cfg.vocab_size];
        self.len += 1;
        Ok(vec_mat(&h, &p[self.lay.out_w], &zero))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sewgpt_core::TokenSeq;

    pub(crate) fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            vocab_size: 64,
            max_seq_len: 80,
            k: 4,
            max_panels: 2,
            d_cond_in: 8,
            ..ModelConfig::default()
        }
    }

    fn rand_seq(cfg: &ModelConfig, len: usize, seed: u64) -> TokenSeq {
        let mut s = seed;
        let mut ids = vec![sewgpt_core::START];
        while ids.len() < len {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ids.push(3 + ((s >> 33) % (cfg.vocab_size as u64 - 3)) as u32);
        }
        TokenSeq::from_ids(ids, cfg.k, cfg.vocab_size)
    }

    fn raw_cond(cfg: &ModelConfig) -> Cond {
        Cond::Raw((0..cfg.d_cond_in).map(|i| (i as f32 * 0.37).sin()).collect())
    }

    #[test]
    fn embedding_is_sum_of_table_rows() {
        let cfg = tiny();
        let params = ModelParams::<f64>::init(&cfg, 1);
        let lay = Layout::new(&cfg);
        let seq = rand_seq(&cfg, 30, 9);
        let e = embed_tokens(&params, &cfg, &seq.ids, &seq.meta).unwrap();
        let t = 17;
        let m = seq.meta[t];
        let p = &params.tensors;
        for c in 0..cfg.d_model {
            let want = p[lay.value_emb].at(seq.ids[t] as usize, c)
                + p[lay.class_emb].at(m.class.index(), c)
                + p[lay.panel_emb].at(m.panel, c)
                + p[lay.slot_emb.unwrap()].at(m.slot, c);
            assert_eq!(e.at(t, c), want);
        }
        let zero = ModelParams::<f64>::zeros(&cfg);
        assert!(embed_tokens(&zero, &cfg, &seq.ids, &seq.meta).unwrap().data.iter().all(|&v| v == 0.0));
        let mut bad = seq.ids.clone();
        bad[3] = 64;
        assert!(matches!(embed_tokens(&params, &cfg, &bad, &seq.meta), Err(NnError::TokenOutOfRange { id: 64, pos: 3, .. })));
    }

    #[test]
    fn logits_are_causal() {
        let cfg = tiny();
        let params = ModelParams::<f64>::init(&cfg, 2);
        let cond = raw_cond(&cfg);
        let seq = rand_seq(&cfg, 40, 3);
        let base = forward(&params, &cfg, &seq.ids, &seq.meta, &cond).unwrap();
        for t in [1usize, 10, 25, 39] {
            let mut ids = seq.ids.clone();
            ids[t] = if ids[t] == 10 { 11 } else { 10 };
            let out = forward(&params, &cfg, &ids, &seq.meta, &cond).unwrap();
            assert_eq!(base.data[..t * cfg.vocab_size], out.data[..t * cfg.vocab_size], "row < {t} changed");
            assert_ne!(base.row(t), out.row(t));
        }
    }

    #[test]
    fn decoder_matches_full_forward() {
        let cfg = tiny();
        let params = ModelParams::<f64>::init(&cfg, 4);
        for cond in [raw_cond(&cfg), Cond::Null] {
            let seq = rand_seq(&cfg, 45, 5);
            let full = forward(&params, &cfg, &seq.ids, &seq.meta, &cond).unwrap();
            let mut dec = Decoder::new(&params, &cfg, &cond).unwrap();
            for (t, (&id, m)) in seq.ids.iter().zip(&seq.meta).enumerate() {
                let row = dec.push(id, m).unwrap();
                for (a, b) in row.iter().zip(full.row(t)) {
                    assert!((a - b).abs() < 1e-12, "position {t}");
                }
            }
        }
    }

    #[test]
    fn random_init_logits_are_finite() {
        let cfg = ModelConfig::default();
        let params = ModelParams::<f32>::init(&cfg, 0);
        let seq = rand_seq(&cfg, 240, 1);
        let cond = Cond::Raw(crate::cond::hashed_bow("a long skirt", cfg.d_cond_in));
        assert!(forward(&params, &cfg, &seq.ids, &seq.meta, &cond).unwrap().all_finite());
    }

    #[test]
    fn zeroed_blocks_reduce_to_normalized_embedding_projection() {
        let cfg = tiny();
        let lay = Layout::new(&cfg);
        let mut params = ModelParams::<f64>::init(&cfg, 6);
        for l in &lay.layers {
            for a in [&l.self_attn, &l.cross_attn] {
                for i in [a.wq, a.bq, a.wk, a.wv, a.bv, a.wo, a.bo] {
                    params.tensors[i].data.fill(0.0);
                }
            }
            for i in [l.w1, l.b1, l.w2, l.b2] {
                params.tensors[i].data.fill(0.0);
            }
        }
        // Identity output path: d_model × vocab with ones on the diagonal.
        let out = &mut params.tensors[lay.out_w];
        out.data.fill(0.0);
        for i in 0..cfg.d_model {
            out.data[i * cfg.vocab_size + i] = 1.0;
        }
        let seq = rand_seq(&cfg, 20, 7);
        let logits = forward(&params, &cfg, &seq.ids, &seq.meta, &raw_cond(&cfg)).unwrap();
        let emb = embed_tokens(&params, &cfg, &seq.ids, &seq.meta).unwrap();
        for t in 0..seq.len() {
            let e = emb.row(t);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64;
            for c in 0..cfg.vocab_size {
                let want = if c < cfg.d_model { (e[c] - mean) / (var + 1e-5).sqrt() } else { 0.0 };
                assert!((logits.at(t, c) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let v = 2004;
        let uniform = Mat::<f32>::zeros(3, v);
        let l = nll_loss(&uniform, &[Some(5), Some(9), Some(100)]).unwrap();
        assert!((l - (v as f64).ln()).abs() < 1e-9);

        let mut peaked = Mat::<f32>::zeros(2, v);
        peaked.data[7] = 50.0;
        peaked.data[v + 8] = 50.0;
        assert!(nll_loss(&peaked, &[Some(7), Some(8)]).unwrap() < 1e-18);

        // Five rows, one masked; hand-summed softmax losses over 3 classes.
        let logits = Mat::from_vec(5, 3, vec![0.0, 1.0, 2.0, 1.0, 1.0, 1.0, 3.0, 0.0, 0.0, -1.0, 0.5, 0.0, 2.0, 2.0, 0.0]);
        let targets = [Some(2), Some(0), Some(1), None, Some(2)];
        let mut hand = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let row = logits.row(r);
                let z: f64 = row.iter().map(|v: &f64| v.exp()).sum();
                hand += -(row[*t].exp() / z).ln();
            }
        }
        assert!((nll_loss(&logits, &targets).unwrap() - hand / 4.0).abs() < 1e-12);
        assert!(nll_loss(&logits, &targets[..4]).is_err());
    }

    #[test]
    fn targets_mask_after_end() {
        assert_eq!(shifted_targets(&[1, 5, 6, 2]), vec![Some(5), Some(6), Some(2)]);
        assert_eq!(shifted_targets(&[1, 5, 2, 0, 0]), vec![Some(5), Some(2), None, None]);
    }

    #[test]
    fn argmax_invariant_to_row_shift() {
        let cfg = tiny();
        let params = ModelParams::<f64>::init(&cfg, 8);
        let seq = rand_seq(&cfg, 12, 2);
        let logits = forward(&params, &cfg, &seq.ids, &seq.meta, &Cond::Null).unwrap();
        for t in 0..logits.rows {
            let row = logits.row(t);
            let shifted: Vec<f64> = row.iter().map(|v| v + 123.5).collect();
            assert_eq!(crate::sample::argmax(row), crate::sample::argmax(&shifted));
        }
    }
}
