//! Autoregressive sampling and prefix completion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sewgpt_core::{TokenMeta, TokenSeq, END, PAD, START};

use crate::cond::Cond;
use crate::config::ModelConfig;
use crate::error::NnError;
use crate::model::Decoder;
use crate::params::ModelParams;
use crate::tensor::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// 0 selects greedy decoding.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "SamplerOptions::default_max_new")]
    pub max_new_tokens: usize,
}

impl SamplerOptions {
    fn default_max_new() -> usize {
        1500
    }

    pub fn greedy() -> Self {
        SamplerOptions::default()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(NnError::Config(format!("temperature {} must be finite and ≥ 0", self.temperature)));
        }
        if self.top_k == Some(0) {
            return Err(NnError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { temperature: 0.0, top_k: None, seed: 0, max_new_tokens: Self::default_max_new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub tokens: TokenSeq,
    /// END arrived mid-panel (or never arrived) and the tail was cut back to
    /// the last complete panel.
    pub truncated: bool,
}

/// Index of the first maximum.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Draws one token from `logits`. PAD and START are never produced.
pub fn pick_token<T: Scalar>(logits: &[T], opts: &SamplerOptions, rng: &mut ChaCha8Rng) -> u32 {
    let mut l: Vec<f64> = logits.iter().map(|v| v.to_f64()).collect();
    l[PAD as usize] = f64::NEG_INFINITY;
    l[START as usize] = f64::NEG_INFINITY;
    if opts.temperature == 0.0 {
        return argmax(&l) as u32;
    }
    for v in &mut l {
        *v /= opts.temperature;
    }
    if let Some(k) = opts.top_k {
        if k < l.len() {
            let mut idx: Vec<usize> = (0..l.len()).collect();
            idx.sort_by(|&a, &b| l[b].total_cmp(&l[a]).then(a.cmp(&b)));
            for &i in &idx[k..] {
                l[i] = f64::NEG_INFINITY;
            }
        }
    }
    let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = l.iter().map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { (v - mx).exp() }).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = argmax(&l);
    for (i, &wi) in w.iter().enumerate() {
        if wi > 0.0 {
            last = i;
            if u < wi {
                return i as u32;
            }
            u -= wi;
        }
    }
    last as u32
}

/// Extends `prefix` (or `[START]`) until END, `max_new_tokens`, or the
/// panel limit. Meta is rebuilt from position.
pub fn sample<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    cond: &Cond,
    opts: &SamplerOptions,
    prefix: Option<&[u32]>,
) -> Result<Sampled, NnError> {
    opts.validate()?;
    let prefix = prefix.unwrap_or(&[START]);
    if prefix.first() != Some(&START) {
        return Err(NnError::InvalidPrefix("must begin with START".into()));
    }
    if let Some(pos) = prefix.iter().skip(1).position(|&t| t == END || t == START || t == PAD) {
        return Err(NnError::InvalidPrefix(format!("special token at position {}", pos + 1)));
    }
    let tpp = cfg.tokens_per_panel();
    let cap = tpp * cfg.max_panels;
    if prefix.len() > cfg.max_seq_len || prefix.len() - 1 > cap {
        return Err(NnError::SequenceTooLong { len: prefix.len(), max: cfg.max_seq_len.min(cap + 1) });
    }

    let meta_at = |i: usize| if i == 0 { TokenMeta::SPECIAL } else { TokenMeta::interior(i - 1, cfg.k) };
    let mut dec = Decoder::new(params, cfg, cond)?;
    let mut logits = Vec::new();
    for (i, &id) in prefix.iter().enumerate() {
        logits = dec.push(id, &meta_at(i))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ids = prefix.to_vec();
    let mut ended = false;
    for _ in 0..opts.max_new_tokens {
        let next = if ids.len() > cap { END } else { pick_token(&logits, opts, &mut rng) };
        ids.push(next);
        if next == END {
            ended = true;
            break;
        }
        logits = dec.push(next, &meta_at(ids.len() - 1))?;
    }

    let interior = ids.len() - 1 - usize::from(ended);
    let truncated = !ended || !interior.is_multiple_of(tpp);
    if truncated {
        ids.truncate(1 + interior / tpp * tpp);
        ids.push(END);
    }
    Ok(Sampled { tokens: TokenSeq::from_ids(ids, cfg.k, cfg.vocab_size), truncated })
}
