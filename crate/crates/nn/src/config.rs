use serde::{Deserialize, Serialize};

use crate::error::NnError;

/// Shape of the decoder.
///
/// `d_pos`, `d_param`, `d_val` and `d_feature` name the widths of the
/// position, parameter-class, value and conditioning embeddings. They are
/// summed into one residual stream, so each must equal `d_model` when given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_pos: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_param: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_val: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_feature: Option<usize>,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub max_panels: usize,
    pub d_cond_in: usize,
    /// Adds a learned table indexed by the slot within a panel.
    pub slot_embedding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_pos: None,
            d_param: None,
            d_val: None,
            d_feature: None,
            vocab_size: 2004,
            max_seq_len: 1500,
            k: 14,
            max_panels: 12,
            d_cond_in: 1024,
            slot_embedding: true,
        }
    }
}

impl ModelConfig {
    pub fn tokens_per_panel(&self) -> usize {
        8 * self.k + 7
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 {
            return bad("n_layers, d_model and n_heads must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        for (name, v) in [("d_pos", self.d_pos), ("d_param", self.d_param), ("d_val", self.d_val), ("d_feature", self.d_feature)] {
            if let Some(v) = v {
                if v != self.d_model {
                    return bad(format!("{name} = {v} must equal d_model = {}", self.d_model));
                }
            }
        }
        if self.vocab_size < 4 {
            return bad(format!("vocab_size {} leaves no room for value tokens", self.vocab_size));
        }
        if self.k == 0 || self.max_panels == 0 || self.d_cond_in == 0 {
            return bad("K, max_panels and d_cond_in must be positive".into());
        }
        let need = 2 + self.tokens_per_panel() * self.max_panels;
        if self.max_seq_len < need {
            return bad(format!("max_seq_len {} is below 2 + (8K+7)·max_panels = {need}", self.max_seq_len));
        }
        Ok(())
    }
}

/// Everything `train` needs besides the data. Serialized flat, model keys included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// Single-threaded gradient evaluation. Per-example gradients are summed
    /// in batch order either way, so both modes give identical results.
    pub deterministic: bool,
    pub null_cond_prob: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        self.model.validate()?;
        let bad = |m: &str| Err(NnError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.null_cond_prob) {
            return bad("null_cond_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 1e-4,
            betas: [0.9, 0.999],
            eps: 1e-8,
            batch_size: 4,
            steps: 5000,
            seed: 0,
            deterministic: true,
            null_cond_prob: 0.1,
        }
    }
}
