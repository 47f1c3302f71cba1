//! Named parameter tensors and their fixed layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::error::NnError;
use crate::tensor::{Mat, Scalar};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

/// Indices of one attention sub-block's weights. Keys carry no bias: a
/// shared offset on every key moves all scores of a query equally and
/// cancels in the softmax.
#[derive(Debug, Clone, Copy)]
pub struct AttnIdx {
    pub ln_g: usize,
    pub ln_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerIdx {
    pub self_attn: AttnIdx,
    pub cross_attn: AttnIdx,
    pub ln_g: usize,
    pub ln_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Where each tensor lives in the flat parameter list.
#[derive(Debug, Clone)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub value_emb: usize,
    pub class_emb: usize,
    pub panel_emb: usize,
    pub slot_emb: Option<usize>,
    pub cond_w1: usize,
    pub cond_b1: usize,
    pub cond_w2: usize,
    pub cond_b2: usize,
    pub null_token: usize,
    pub layers: Vec<LayerIdx>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub out_w: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut specs = Vec::new();
        let mut add = |name: String, rows: usize, cols: usize, init: Init| {
            specs.push(ParamSpec { name, rows, cols, init });
            specs.len() - 1
        };
        let value_emb = add("embed.value".into(), cfg.vocab_size, d, Init::Normal);
        let class_emb = add("embed.class".into(), 6, d, Init::Normal);
        let panel_emb = add("embed.panel".into(), cfg.max_panels + 1, d, Init::Normal);
        let slot_emb = cfg.slot_embedding.then(|| add("embed.slot".into(), cfg.tokens_per_panel(), d, Init::Normal));
        let cond_w1 = add("cond.w1".into(), cfg.d_cond_in, d, Init::Normal);
        let cond_b1 = add("cond.b1".into(), 1, d, Init::Zeros);
        let cond_w2 = add("cond.w2".into(), d, d, Init::Normal);
        let cond_b2 = add("cond.b2".into(), 1, d, Init::Zeros);
        let null_token = add("cond.null".into(), 1, d, Init::Normal);

        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let mut attn = |kind: &str| AttnIdx {
                ln_g: add(format!("layer{l}.{kind}.ln.g"), 1, d, Init::Ones),
                ln_b: add(format!("layer{l}.{kind}.ln.b"), 1, d, Init::Zeros),
                wq: add(format!("layer{l}.{kind}.wq"), d, d, Init::Normal),
                bq: add(format!("layer{l}.{kind}.bq"), 1, d, Init::Zeros),
                wk: add(format!("layer{l}.{kind}.wk"), d, d, Init::Normal),
                wv: add(format!("layer{l}.{kind}.wv"), d, d, Init::Normal),
                bv: add(format!("layer{l}.{kind}.bv"), 1, d, Init::Zeros),
                wo: add(format!("layer{l}.{kind}.wo"), d, d, Init::Normal),
                bo: add(format!("layer{l}.{kind}.bo"), 1, d, Init::Zeros),
            };
            let self_attn = attn("self");
            let cross_attn = attn("cross");
            layers.push(LayerIdx {
                self_attn,
                cross_attn,
                ln_g: add(format!("layer{l}.mlp.ln.g"), 1, d, Init::Ones),
                ln_b: add(format!("layer{l}.mlp.ln.b"), 1, d, Init::Zeros),
                w1: add(format!("layer{l}.mlp.w1"), d, 4 * d, Init::Normal),
                b1: add(format!("layer{l}.mlp.b1"), 1, 4 * d, Init::Zeros),
                w2: add(format!("layer{l}.mlp.w2"), 4 * d, d, Init::Normal),
                b2: add(format!("layer{l}.mlp.b2"), 1, d, Init::Zeros),
            });
        }
        let lnf_g = add("final.ln.g".into(), 1, d, Init::Ones);
        let lnf_b = add("final.ln.b".into(), 1, d, Init::Zeros);
        let out_w = add("out.w".into(), d, cfg.vocab_size, Init::Normal);
        Layout {
            specs,
            value_emb,
            class_emb,
            panel_emb,
            slot_emb,
            cond_w1,
            cond_b1,
            cond_w2,
            cond_b2,
            null_token,
            layers,
            lnf_g,
            lnf_b,
            out_w,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }
}

/// The full parameter set θ of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: Vec<Mat<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        Self::init_with_std(cfg, seed, INIT_STD)
    }

    /// As [`ModelParams::init`] with a different standard deviation for the weights.
    pub fn init_with_std(cfg: &ModelConfig, seed: u64, std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("valid std");
        let tensors = Layout::new(cfg)
            .specs
            .iter()
            .map(|s| match s.init {
                Init::Normal => {
                    Mat::from_vec(s.rows, s.cols, (0..s.rows * s.cols).map(|_| T::from_f64(normal.sample(&mut rng))).collect())
                }
                Init::Zeros => Mat::zeros(s.rows, s.cols),
                Init::Ones => Mat::filled(s.rows, s.cols, T::ONE),
            })
            .collect();
        ModelParams { tensors }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelParams { tensors: Layout::new(cfg).specs.iter().map(|s| Mat::zeros(s.rows, s.cols)).collect() }
    }

    /// Checks that tensor count and shapes agree with the layout of `cfg`.
    pub fn check_layout(&self, layout: &Layout) -> Result<(), NnError> {
        if self.tensors.len() != layout.specs.len() {
            return Err(NnError::Shape(format!(
                "{} parameter tensors, layout expects {}",
                self.tensors.len(),
                layout.specs.len()
            )));
        }
        for (t, s) in self.tensors.iter().zip(&layout.specs) {
            if t.shape() != (s.rows, s.cols) {
                return Err(NnError::Shape(format!("{} is {:?}, expected {:?}", s.name, t.shape(), (s.rows, s.cols))));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { tensors: self.tensors.iter().map(Mat::cast).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Mat::all_finite)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }
}
