//! Teacher-forced training with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sewgpt_core::{TokenMeta, TokenSeq};

use crate::cond::Cond;
use crate::config::{ModelConfig, TrainConfig};
use crate::error::NnError;
use crate::model::{forward_on_tape, sequence_loss, shifted_targets};
use crate::optim::Adam;
use crate::params::{Layout, ModelParams};
use crate::tape::Tape;
use crate::tensor::{Mat, Scalar};

/// One training sequence with its raw caption embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub ids: Vec<u32>,
    pub meta: Vec<TokenMeta>,
    pub cond: Vec<f32>,
}

impl Example {
    pub fn new(seq: TokenSeq, cond: Vec<f32>) -> Self {
        Example { ids: seq.ids, meta: seq.meta, cond }
    }

    fn n_targets(&self) -> usize {
        shifted_targets(&self.ids).iter().flatten().count()
    }
}

fn example_grads<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    lay: &Layout,
    ex: &Example,
    cond: &Cond,
    scale: T,
) -> Result<(f64, Vec<Mat<T>>), NnError> {
    if ex.ids.len() < 2 {
        return Err(NnError::Shape("a training sequence needs at least two tokens".into()));
    }
    let n = ex.ids.len() - 1;
    let mut tape = Tape::new(&params.tensors);
    let logits = forward_on_tape(&mut tape, cfg, lay, &ex.ids[..n], &ex.meta[..n], cond)?;
    let loss = tape.cross_entropy(logits, &shifted_targets(&ex.ids), scale);
    let value = tape.value(loss).data[0].to_f64();
    let grads = tape.backward(loss, T::ONE).into_param_grads(&params.tensors);
    Ok((value, grads))
}

type LossAndGrads<T> = (f64, Vec<Mat<T>>);

/// Mean per-token loss over `batch` and its gradient.
///
/// Each element is differentiated on its own tape; the per-element gradients
/// are then summed in batch order, so the result does not depend on `parallel`.
pub fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: &[(&Example, Cond)],
    parallel: bool,
) -> Result<(f64, Vec<Mat<T>>), NnError> {
    let lay = Layout::new(cfg);
    params.check_layout(&lay)?;
    let total: usize = batch.iter().map(|(e, _)| e.n_targets()).sum();
    if total == 0 {
        return Err(NnError::Shape("batch has no targets".into()));
    }
    let scale = T::from_f64(1.0 / total as f64);
    let results: Vec<Result<LossAndGrads<T>, NnError>> = if parallel && batch.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|(ex, cond)| s.spawn(|| example_grads(params, cfg, &lay, ex, cond, scale)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("gradient worker panicked")).collect()
        })
    } else {
        batch.iter().map(|(ex, cond)| example_grads(params, cfg, &lay, ex, cond, scale)).collect()
    };
    let mut loss = 0.0;
    let mut sum: Option<Vec<Mat<T>>> = None;
    for r in results {
        let (l, g) = r?;
        loss += l;
        match &mut sum {
            None => sum = Some(g),
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
        }
    }
    Ok((loss, sum.expect("non-empty batch")))
}

/// Drives training: owns the parameters, the optimizer and the data order.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: ModelParams<f32>,
    adam: Adam<f32>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    pub step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg.model, cfg.seed);
        let adam = Adam::new(&params.tensors, cfg.lr, cfg.betas, cfg.eps);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0d_a7a0_dee7_u64);
        Ok(Trainer { cfg, params, adam, rng, order: Vec::new(), cursor: 0, step: 0 })
    }

    /// The next batch: indices drawn epoch by epoch from a seeded shuffle,
    /// each paired with a draw deciding whether it trains the null condition.
    fn next_batch(&mut self, n: usize) -> Vec<(usize, bool)> {
        (0..self.cfg.batch_size)
            .map(|_| {
                if self.cursor >= self.order.len() {
                    self.order = (0..n).collect();
                    self.order.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                let i = self.order[self.cursor];
                self.cursor += 1;
                let null = self.rng.random::<f64>() < self.cfg.null_cond_prob;
                (i, null)
            })
            .collect()
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn train_step(&mut self, data: &[Example]) -> Result<f64, NnError> {
        if data.is_empty() {
            return Err(NnError::Shape("no training examples".into()));
        }
        let picks = self.next_batch(data.len());
        let batch: Vec<(&Example, Cond)> = picks
            .iter()
            .map(|&(i, null)| (&data[i], if null { Cond::Null } else { Cond::Raw(data[i].cond.clone()) }))
            .collect();
        let (loss, grads) = batch_gradients(&self.params, &self.cfg.model, &batch, !self.cfg.deterministic)?;
        if !loss.is_finite() || !grads.iter().all(Mat::all_finite) {
            return Err(NnError::NonFiniteLoss { step: self.step, loss });
        }
        self.adam.step(&mut self.params.tensors, &grads);
        self.step += 1;
        Ok(loss)
    }

    /// Runs until `cfg.steps`, reporting every step's loss to `on_step`.
    pub fn train(&mut self, data: &[Example], mut on_step: impl FnMut(u64, f64)) -> Result<(), NnError> {
        while self.step < self.cfg.steps {
            let loss = self.train_step(data)?;
            on_step(self.step, loss);
        }
        Ok(())
    }
}

/// Mean per-sequence loss with the real captions.
pub fn mean_loss<T: Scalar>(params: &ModelParams<T>, cfg: &ModelConfig, data: &[Example]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for ex in data {
        total += sequence_loss(params, cfg, &ex.ids, &ex.meta, &Cond::Raw(ex.cond.clone()))?;
    }
    Ok(total / data.len().max(1) as f64)
}
