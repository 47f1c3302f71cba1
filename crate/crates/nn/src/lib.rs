//! A small decoder-only transformer trained from scratch on sewing-pattern
//! token sequences, with text conditioning through cross-attention.
//!
//! Everything runs on the CPU. [`tape`] provides reverse-mode differentiation
//! over dense matrices; [`model`] builds the decoder on top of it; [`train`],
//! [`sample`] and [`checkpoint`] cover the rest of the model's life cycle.

pub mod checkpoint;
pub mod cond;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod sample;
pub mod tape;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointConfig};
pub use cond::{embed_caption, project_condition, Cond, CondEmbedding, Provider, ProviderKind, ProviderSpec};
pub use config::{ModelConfig, TrainConfig};
pub use error::{CheckpointError, CondError, NnError};
pub use model::{embed_tokens, forward, nll_loss, sequence_loss, Decoder};
pub use params::{Layout, ModelParams};
pub use sample::{sample, Sampled, SamplerOptions};
pub use train::{mean_loss, Example, Trainer};
