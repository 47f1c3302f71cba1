use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("token id {id} at position {pos} is outside the vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, pos: usize, vocab: usize },
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token at position {pos} belongs to panel {panel}, beyond max_panels {max}")]
    PanelOutOfRange { pos: usize, panel: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error(transparent)]
    Cond(#[from] CondError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Error)]
pub enum CondError {
    #[error("caption not found in embedding file: {0:?}")]
    UnknownCaption(String),
    #[error("condition vector has width {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid provider: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    NotACheckpoint,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
