use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bezier parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("quaternion is not unit length (|q| = {0})")]
    NonUnitQuaternion(f64),
    #[error("edge index {index} out of range for panel with {len} edges")]
    EdgeIndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("cannot fit statistics on an empty dataset")]
    EmptyDataset,
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("panel {panel} has {edges} edges, more than K = {k}")]
    PanelTooLarge { panel: usize, edges: usize, k: usize },
    #[error("sequence of {len} tokens exceeds the cap of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("malformed sequence: {0}")]
    MalformedSequence(String),
    #[error("token {id} at position {pos} is outside the vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, pos: usize, vocab: usize },
    #[error("slot {slot} outside a panel of {per_panel} slots")]
    SlotOutOfRange { slot: usize, per_panel: usize },
    #[error("no panel survived decoding")]
    NoPanels,
    #[error("pattern is missing stitch tags or flags on panel {0}")]
    MissingStitchData(usize),
    #[error("invalid quantization config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("edge ({0}, {1}) appears in more than one stitch")]
    EdgeReused(usize, usize),
    #[error("stitch references missing edge ({0}, {1})")]
    EdgeOutOfRange(usize, usize),
    #[error("stitch joins edge ({0}, {1}) to itself")]
    SelfStitch(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Stitch(#[from] StitchError),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        IoError::Json { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        IoError::Format { path: path.into(), message: message.into() }
    }
}
