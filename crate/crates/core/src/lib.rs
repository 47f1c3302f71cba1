//! Sewing patterns as token sequences.
//!
//! [`pattern`] holds the domain types, [`codec`] maps patterns to and from
//! integer tokens, [`stitch`] derives and recovers seams, [`synth`] generates
//! parametric training garments and [`svg`] draws them.

pub mod codec;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pattern;
pub mod stitch;
pub mod svg;
pub mod synth;

pub use codec::{
    decode, decode_with, encode, fit_stats, param_class_of, quantize_value, Decoded, NormStats, ParamClass,
    QuantConfig, TokenMeta, TokenSeq, END, PAD, SPECIAL_TOKENS, START,
};
pub use error::{CodecError, GeometryError, IoError, StitchError};
pub use geometry::{bezier_point, rotate_by_quaternion, Point2, Quat, Vec3};
pub use pattern::{
    edge_midpoint_3d, reconstruct_vertices, validate_pattern, Edge, EdgeRef, Panel, Pattern, Placement, Stitch,
    ValidationReport,
};
pub use stitch::{assign_stitch_tags, recover_stitches, StitchMatchConfig, StitchRecovery, TagFrame};
pub use synth::{build_dataset, synth_pattern, Manifest, TemplateKind, TemplateSpec};
