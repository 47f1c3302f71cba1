//! Quantization of patterns into token sequences and the inverse mapping.
//!
//! Every panel becomes exactly `8K + 7` value tokens laid out as
//!
//! ```text
//! [4K edge coords][4 rotation][3 translation][3K stitch tags][K stitch flags]
//! ```
//!
//! Edge coordinates are standardized per channel, placement and tags are
//! min-max normalized, rotations map through `(q + 1) / 2`. Panels with fewer
//! than `K` edges are padded with trailing slots that encode the value 0.
//! A raw quantized value `r` becomes token id `r + C + 3`; ids 0..3 are the
//! special PAD, START and END tokens.

use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::geometry::{Quat, Vec3};
use crate::pattern::{edge_midpoint_3d, Edge, EdgeRef, Limits, Panel, Pattern, Placement};
use crate::stitch::{recover_stitches, StitchMatchConfig, TagFrame};

pub const PAD: u32 = 0;
pub const START: u32 = 1;
pub const END: u32 = 2;
/// Number of special ids below the first value token.
pub const SPECIAL_TOKENS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantConfig {
    /// Edge scale.
    pub c_e: u32,
    /// Rotation scale.
    pub c_r: u32,
    /// Translation scale.
    pub c_t: u32,
    /// Stitch-tag scale.
    pub c_s: u32,
    /// Offset that keeps every raw token non-negative.
    pub c: u32,
    /// Edge slots per panel.
    pub k: usize,
    pub max_tokens: usize,
    /// Standardized edge values are clamped to +-this before scaling.
    pub edge_clamp: f64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            c_e: 50,
            c_r: 1000,
            c_t: 1000,
            c_s: 1000,
            c: 1000,
            k: 14,
            max_tokens: 1500,
            edge_clamp: 4.0,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: &str| Err(CodecError::InvalidConfig(m.to_string()));
        if [self.c_e, self.c_r, self.c_t, self.c_s, self.c].contains(&0) || self.k == 0 || self.max_tokens == 0 {
            return bad("all scales, C, K and max_tokens must be positive");
        }
        if !(self.edge_clamp > 0.0 && self.edge_clamp.is_finite()) {
            return bad("edge_clamp must be positive and finite");
        }
        if i64::from(self.c) < self.max_abs_raw() {
            return bad("C is smaller than the largest clamped quantized magnitude");
        }
        Ok(())
    }

    /// Value tokens per panel, `8K + 7`.
    pub fn tokens_per_panel(&self) -> usize {
        8 * self.k + 7
    }

    /// Sequence length of a pattern with `panels` panels.
    pub fn sequence_len(&self, panels: usize) -> usize {
        2 + self.tokens_per_panel() * panels
    }

    /// Largest panel count that fits in `max_tokens`.
    pub fn max_panels(&self) -> usize {
        self.max_tokens.saturating_sub(2) / self.tokens_per_panel()
    }

    pub fn limits(&self) -> Limits {
        Limits { max_edges: self.k, max_panels: self.max_panels() }
    }

    fn edge_bound(&self) -> i64 {
        (self.edge_clamp * f64::from(self.c_e)).round() as i64
    }

    fn max_abs_raw(&self) -> i64 {
        [self.edge_bound(), i64::from(self.c_r), i64::from(self.c_t), i64::from(self.c_s), 1]
            .into_iter()
            .max()
            .unwrap_or(1)
    }

    /// `3 + C + max quantized magnitude + 1`; 2004 for the defaults.
    pub fn vocab_size(&self) -> usize {
        (i64::from(SPECIAL_TOKENS) + i64::from(self.c) + self.max_abs_raw() + 1) as usize
    }

    fn to_id(self, raw: i64) -> u32 {
        (raw + i64::from(self.c) + i64::from(SPECIAL_TOKENS)) as u32
    }

    fn to_raw(self, id: u32) -> i64 {
        i64::from(id) - i64::from(SPECIAL_TOKENS) - i64::from(self.c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub edge_mean: [f64; 4],
    pub edge_std: [f64; 4],
    pub trans_min: Vec3,
    pub trans_max: Vec3,
    pub tag_min: Vec3,
    pub tag_max: Vec3,
}

impl NormStats {
    /// Stats under which every channel passes through unchanged.
    pub fn identity() -> Self {
        NormStats {
            edge_mean: [0.0; 4],
            edge_std: [1.0; 4],
            trans_min: [0.0; 3],
            trans_max: [1.0; 3],
            tag_min: [0.0; 3],
            tag_max: [1.0; 3],
        }
    }

    pub fn tag_frame(&self) -> TagFrame {
        TagFrame { min: self.tag_min, max: self.tag_max }
    }

    pub fn trans_frame(&self) -> TagFrame {
        TagFrame { min: self.trans_min, max: self.trans_max }
    }

    pub fn standardize_edge(&self, e: &Edge) -> [f64; 4] {
        let p = e.params();
        std::array::from_fn(|c| (p[c] - self.edge_mean[c]) / self.edge_std[c])
    }

    pub fn destandardize_edge(&self, s: [f64; 4]) -> Edge {
        let p: [f64; 4] = std::array::from_fn(|c| s[c] * self.edge_std[c] + self.edge_mean[c]);
        Edge::new([p[0], p[1]], [p[2], p[3]])
    }
}

fn denormalize(frame: &TagFrame, v: Vec3) -> Vec3 {
    std::array::from_fn(|i| {
        let range = frame.max[i] - frame.min[i];
        let range = if range > 0.0 { range } else { 1.0 };
        v[i] * range + frame.min[i]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamClass {
    EdgeCoord,
    Rotation,
    Translation,
    StitchTag,
    StitchFlag,
    Special,
}

impl ParamClass {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Class of the value at `slot` within one panel's `8K + 7` tokens.
pub fn param_class_of(slot: usize, k: usize) -> Result<ParamClass, CodecError> {
    let per_panel = 8 * k + 7;
    Ok(match slot {
        s if s < 4 * k => ParamClass::EdgeCoord,
        s if s < 4 * k + 4 => ParamClass::Rotation,
        s if s < 4 * k + 7 => ParamClass::Translation,
        s if s < 7 * k + 7 => ParamClass::StitchTag,
        s if s < per_panel => ParamClass::StitchFlag,
        _ => return Err(CodecError::SlotOutOfRange { slot, per_panel }),
    })
}

/// Position metadata of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMeta {
    /// 1-based panel index; 0 for START and END.
    pub panel: usize,
    pub class: ParamClass,
    /// Slot within the panel; 0 for START and END.
    pub slot: usize,
}

impl TokenMeta {
    pub const SPECIAL: TokenMeta = TokenMeta { panel: 0, class: ParamClass::Special, slot: 0 };

    /// Metadata of the value token at interior position `pos` (0 = first token after START).
    pub fn interior(pos: usize, k: usize) -> TokenMeta {
        let per_panel = 8 * k + 7;
        let slot = pos % per_panel;
        TokenMeta {
            panel: pos / per_panel + 1,
            class: param_class_of(slot, k).expect("slot reduced modulo panel size"),
            slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub meta: Vec<TokenMeta>,
    pub vocab_size: usize,
}

impl TokenSeq {
    /// Builds a sequence with metadata derived from position alone: the first
    /// token and any END are special, everything else is an interior slot.
    pub fn from_ids(ids: Vec<u32>, k: usize, vocab_size: usize) -> Self {
        let meta = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                if i == 0 || id == END {
                    TokenMeta::SPECIAL
                } else {
                    TokenMeta::interior(i - 1, k)
                }
            })
            .collect();
        TokenSeq { ids, meta, vocab_size }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Rounds `scale * x` half away from zero and clamps to `+-round(bound * scale)`.
pub fn quantize_value(x: f64, scale: u32, bound: f64) -> Result<i64, CodecError> {
    if !x.is_finite() {
        return Err(CodecError::NonFinite(x));
    }
    let s = f64::from(scale);
    let q = (bound * s).round();
    Ok((s * x).round().clamp(-q, q) as i64)
}

pub fn dequantize_value(raw: i64, scale: u32) -> f64 {
    raw as f64 / f64::from(scale)
}

pub fn fit_stats<'a, I>(patterns: I) -> Result<NormStats, CodecError>
where
    I: IntoIterator<Item = &'a Pattern>,
{
    let patterns: Vec<&Pattern> = patterns.into_iter().collect();
    if patterns.is_empty() {
        return Err(CodecError::EmptyDataset);
    }

    let mut edges: Vec<[f64; 4]> = Vec::new();
    let mut trans_min = [f64::INFINITY; 3];
    let mut trans_max = [f64::NEG_INFINITY; 3];
    let mut tag_min = [f64::INFINITY; 3];
    let mut tag_max = [f64::NEG_INFINITY; 3];
    for pattern in &patterns {
        for panel in &pattern.panels {
            for c in 0..3 {
                trans_min[c] = trans_min[c].min(panel.placement.translation[c]);
                trans_max[c] = trans_max[c].max(panel.placement.translation[c]);
            }
            for (j, e) in panel.edges.iter().enumerate() {
                edges.push(e.params());
                let m = edge_midpoint_3d(panel, j).map_err(|e| CodecError::InvalidConfig(e.to_string()))?;
                for c in 0..3 {
                    tag_min[c] = tag_min[c].min(m[c]);
                    tag_max[c] = tag_max[c].max(m[c]);
                }
            }
        }
    }
    if edges.is_empty() {
        return Err(CodecError::EmptyDataset);
    }

    let n = edges.len() as f64;
    let mut edge_mean = [0.0; 4];
    for e in &edges {
        for c in 0..4 {
            edge_mean[c] += e[c];
        }
    }
    edge_mean.iter_mut().for_each(|m| *m /= n);
    let mut edge_std = [0.0; 4];
    for e in &edges {
        for c in 0..4 {
            edge_std[c] += (e[c] - edge_mean[c]).powi(2);
        }
    }
    for s in &mut edge_std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    Ok(NormStats { edge_mean, edge_std, trans_min, trans_max, tag_min, tag_max })
}

pub fn encode(pattern: &Pattern, stats: &NormStats, cfg: &QuantConfig) -> Result<TokenSeq, CodecError> {
    let k = cfg.k;
    let len = cfg.sequence_len(pattern.panels.len());
    for (pi, panel) in pattern.panels.iter().enumerate() {
        if panel.edges.len() > k {
            return Err(CodecError::PanelTooLarge { panel: pi, edges: panel.edges.len(), k });
        }
        if !panel.has_stitch_data() {
            return Err(CodecError::MissingStitchData(pi));
        }
    }
    if len > cfg.max_tokens {
        return Err(CodecError::SequenceTooLong { len, max: cfg.max_tokens });
    }

    let mut raw: Vec<i64> = Vec::with_capacity(len - 2);
    let tag_frame = stats.tag_frame();
    let trans_frame = stats.trans_frame();
    for panel in &pattern.panels {
        let n = panel.edges.len();
        for j in 0..k {
            let s = if j < n { stats.standardize_edge(&panel.edges[j]) } else { [0.0; 4] };
            for v in s {
                raw.push(quantize_value(v, cfg.c_e, cfg.edge_clamp)?);
            }
        }
        for q in panel.placement.rotation.to_array() {
            raw.push(quantize_value((q + 1.0) / 2.0, cfg.c_r, 1.0)?);
        }
        for v in trans_frame.normalize(panel.placement.translation) {
            raw.push(quantize_value(v, cfg.c_t, 1.0)?);
        }
        for j in 0..k {
            let t = if j < n && panel.stitch_flags[j] == 1 {
                tag_frame.normalize(panel.stitch_tags[j])
            } else {
                [0.0; 3]
            };
            for v in t {
                raw.push(quantize_value(v, cfg.c_s, 1.0)?);
            }
        }
        for j in 0..k {
            raw.push(if j < n { i64::from(panel.stitch_flags[j].min(1)) } else { 0 });
        }
    }

    let mut ids = Vec::with_capacity(len);
    ids.push(START);
    ids.extend(raw.into_iter().map(|r| cfg.to_id(r)));
    ids.push(END);
    Ok(TokenSeq::from_ids(ids, k, cfg.vocab_size()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub pattern: Pattern,
    /// Positions (0-based, in token order) of panels dropped for having fewer than 3 edges.
    pub dropped_panels: Vec<usize>,
    /// Flagged edges with no partner; their flags and tags are cleared in `pattern`.
    pub unmatched: Vec<EdgeRef>,
}

/// Decodes with the default stitch threshold, comparing tags in the stats' tag frame.
pub fn decode(tokens: &[u32], stats: &NormStats, cfg: &QuantConfig) -> Result<Decoded, CodecError> {
    let match_cfg = StitchMatchConfig { frame: stats.tag_frame(), ..StitchMatchConfig::default() };
    decode_with(tokens, stats, cfg, &match_cfg)
}

pub fn decode_with(
    tokens: &[u32],
    stats: &NormStats,
    cfg: &QuantConfig,
    match_cfg: &StitchMatchConfig,
) -> Result<Decoded, CodecError> {
    let vocab = cfg.vocab_size();
    if let Some((pos, &id)) = tokens.iter().enumerate().find(|(_, &id)| id as usize >= vocab) {
        return Err(CodecError::TokenOutOfRange { id, pos, vocab });
    }
    if tokens.first() != Some(&START) {
        return Err(CodecError::MalformedSequence("sequence does not begin with START".into()));
    }
    let body = &tokens[1..];
    let interior = body.strip_suffix(&[END]).unwrap_or(body);
    if let Some(pos) = interior.iter().position(|&id| id < SPECIAL_TOKENS) {
        return Err(CodecError::MalformedSequence(format!(
            "special token {} inside the sequence at position {}",
            interior[pos],
            pos + 1
        )));
    }
    let per_panel = cfg.tokens_per_panel();
    if !interior.len().is_multiple_of(per_panel) {
        return Err(CodecError::MalformedSequence(format!(
            "{} interior tokens is not a multiple of {per_panel}",
            interior.len()
        )));
    }
    if interior.is_empty() {
        return Err(CodecError::NoPanels);
    }

    let mut panels = Vec::new();
    let mut dropped_panels = Vec::new();
    for (pi, chunk) in interior.chunks(per_panel).enumerate() {
        match decode_panel(chunk, stats, cfg) {
            Some(panel) => panels.push(panel),
            None => dropped_panels.push(pi),
        }
    }
    if panels.is_empty() {
        return Err(CodecError::NoPanels);
    }

    let mut pattern = Pattern { panels, stitches: Vec::new(), caption: None };
    let recovery = recover_stitches(&pattern, match_cfg);
    for r in &recovery.unmatched {
        let panel = &mut pattern.panels[r.0];
        panel.stitch_flags[r.1] = 0;
        panel.stitch_tags[r.1] = [0.0; 3];
    }
    pattern.stitches = recovery.stitches;
    Ok(Decoded { pattern, dropped_panels, unmatched: recovery.unmatched })
}

/// Returns `None` when fewer than 3 real edges remain after removing padding.
fn decode_panel(chunk: &[u32], stats: &NormStats, cfg: &QuantConfig) -> Option<Panel> {
    let k = cfg.k;
    let raw: Vec<i64> = chunk.iter().map(|&id| cfg.to_raw(id)).collect();
    let (edge_raw, rest) = raw.split_at(4 * k);
    let (rot_raw, rest) = rest.split_at(4);
    let (trans_raw, rest) = rest.split_at(3);
    let (tag_raw, flag_raw) = rest.split_at(3 * k);

    let padded = |j: usize| {
        edge_raw[4 * j..4 * j + 4].iter().all(|&r| r == 0)
            && tag_raw[3 * j..3 * j + 3].iter().all(|&r| r == 0)
            && flag_raw[j] == 0
    };
    let mut n = k;
    while n > 0 && padded(n - 1) {
        n -= 1;
    }
    if n < 3 {
        return None;
    }

    let edges = (0..n)
        .map(|j| {
            let s = std::array::from_fn(|c| dequantize_value(edge_raw[4 * j + c], cfg.c_e));
            stats.destandardize_edge(s)
        })
        .collect();

    let q: [f64; 4] = std::array::from_fn(|c| 2.0 * dequantize_value(rot_raw[c], cfg.c_r) - 1.0);
    let rotation = Quat::from(q).normalized().unwrap_or(Quat::IDENTITY);
    let t: Vec3 = std::array::from_fn(|c| dequantize_value(trans_raw[c], cfg.c_t));
    let translation = denormalize(&stats.trans_frame(), t);

    // Raw flag value minus C is thresholded at 0.5.
    let stitch_flags: Vec<u8> = (0..n).map(|j| u8::from(flag_raw[j] as f64 >= 0.5)).collect();
    let tag_frame = stats.tag_frame();
    let stitch_tags = (0..n)
        .map(|j| {
            if stitch_flags[j] == 1 {
                let v = std::array::from_fn(|c| dequantize_value(tag_raw[3 * j + c], cfg.c_s));
                denormalize(&tag_frame, v)
            } else {
                [0.0; 3]
            }
        })
        .collect();

    Some(Panel { edges, placement: Placement::new(rotation, translation), stitch_tags, stitch_flags })
}

/// Largest deviations between a pattern and its decoded reconstruction, each
/// measured in the space the codec quantizes that channel in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    /// Standardized edge units.
    pub edge: f64,
    /// `(q + 1) / 2` units, after renormalization.
    pub rotation: f64,
    /// Normalized translation units.
    pub translation: f64,
    /// Normalized tag units, over stitched edges.
    pub tag: f64,
    pub counts_exact: bool,
    pub flags_exact: bool,
    pub stitches_exact: bool,
}

impl RoundTripReport {
    pub fn within_quantization(&self, cfg: &QuantConfig) -> bool {
        let tol = |scale: u32| 0.5 / f64::from(scale) + 1e-9;
        self.counts_exact
            && self.flags_exact
            && self.stitches_exact
            && self.edge <= tol(cfg.c_e)
            && self.rotation <= tol(cfg.c_r)
            && self.translation <= tol(cfg.c_t)
            && self.tag <= tol(cfg.c_s)
    }
}

pub fn compare_roundtrip(original: &Pattern, decoded: &Pattern, stats: &NormStats) -> RoundTripReport {
    let mut r = RoundTripReport {
        edge: 0.0,
        rotation: 0.0,
        translation: 0.0,
        tag: 0.0,
        counts_exact: original.panels.len() == decoded.panels.len(),
        flags_exact: true,
        stitches_exact: original.stitch_set() == decoded.stitch_set(),
    };
    let (tag_frame, trans_frame) = (stats.tag_frame(), stats.trans_frame());
    for (a, b) in original.panels.iter().zip(&decoded.panels) {
        if a.edges.len() != b.edges.len() {
            r.counts_exact = false;
            continue;
        }
        for (ea, eb) in a.edges.iter().zip(&b.edges) {
            let (sa, sb) = (stats.standardize_edge(ea), stats.standardize_edge(eb));
            for c in 0..4 {
                r.edge = r.edge.max((sa[c] - sb[c]).abs());
            }
        }
        let (qa, qb) = (a.placement.rotation.to_array(), b.placement.rotation.to_array());
        for c in 0..4 {
            r.rotation = r.rotation.max(((qa[c] - qb[c]) / 2.0).abs());
        }
        let (ta, tb) = (trans_frame.normalize(a.placement.translation), trans_frame.normalize(b.placement.translation));
        for c in 0..3 {
            r.translation = r.translation.max((ta[c] - tb[c]).abs());
        }
        r.flags_exact &= a.stitch_flags == b.stitch_flags;
        for j in 0..a.edges.len() {
            if a.stitch_flags.get(j) == Some(&1) {
                let (x, y) = (tag_frame.normalize(a.stitch_tags[j]), tag_frame.normalize(b.stitch_tags[j]));
                for c in 0..3 {
                    r.tag = r.tag.max((x[c] - y[c]).abs());
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Stitch;
    use crate::stitch::assign_stitch_tags;

    fn rect(w: f64, h: f64, t: Vec3) -> Panel {
        let pts = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
        let edges = (0..4).map(|i| Edge::straight(pts[i], pts[(i + 1) % 4])).collect();
        Panel::new(edges, Placement::new(Quat::IDENTITY, t))
    }

    fn panels(n: usize) -> Pattern {
        let panels = (0..n).map(|i| rect(10.0 + i as f64, 20.0, [i as f64 * 30.0, 0.0, 0.0])).collect();
        Pattern { panels, stitches: vec![], caption: None }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_value(0.123, 50, 4.0).unwrap(), 6);
        assert_eq!(quantize_value(0.0, 50, 4.0).unwrap(), 0);
        assert_eq!(quantize_value(0.0, 1000, 1.0).unwrap(), 0);
        assert_eq!(quantize_value(9.0, 50, 4.0).unwrap(), 200);
        assert_eq!(quantize_value(-9.0, 50, 4.0).unwrap(), -200);
        assert_eq!(quantize_value(0.01, 50, 4.0).unwrap(), 1); // 0.5 rounds away from zero
        assert_eq!(quantize_value(-0.01, 50, 4.0).unwrap(), -1);
        assert!(matches!(quantize_value(f64::NAN, 50, 4.0), Err(CodecError::NonFinite(_))));
    }

    #[test]
    fn slot_layout() {
        assert_eq!(param_class_of(0, 14).unwrap(), ParamClass::EdgeCoord);
        assert_eq!(param_class_of(55, 14).unwrap(), ParamClass::EdgeCoord);
        assert_eq!(param_class_of(56, 14).unwrap(), ParamClass::Rotation);
        assert_eq!(param_class_of(60, 14).unwrap(), ParamClass::Translation);
        assert_eq!(param_class_of(63, 14).unwrap(), ParamClass::StitchTag);
        assert_eq!(param_class_of(105, 14).unwrap(), ParamClass::StitchFlag);
        assert_eq!(param_class_of(118, 14).unwrap(), ParamClass::StitchFlag);
        assert!(param_class_of(119, 14).is_err());
    }

    #[test]
    fn default_vocab() {
        let cfg = QuantConfig::default();
        assert_eq!(cfg.vocab_size(), 2004);
        assert_eq!(cfg.tokens_per_panel(), 119);
        assert_eq!(cfg.max_panels(), 12);
        cfg.validate().unwrap();
        let bad = QuantConfig { c: 100, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stats_examples() {
        let mk = |x: f64, t: Vec3| {
            let mut p = rect(2.0, 2.0, t);
            for e in &mut p.edges {
                e.start[0] = x;
            }
            p
        };
        let pat = Pattern { panels: vec![mk(0.0, [0.0; 3]), mk(2.0, [2.0, 4.0, 0.0])], stitches: vec![], caption: None };
        let s = fit_stats([&pat]).unwrap();
        assert_eq!(s.edge_mean[0], 1.0);
        assert_eq!(s.edge_std[0], 1.0);
        assert_eq!(s.trans_min, [0.0; 3]);
        assert_eq!(s.trans_max, [2.0, 4.0, 0.0]);
        // z range is degenerate and normalizes with range 1.
        assert_eq!(s.trans_frame().normalize([1.0, 1.0, 0.5]), [0.5, 0.25, 0.5]);

        assert_eq!(fit_stats(std::iter::empty()), Err(CodecError::EmptyDataset));
    }

    #[test]
    fn sequence_lengths() {
        let cfg = QuantConfig::default();
        let stats = NormStats::identity();
        let toks = encode(&panels(3), &stats, &cfg).unwrap();
        assert_eq!(toks.len(), 359);
        assert_eq!(toks.meta.len(), 359);
        assert_eq!(toks.ids[0], START);
        assert_eq!(*toks.ids.last().unwrap(), END);

        assert_eq!(
            encode(&panels(13), &stats, &cfg),
            Err(CodecError::SequenceTooLong { len: 1549, max: 1500 })
        );
        assert_eq!(encode(&panels(12), &stats, &cfg).unwrap().len(), 1430);
    }

    #[test]
    fn flag_token_id() {
        let mut pat = panels(2);
        pat.stitches = vec![Stitch::new(EdgeRef(0, 1), EdgeRef(1, 3))];
        let pat = assign_stitch_tags(&pat).unwrap();
        let stats = fit_stats([&pat]).unwrap();
        let cfg = QuantConfig::default();
        let toks = encode(&pat, &stats, &cfg).unwrap();
        // Flag of edge 1 of panel 0 sits at slot 7K + 7 + 1.
        assert_eq!(toks.ids[1 + 7 * 14 + 7 + 1], 1004);
        assert_eq!(toks.ids[1 + 7 * 14 + 7], 1003);
        assert_eq!(toks.meta[1 + 7 * 14 + 7 + 1].class, ParamClass::StitchFlag);
    }

    #[test]
    fn panel_too_large() {
        let mut pat = panels(1);
        let extra: Vec<Edge> = (0..11).map(|i| Edge::straight([0.0, i as f64], [0.0, i as f64 + 1.0])).collect();
        pat.panels[0].edges.extend(extra);
        pat.panels[0].stitch_tags = vec![[0.0; 3]; 15];
        pat.panels[0].stitch_flags = vec![0; 15];
        assert!(matches!(
            encode(&pat, &NormStats::identity(), &QuantConfig::default()),
            Err(CodecError::PanelTooLarge { edges: 15, .. })
        ));
    }

    #[test]
    fn edge_token_dequantizes() {
        let cfg = QuantConfig::default();
        let mut ids = vec![START];
        ids.extend(std::iter::repeat_n(1003, 119));
        ids.push(END);
        // First edge: x = 6 / 50 standardized, three more real edges with nonzero y.
        ids[1] = 1009;
        for j in 0..3 {
            ids[1 + 4 * j + 1] = 1003 + 10 * (j as u32 + 1);
        }
        let d = decode(&ids, &NormStats::identity(), &cfg).unwrap();
        assert_eq!(d.pattern.panels[0].edges.len(), 3);
        assert!((d.pattern.panels[0].edges[0].start[0] - 0.12).abs() < 1e-12);
    }

    #[test]
    fn malformed_sequences() {
        let cfg = QuantConfig::default();
        let stats = NormStats::identity();
        let mut ids = vec![START];
        ids.extend(std::iter::repeat_n(1003, 118));
        ids.push(END);
        assert!(matches!(decode(&ids, &stats, &cfg), Err(CodecError::MalformedSequence(_))));

        assert!(matches!(decode(&[START, 5000, END], &stats, &cfg), Err(CodecError::TokenOutOfRange { id: 5000, .. })));
        assert!(matches!(decode(&[1003, END], &stats, &cfg), Err(CodecError::MalformedSequence(_))));
        assert!(matches!(decode(&[START, END], &stats, &cfg), Err(CodecError::NoPanels)));
    }

    #[test]
    fn degenerate_panel_is_dropped() {
        let cfg = QuantConfig::default();
        let stats = NormStats::identity();
        let good = encode(&panels(1), &stats, &cfg).unwrap().ids;
        let mut ids = vec![START];
        ids.extend(std::iter::repeat_n(1003, 119)); // all padding
        ids.extend_from_slice(&good[1..good.len() - 1]);
        ids.push(END);
        let d = decode(&ids, &stats, &cfg).unwrap();
        assert_eq!(d.dropped_panels, vec![0]);
        assert_eq!(d.pattern.panels.len(), 1);
    }

    #[test]
    fn roundtrip_small() {
        let mut pat = panels(3);
        pat.stitches = vec![
            Stitch::new(EdgeRef(0, 1), EdgeRef(1, 3)),
            Stitch::new(EdgeRef(1, 1), EdgeRef(2, 3)),
        ];
        pat.panels[1].placement.rotation = Quat::from_axis_angle([0.0, 1.0, 0.0], 0.3);
        let pat = assign_stitch_tags(&pat).unwrap();
        let stats = fit_stats([&pat]).unwrap();
        let cfg = QuantConfig::default();
        let toks = encode(&pat, &stats, &cfg).unwrap();
        let d = decode(&toks.ids, &stats, &cfg).unwrap();
        let report = compare_roundtrip(&pat, &d.pattern, &stats);
        assert!(report.within_quantization(&cfg), "{report:?}");
        assert!(d.unmatched.is_empty());
        // Encoding is deterministic.
        assert_eq!(encode(&pat, &stats, &cfg).unwrap(), toks);
    }
}
