//! Sewing pattern domain types and their validation.
//!
//! A pattern is an ordered list of flat panels placed in 3D, plus the list of
//! edge pairs that are sewn together. Each panel boundary is a closed loop of
//! quadratic Bezier edges; only the start point and the control point of every
//! edge are stored, and edge `j` ends where edge `j + 1 (mod n)` starts.
//! Control points are absolute panel-local coordinates, so a straight edge has
//! its control at the edge midpoint. Lengths are centimeters.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::geometry::{bezier_point, signed_area, Point2, Quat, Vec3};

/// Default per-panel edge limit of the codec.
pub const DEFAULT_MAX_EDGES: usize = 14;
/// Largest panel count whose sequence `2 + 119 * n` fits in 1500 tokens.
pub const DEFAULT_MAX_PANELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub start: Point2,
    pub control: Point2,
}

impl Edge {
    pub fn new(start: Point2, control: Point2) -> Self {
        Edge { start, control }
    }

    /// Straight edge from `start` to `end`.
    pub fn straight(start: Point2, end: Point2) -> Self {
        Edge { start, control: [0.5 * (start[0] + end[0]), 0.5 * (start[1] + end[1])] }
    }

    pub fn params(&self) -> [f64; 4] {
        [self.start[0], self.start[1], self.control[0], self.control[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Placement {
    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Placement { rotation, translation }
    }

    pub fn apply(&self, local: Vec3) -> Result<Vec3, GeometryError> {
        let r = self.rotation.rotate(local)?;
        Ok([r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]])
    }
}

impl Default for Placement {
    fn default() -> Self {
        Placement { rotation: Quat::IDENTITY, translation: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub edges: Vec<Edge>,
    #[serde(flatten)]
    pub placement: Placement,
    /// Per-edge stitch tag in world units; zero for free edges.
    #[serde(default)]
    pub stitch_tags: Vec<Vec3>,
    #[serde(default)]
    pub stitch_flags: Vec<u8>,
}

impl Panel {
    /// Panel with all edges free.
    pub fn new(edges: Vec<Edge>, placement: Placement) -> Self {
        let n = edges.len();
        Panel { edges, placement, stitch_tags: vec![[0.0; 3]; n], stitch_flags: vec![0; n] }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// End point of edge `j`, i.e. the start of the following edge.
    pub fn edge_end(&self, j: usize) -> Point2 {
        self.edges[(j + 1) % self.edges.len()].start
    }

    pub fn has_stitch_data(&self) -> bool {
        self.stitch_tags.len() == self.edges.len() && self.stitch_flags.len() == self.edges.len()
    }
}

/// Reference to edge `edge` of panel `panel`. Serialized as `[panel, edge]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef(pub usize, pub usize);

impl EdgeRef {
    pub fn panel(self) -> usize {
        self.0
    }

    pub fn edge(self) -> usize {
        self.1
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

/// An unordered pair of sewn edges.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stitch {
    pub a: EdgeRef,
    pub b: EdgeRef,
}

impl Stitch {
    pub fn new(a: EdgeRef, b: EdgeRef) -> Self {
        Stitch { a, b }
    }

    /// The pair with the smaller reference first.
    pub fn canonical(self) -> (EdgeRef, EdgeRef) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

impl PartialEq for Stitch {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Eq for Stitch {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub panels: Vec<Panel>,
    #[serde(default)]
    pub stitches: Vec<Stitch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl Pattern {
    /// Stitches as a sorted list of canonical pairs, for set comparison.
    pub fn stitch_set(&self) -> Vec<(EdgeRef, EdgeRef)> {
        canonical_stitch_set(&self.stitches)
    }

    pub fn edge_count(&self) -> usize {
        self.panels.iter().map(Panel::edge_count).sum()
    }
}

pub fn canonical_stitch_set(stitches: &[Stitch]) -> Vec<(EdgeRef, EdgeRef)> {
    let mut set: Vec<_> = stitches.iter().map(|s| s.canonical()).collect();
    set.sort();
    set
}

/// One vertex per edge: the stored start points, in order.
pub fn reconstruct_vertices(panel: &Panel) -> Vec<Point2> {
    panel.edges.iter().map(|e| e.start).collect()
}

/// World-space position of the midpoint (`t = 0.5`) of an edge.
pub fn edge_midpoint_3d(panel: &Panel, edge_index: usize) -> Result<Vec3, GeometryError> {
    let n = panel.edges.len();
    if edge_index >= n {
        return Err(GeometryError::EdgeIndexOutOfRange { index: edge_index, len: n });
    }
    let e = panel.edges[edge_index];
    let m = bezier_point(e.start, e.control, panel.edge_end(edge_index), 0.5)?;
    panel.placement.apply([m[0], m[1], 0.0])
}

/// Structural limits a pattern is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_edges: usize,
    pub max_panels: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_edges: DEFAULT_MAX_EDGES, max_panels: DEFAULT_MAX_PANELS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    PanelCount,
    MinEdges,
    MaxEdges,
    NonFinite,
    DegenerateEdge,
    UnitQuaternion,
    TagCount,
    FlagCount,
    FlagValue,
    FreeEdgeTag,
    StitchIndex,
    SelfStitch,
    EdgeReused,
    FlagMismatch,
    Clockwise,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::PanelCount => "PANEL_COUNT",
            Rule::MinEdges => "MIN_EDGES",
            Rule::MaxEdges => "MAX_EDGES",
            Rule::NonFinite => "NON_FINITE",
            Rule::DegenerateEdge => "DEGENERATE_EDGE",
            Rule::UnitQuaternion => "UNIT_QUATERNION",
            Rule::TagCount => "TAG_COUNT",
            Rule::FlagCount => "FLAG_COUNT",
            Rule::FlagValue => "FLAG_VALUE",
            Rule::FreeEdgeTag => "FREE_EDGE_TAG",
            Rule::StitchIndex => "STITCH_INDEX",
            Rule::SelfStitch => "SELF_STITCH",
            Rule::EdgeReused => "EDGE_REUSED",
            Rule::FlagMismatch => "FLAG_MISMATCH",
            Rule::Clockwise => "CLOCKWISE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub rule: Rule,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} {} at {}: {}", self.rule.id(), self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when no violation is an error; warnings are allowed.
    pub fn is_valid(&self) -> bool {
        self.violations.iter().all(|v| v.severity == Severity::Warning)
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, location: String, rule: Rule, severity: Severity, message: String) {
        self.violations.push(Violation { location, rule, severity, message });
    }

    fn error(&mut self, location: String, rule: Rule, message: String) {
        self.push(location, rule, Severity::Error, message);
    }
}

pub fn validate_pattern(pattern: &Pattern) -> ValidationReport {
    validate_pattern_with(pattern, Limits::default())
}

pub fn validate_pattern_with(pattern: &Pattern, limits: Limits) -> ValidationReport {
    let mut report = ValidationReport::default();
    let np = pattern.panels.len();
    if np == 0 || np > limits.max_panels {
        report.error(
            "pattern".into(),
            Rule::PanelCount,
            format!("{np} panels, expected 1..={}", limits.max_panels),
        );
    }

    for (pi, panel) in pattern.panels.iter().enumerate() {
        validate_panel(pi, panel, limits, &mut report);
    }

    // Stitch list, then flag consistency against it.
    let mut used: HashMap<EdgeRef, usize> = HashMap::new();
    for (si, stitch) in pattern.stitches.iter().enumerate() {
        let loc = format!("stitches[{si}]");
        let mut in_range = true;
        for r in [stitch.a, stitch.b] {
            let ok = pattern.panels.get(r.0).is_some_and(|p| r.1 < p.edges.len());
            if !ok {
                in_range = false;
                report.error(loc.clone(), Rule::StitchIndex, format!("edge {r} does not exist"));
            }
        }
        if stitch.a == stitch.b {
            report.error(loc.clone(), Rule::SelfStitch, format!("edge {} stitched to itself", stitch.a));
            continue;
        }
        if !in_range {
            continue;
        }
        for r in [stitch.a, stitch.b] {
            if let Some(prev) = used.insert(r, si) {
                report.error(
                    loc.clone(),
                    Rule::EdgeReused,
                    format!("edge {r} already used by stitches[{prev}]"),
                );
            }
        }
    }
    for (pi, panel) in pattern.panels.iter().enumerate() {
        if !panel.has_stitch_data() {
            continue;
        }
        for (ei, &flag) in panel.stitch_flags.iter().enumerate() {
            let stitched = used.contains_key(&EdgeRef(pi, ei));
            if (flag == 1) != stitched {
                report.error(
                    format!("panels[{pi}].edges[{ei}]"),
                    Rule::FlagMismatch,
                    format!("flag {flag} but edge is {}stitched", if stitched { "" } else { "not " }),
                );
            }
        }
    }
    report
}

fn validate_panel(pi: usize, panel: &Panel, limits: Limits, report: &mut ValidationReport) {
    let loc = format!("panels[{pi}]");
    let n = panel.edges.len();
    if n < 3 {
        report.error(loc.clone(), Rule::MinEdges, format!("{n} edges, at least 3 required"));
    }
    if n > limits.max_edges {
        report.error(loc.clone(), Rule::MaxEdges, format!("{n} edges, at most {} allowed", limits.max_edges));
    }

    let q = panel.placement.rotation;
    let place_vals = q.to_array().into_iter().chain(panel.placement.translation);
    if place_vals.clone().any(|v| !v.is_finite()) {
        report.error(loc.clone(), Rule::NonFinite, "placement has non-finite values".into());
    } else if !q.is_unit() {
        report.error(loc.clone(), Rule::UnitQuaternion, format!("|rotation| = {}", q.norm()));
    }

    let mut finite = true;
    for (ei, e) in panel.edges.iter().enumerate() {
        if e.params().iter().any(|v| !v.is_finite()) {
            finite = false;
            report.error(format!("{loc}.edges[{ei}]"), Rule::NonFinite, "edge has non-finite values".into());
        }
    }
    if finite && n >= 1 {
        for ei in 0..n {
            let e = panel.edges[ei];
            if e.start == panel.edge_end(ei) && e.control == e.start {
                report.error(format!("{loc}.edges[{ei}]"), Rule::DegenerateEdge, "zero-length edge".into());
            }
        }
    }

    if panel.stitch_tags.len() != n {
        report.error(loc.clone(), Rule::TagCount, format!("{} stitch tags for {n} edges", panel.stitch_tags.len()));
    }
    if panel.stitch_flags.len() != n {
        report.error(loc.clone(), Rule::FlagCount, format!("{} stitch flags for {n} edges", panel.stitch_flags.len()));
    }
    for (ei, &flag) in panel.stitch_flags.iter().enumerate() {
        if flag > 1 {
            report.error(format!("{loc}.edges[{ei}]"), Rule::FlagValue, format!("flag {flag} is not 0 or 1"));
        } else if flag == 0 && panel.stitch_tags.get(ei).is_some_and(|t| *t != [0.0; 3]) {
            report.error(format!("{loc}.edges[{ei}]"), Rule::FreeEdgeTag, "free edge carries a non-zero tag".into());
        }
    }
    for (ei, t) in panel.stitch_tags.iter().enumerate() {
        if t.iter().any(|v| !v.is_finite()) {
            report.error(format!("{loc}.edges[{ei}]"), Rule::NonFinite, "stitch tag has non-finite values".into());
        }
    }

    if finite && n >= 3 && signed_area(&reconstruct_vertices(panel)) < 0.0 {
        report.push(loc, Rule::Clockwise, Severity::Warning, "panel winds clockwise".into());
    }
}
