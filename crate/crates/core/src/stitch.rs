//! Per-edge stitch tags and flags, and recovery of the stitch list from them.
//!
//! Both edges of a stitch share one tag: the mean of their world-space
//! midpoints. Recovery compares tags of flagged edges in a normalized frame
//! and greedily pairs the globally closest edges.

use std::collections::HashSet;

use crate::error::StitchError;
use crate::geometry::{dist3, Vec3};
use crate::pattern::{edge_midpoint_3d, EdgeRef, Pattern, Stitch};

/// Axis-aligned box used to map tags into `[0, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagFrame {
    pub min: Vec3,
    pub max: Vec3,
}

impl TagFrame {
    /// The unit box: tags are compared in their stored units.
    pub const IDENTITY: TagFrame = TagFrame { min: [0.0; 3], max: [1.0; 3] };

    pub fn normalize(&self, v: Vec3) -> Vec3 {
        std::array::from_fn(|i| {
            let range = self.max[i] - self.min[i];
            let range = if range > 0.0 { range } else { 1.0 };
            (v[i] - self.min[i]) / range
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StitchMatchConfig {
    /// Largest normalized tag distance that still counts as a match.
    pub tau: f64,
    pub frame: TagFrame,
}

impl Default for StitchMatchConfig {
    fn default() -> Self {
        StitchMatchConfig { tau: 0.05, frame: TagFrame::IDENTITY }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StitchRecovery {
    pub stitches: Vec<Stitch>,
    /// Flagged edges left without a partner within `tau`.
    pub unmatched: Vec<EdgeRef>,
}

/// Returns a copy of `pattern` with stitch tags and flags derived from its stitch list.
pub fn assign_stitch_tags(pattern: &Pattern) -> Result<Pattern, StitchError> {
    let mut out = pattern.clone();
    assign_stitch_tags_in_place(&mut out)?;
    Ok(out)
}

pub fn assign_stitch_tags_in_place(pattern: &mut Pattern) -> Result<(), StitchError> {
    let mut seen = HashSet::new();
    for s in &pattern.stitches {
        if s.a == s.b {
            return Err(StitchError::SelfStitch(s.a.0, s.a.1));
        }
        for r in [s.a, s.b] {
            if !pattern.panels.get(r.0).is_some_and(|p| r.1 < p.edges.len()) {
                return Err(StitchError::EdgeOutOfRange(r.0, r.1));
            }
            if !seen.insert(r) {
                return Err(StitchError::EdgeReused(r.0, r.1));
            }
        }
    }

    for panel in &mut pattern.panels {
        let n = panel.edges.len();
        panel.stitch_tags = vec![[0.0; 3]; n];
        panel.stitch_flags = vec![0; n];
    }
    for s in pattern.stitches.clone() {
        let ma = edge_midpoint_3d(&pattern.panels[s.a.0], s.a.1)?;
        let mb = edge_midpoint_3d(&pattern.panels[s.b.0], s.b.1)?;
        let tag = std::array::from_fn(|i| 0.5 * (ma[i] + mb[i]));
        for r in [s.a, s.b] {
            let panel = &mut pattern.panels[r.0];
            panel.stitch_tags[r.1] = tag;
            panel.stitch_flags[r.1] = 1;
        }
    }
    Ok(())
}

/// Greedy global-minimum matching of flagged edges by tag distance.
///
/// Candidate pairs are taken in order of increasing distance, ties broken by
/// the lexicographically smallest `(panel, edge)` references.
pub fn recover_stitches(pattern: &Pattern, cfg: &StitchMatchConfig) -> StitchRecovery {
    let mut flagged: Vec<(EdgeRef, Vec3)> = Vec::new();
    for (pi, panel) in pattern.panels.iter().enumerate() {
        for (ei, &flag) in panel.stitch_flags.iter().enumerate() {
            if flag == 1 {
                let tag = panel.stitch_tags.get(ei).copied().unwrap_or([0.0; 3]);
                flagged.push((EdgeRef(pi, ei), cfg.frame.normalize(tag)));
            }
        }
    }
    match_tags(&flagged, cfg.tau)
}

/// Matching core over `(edge, normalized tag)` items.
pub fn match_tags(items: &[(EdgeRef, Vec3)], tau: f64) -> StitchRecovery {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let d = dist3(items[i].1, items[j].1);
            if d <= tau {
                let (lo, hi) = if items[i].0 <= items[j].0 { (i, j) } else { (j, i) };
                pairs.push((d, lo, hi));
            }
        }
    }
    pairs.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then_with(|| items[x.1].0.cmp(&items[y.1].0))
            .then_with(|| items[x.2].0.cmp(&items[y.2].0))
    });

    let mut matched = vec![false; items.len()];
    let mut stitches = Vec::new();
    for (_, i, j) in pairs {
        if matched[i] || matched[j] {
            continue;
        }
        matched[i] = true;
        matched[j] = true;
        stitches.push(Stitch::new(items[i].0, items[j].0));
    }
    let mut unmatched: Vec<EdgeRef> = items
        .iter()
        .zip(&matched)
        .filter(|(_, &m)| !m)
        .map(|(item, _)| item.0)
        .collect();
    unmatched.sort();
    StitchRecovery { stitches, unmatched }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{Edge, Panel, Placement};

    fn item(p: usize, e: usize, t: Vec3) -> (EdgeRef, Vec3) {
        (EdgeRef(p, e), t)
    }

    #[test]
    fn identical_tags_pair_up() {
        let r = match_tags(&[item(0, 1, [0.2, 0.3, 0.4]), item(1, 3, [0.2, 0.3, 0.4])], 0.05);
        assert_eq!(r.stitches, vec![Stitch::new(EdgeRef(0, 1), EdgeRef(1, 3))]);
        assert!(r.unmatched.is_empty());
    }

    #[test]
    fn lone_edge_is_reported() {
        let r = match_tags(&[item(0, 0, [0.5; 3])], 0.05);
        assert!(r.stitches.is_empty());
        assert_eq!(r.unmatched, vec![EdgeRef(0, 0)]);

        let r = match_tags(&[item(0, 0, [0.0; 3]), item(0, 1, [0.5, 0.0, 0.0])], 0.05);
        assert!(r.stitches.is_empty());
        assert_eq!(r.unmatched.len(), 2);
    }

    #[test]
    fn two_clusters() {
        let a = [0.1, 0.1, 0.1];
        let b = [0.6, 0.1, 0.1];
        let r = match_tags(&[item(0, 0, a), item(0, 1, b), item(1, 0, b), item(1, 1, a)], 0.05);
        let mut got = crate::pattern::canonical_stitch_set(&r.stitches);
        got.sort();
        assert_eq!(got, vec![(EdgeRef(0, 0), EdgeRef(1, 1)), (EdgeRef(0, 1), EdgeRef(1, 0))]);
    }

    #[test]
    fn ties_prefer_lowest_refs() {
        let t = [0.3; 3];
        let r = match_tags(&[item(2, 0, t), item(0, 0, t), item(1, 0, t)], 0.05);
        assert_eq!(r.stitches, vec![Stitch::new(EdgeRef(0, 0), EdgeRef(1, 0))]);
        assert_eq!(r.unmatched, vec![EdgeRef(2, 0)]);
    }

    fn strip(edges: [[f64; 2]; 3], translation: Vec3) -> Panel {
        let e = (0..3).map(|i| Edge::straight(edges[i], edges[(i + 1) % 3])).collect();
        Panel::new(e, Placement::new(crate::geometry::Quat::IDENTITY, translation))
    }

    #[test]
    fn tags_are_mean_midpoints() {
        // Edge 0 of each triangle runs along x from 0 to the given length.
        let p0 = strip([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0; 3]);
        let p1 = strip([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.2, 0.0, 0.0]);
        let pat = Pattern {
            panels: vec![p0, p1],
            stitches: vec![Stitch::new(EdgeRef(0, 0), EdgeRef(1, 0))],
            caption: None,
        };
        let tagged = assign_stitch_tags(&pat).unwrap();
        assert_eq!(tagged.panels[0].stitch_tags[0], [0.1, 0.0, 0.0]);
        assert_eq!(tagged.panels[1].stitch_tags[0], [0.1, 0.0, 0.0]);
        assert_eq!(tagged.panels[0].stitch_flags, vec![1, 0, 0]);
        assert_eq!(tagged.panels[1].stitch_tags[1], [0.0; 3]);

        let rec = recover_stitches(&tagged, &StitchMatchConfig::default());
        assert_eq!(rec.stitches, pat.stitches);
    }

    #[test]
    fn reused_edge_is_rejected() {
        let p = strip([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0; 3]);
        let pat = Pattern {
            panels: vec![p.clone(), p],
            stitches: vec![
                Stitch::new(EdgeRef(0, 0), EdgeRef(1, 0)),
                Stitch::new(EdgeRef(0, 0), EdgeRef(1, 1)),
            ],
            caption: None,
        };
        assert_eq!(assign_stitch_tags(&pat), Err(StitchError::EdgeReused(0, 0)));
    }

    #[test]
    fn frame_normalization() {
        let f = TagFrame { min: [0.0, 10.0, 5.0], max: [2.0, 20.0, 5.0] };
        assert_eq!(f.normalize([1.0, 15.0, 6.0]), [0.5, 0.5, 1.0]);
    }
}
