//! Parametric garment templates with templated captions.
//!
//! Every template draws its named parameters uniformly from the configured
//! ranges with a seeded ChaCha generator, builds panels in a fixed canonical
//! order, places them around a T-pose body (front at +z, back panels turned
//! 180 degrees about y) and derives stitch tags from the seam list. Edges are
//! straight except the hem, which is curved in half of the samples.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::geometry::{Point2, Quat};
use crate::io::{save_json, save_pattern};
use crate::pattern::{Edge, EdgeRef, Panel, Pattern, Placement, Stitch};
use crate::stitch::assign_stitch_tags_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Skirt2Panel,
    SleevelessDress,
    Tee,
    Pants,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] =
        [TemplateKind::Skirt2Panel, TemplateKind::SleevelessDress, TemplateKind::Tee, TemplateKind::Pants];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Skirt2Panel => "skirt_2panel",
            TemplateKind::SleevelessDress => "sleeveless_dress",
            TemplateKind::Tee => "tee",
            TemplateKind::Pants => "pants",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateKind> {
        TemplateKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn panel_count(self) -> usize {
        match self {
            TemplateKind::Skirt2Panel | TemplateKind::SleevelessDress => 2,
            TemplateKind::Tee => 6,
            TemplateKind::Pants => 4,
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    fn new(name: &str, lo: f64, hi: f64) -> Self {
        ParamRange { name: name.into(), lo, hi }
    }

    /// Index of the equal-width bin of `v` among `bins`.
    fn bin(&self, v: f64, bins: usize) -> usize {
        let f = if self.hi > self.lo { (v - self.lo) / (self.hi - self.lo) } else { 0.0 };
        ((f * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }
}

/// A caption slot: the parameter it reads and one label per equal-width bin.
#[derive(Debug, Clone, Copy)]
struct Slot {
    param: &'static str,
    labels: &'static [&'static str],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub kind: TemplateKind,
    /// Centimeter ranges, in the order parameters are drawn.
    pub ranges: Vec<ParamRange>,
}

impl TemplateSpec {
    pub fn new(kind: TemplateKind) -> Self {
        let r = ParamRange::new;
        let ranges = match kind {
            TemplateKind::Skirt2Panel => vec![r("waist", 32.0, 44.0), r("flare", 0.0, 30.0), r("length", 35.0, 100.0)],
            TemplateKind::SleevelessDress => vec![
                r("bust", 38.0, 50.0),
                r("flare", 0.0, 40.0),
                r("length", 80.0, 130.0),
                r("armhole", 18.0, 24.0),
                r("neck", 14.0, 20.0),
                r("shoulder", 6.0, 10.0),
            ],
            TemplateKind::Tee => vec![
                r("bust", 42.0, 58.0),
                r("flare", 0.0, 10.0),
                r("length", 50.0, 80.0),
                r("armhole", 18.0, 24.0),
                r("neck", 14.0, 20.0),
                r("shoulder", 10.0, 14.0),
                r("sleeve", 15.0, 55.0),
                r("cuff", 10.0, 16.0),
            ],
            TemplateKind::Pants => vec![
                r("hem", 18.0, 30.0),
                r("length", 30.0, 105.0),
                r("rise", 22.0, 28.0),
                r("crotch", 5.0, 10.0),
                r("hip", 20.0, 26.0),
            ],
        };
        TemplateSpec { kind, ranges }
    }

    pub fn all() -> Vec<TemplateSpec> {
        TemplateKind::ALL.into_iter().map(TemplateSpec::new).collect()
    }

    fn range(&self, name: &str) -> &ParamRange {
        self.ranges.iter().find(|r| r.name == name).unwrap_or_else(|| panic!("template has no parameter {name}"))
    }

    fn slots(&self) -> &'static [Slot] {
        match self.kind {
            TemplateKind::Skirt2Panel => &[
                Slot { param: "length", labels: &["short", "knee-length", "midi", "long"] },
                Slot { param: "flare", labels: &["straight", "a-line", "flared"] },
            ],
            TemplateKind::SleevelessDress => &[
                Slot { param: "length", labels: &["short", "knee-length", "long"] },
                Slot { param: "flare", labels: &["fitted", "loose"] },
            ],
            TemplateKind::Tee => &[
                Slot { param: "length", labels: &["cropped", "regular", "long"] },
                Slot { param: "bust", labels: &["slim", "wide"] },
                Slot { param: "sleeve", labels: &["short", "long"] },
            ],
            TemplateKind::Pants => &[
                Slot { param: "length", labels: &["short", "cropped", "full-length"] },
                Slot { param: "hem", labels: &["slim", "wide"] },
            ],
        }
    }

    /// Number of bins of every caption slot, followed by the hem bit.
    pub fn caption_bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.slots().iter().map(|s| s.labels.len()).collect();
        bins.push(2);
        bins
    }

    /// Caption for one assignment of slot bins (`bins.last()` is the curved-hem bit).
    pub fn caption_for_bins(&self, bins: &[usize]) -> String {
        let label = |i: usize| self.slots()[i].labels[bins[i]];
        let curved = bins[self.slots().len()] == 1;
        match self.kind {
            TemplateKind::Skirt2Panel => {
                format!("a {} {} skirt{}", label(0), label(1), if curved { " with a curved hem" } else { "" })
            }
            TemplateKind::SleevelessDress => format!(
                "a {} {} sleeveless dress{}",
                label(0),
                label(1),
                if curved { " with a curved hem" } else { "" }
            ),
            TemplateKind::Tee => format!(
                "a {} {} tee with {} sleeves{}",
                label(0),
                label(1),
                label(2),
                if curved { " and a curved hem" } else { "" }
            ),
            TemplateKind::Pants => format!(
                "a pair of {} {} pants{}",
                label(0),
                label(1),
                if curved { " with curved hems" } else { "" }
            ),
        }
    }

    fn caption(&self, params: &Params, curved: bool) -> String {
        let mut bins: Vec<usize> = self
            .slots()
            .iter()
            .map(|s| self.range(s.param).bin(params.get(s.param), s.labels.len()))
            .collect();
        bins.push(usize::from(curved));
        self.caption_for_bins(&bins)
    }
}

struct Params(Vec<(String, f64)>);

impl Params {
    fn get(&self, name: &str) -> f64 {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v).unwrap_or_else(|| panic!("missing parameter {name}"))
    }
}

/// Depth of the hem curve below the straight hem line.
const HEM_SAG: f64 = 4.0;
const LEG_GAP: f64 = 10.0;

/// Closed polygon of straight edges; `controls` overrides individual control points.
fn polygon(points: &[Point2], controls: &[(usize, Point2)]) -> Vec<Edge> {
    let n = points.len();
    let mut edges: Vec<Edge> = (0..n).map(|i| Edge::straight(points[i], points[(i + 1) % n])).collect();
    for &(j, c) in controls {
        edges[j].control = c;
    }
    edges
}

/// Mirrors a panel across x = 0 keeping counterclockwise winding.
/// Edge `j` of the input becomes edge `n - 1 - j` of the output.
fn mirror(edges: &[Edge]) -> Vec<Edge> {
    let n = edges.len();
    (0..n)
        .map(|i| {
            let m = n - 1 - i;
            let end = edges[(m + 1) % n].start;
            Edge::new([-end[0], end[1]], [-edges[m].control[0], edges[m].control[1]])
        })
        .collect()
}

fn mirrored(j: usize, n: usize) -> usize {
    n - 1 - j
}

fn front(t: [f64; 3]) -> Placement {
    Placement::new(Quat::IDENTITY, t)
}

/// Turned 180 degrees about the vertical axis.
fn back(t: [f64; 3]) -> Placement {
    Placement::new(Quat::new(0.0, 0.0, 1.0, 0.0), t)
}

fn stitch(a: (usize, usize), b: (usize, usize)) -> Stitch {
    Stitch::new(EdgeRef(a.0, a.1), EdgeRef(b.0, b.1))
}

/// Draws one pattern and its caption; deterministic per `(spec, seed)`.
pub fn synth_pattern(spec: &TemplateSpec, seed: u64) -> (Pattern, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Params(
        spec.ranges
            .iter()
            .map(|r| (r.name.clone(), if r.hi > r.lo { rng.random_range(r.lo..r.hi) } else { r.lo }))
            .collect(),
    );
    let curved = rng.random_bool(0.5);
    let (panels, stitches) = match spec.kind {
        TemplateKind::Skirt2Panel => skirt(&params, curved),
        TemplateKind::SleevelessDress => dress(&params, curved),
        TemplateKind::Tee => tee(&params, curved),
        TemplateKind::Pants => pants(&params, curved),
    };
    let caption = spec.caption(&params, curved);
    let mut pattern = Pattern { panels, stitches, caption: Some(caption.clone()) };
    assign_stitch_tags_in_place(&mut pattern).expect("template seams use each edge once");
    (pattern, caption)
}

/// Front and back trapezoids: hem, right side, waist, left side.
fn skirt(p: &Params, curved: bool) -> (Vec<Panel>, Vec<Stitch>) {
    let (w, h, l) = (p.get("waist"), p.get("waist") + p.get("flare"), p.get("length"));
    let pts = [[-h / 2.0, 0.0], [h / 2.0, 0.0], [w / 2.0, l], [-w / 2.0, l]];
    let hem = if curved { vec![(0, [0.0, -HEM_SAG])] } else { vec![] };
    let edges = polygon(&pts, &hem);
    let y = 100.0 - l;
    let panels = vec![
        Panel::new(edges.clone(), front([0.0, y, 15.0])),
        Panel::new(edges, back([0.0, y, -15.0])),
    ];
    (panels, vec![stitch((0, 1), (1, 3)), stitch((0, 3), (1, 1))])
}

/// Sleeveless bodice outline: hem, right side, right armhole, right shoulder,
/// neckline, left shoulder, left armhole, left side.
fn bodice(bust: f64, hem: f64, length: f64, armhole: f64, neck: f64, shoulder: f64, curved: bool) -> Vec<Edge> {
    let pts = [
        [-hem / 2.0, 0.0],
        [hem / 2.0, 0.0],
        [bust / 2.0, length - armhole],
        [neck / 2.0 + shoulder, length],
        [neck / 2.0, length],
        [-neck / 2.0, length],
        [-neck / 2.0 - shoulder, length],
        [-bust / 2.0, length - armhole],
    ];
    let hem_ctl = if curved { vec![(0, [0.0, -HEM_SAG])] } else { vec![] };
    polygon(&pts, &hem_ctl)
}

fn bodice_seams() -> Vec<Stitch> {
    vec![
        stitch((0, 1), (1, 7)),
        stitch((0, 7), (1, 1)),
        stitch((0, 3), (1, 5)),
        stitch((0, 5), (1, 3)),
    ]
}

fn dress(p: &Params, curved: bool) -> (Vec<Panel>, Vec<Stitch>) {
    let bust = p.get("bust");
    let length = p.get("length");
    let edges = bodice(bust, bust + p.get("flare"), length, p.get("armhole"), p.get("neck"), p.get("shoulder"), curved);
    let y = 145.0 - length;
    let panels = vec![
        Panel::new(edges.clone(), front([0.0, y, 12.0])),
        Panel::new(edges, back([0.0, y, -12.0])),
    ];
    (panels, bodice_seams())
}

/// Torso front/back plus front and back halves of each sleeve.
///
/// A sleeve half runs underarm, cuff, top, armhole; the world +x sleeve is
/// the "left" one. Back halves and the right front half use the mirrored outline.
fn tee(p: &Params, curved: bool) -> (Vec<Panel>, Vec<Stitch>) {
    let (bust, length, armhole) = (p.get("bust"), p.get("length"), p.get("armhole"));
    let torso = bodice(bust, bust + p.get("flare"), length, armhole, p.get("neck"), p.get("shoulder"), curved);
    let y = 145.0 - length;
    let (s, c) = (p.get("sleeve"), p.get("cuff"));
    let sleeve = polygon(&[[0.0, 0.0], [s, 0.0], [s, c], [0.0, armhole]], &[]);
    let sleeve_m = mirror(&sleeve);
    let ya = y + length - armhole;
    let xa = bust / 2.0;

    let panels = vec![
        Panel::new(torso.clone(), front([0.0, y, 12.0])),
        Panel::new(torso, back([0.0, y, -12.0])),
        Panel::new(sleeve.clone(), front([xa, ya, 8.0])),
        Panel::new(sleeve_m.clone(), back([xa, ya, -8.0])),
        Panel::new(sleeve_m, front([-xa, ya, 8.0])),
        Panel::new(sleeve, back([-xa, ya, -8.0])),
    ];
    let (underarm, top, armhole_edge) = (0, 2, 3);
    let m = |j| mirrored(j, 4);
    let mut seams = bodice_seams();
    seams.extend([
        stitch((0, 2), (2, armhole_edge)),
        stitch((1, 6), (3, m(armhole_edge))),
        stitch((0, 6), (4, m(armhole_edge))),
        stitch((1, 2), (5, armhole_edge)),
        stitch((2, top), (3, m(top))),
        stitch((2, underarm), (3, m(underarm))),
        stitch((4, m(top)), (5, top)),
        stitch((4, m(underarm)), (5, underarm)),
    ]);
    (panels, seams)
}

/// Four leg panels: hem, outseam, waist, crotch, inseam (world +x leg first).
fn pants(p: &Params, curved: bool) -> (Vec<Panel>, Vec<Stitch>) {
    let (w, h, r, c, g) = (p.get("hem"), p.get("length"), p.get("rise"), p.get("crotch"), p.get("hip") / 2.0);
    // Hem starts LEG_GAP right of the body center line so the two inseams stay apart.
    let d = LEG_GAP;
    let pts = [[d, 0.0], [d + w, 0.0], [d + w + 2.0, h + r], [-g, h + r], [-g - c, h]];
    let hem = if curved { vec![(0, [d + w / 2.0, -HEM_SAG])] } else { vec![] };
    let leg = polygon(&pts, &hem);
    let leg_m = mirror(&leg);
    let y = 105.0 - h - r;

    let panels = vec![
        Panel::new(leg.clone(), front([g, y, 10.0])),
        Panel::new(leg_m.clone(), back([g, y, -10.0])),
        Panel::new(leg_m, front([-g, y, 10.0])),
        Panel::new(leg, back([-g, y, -10.0])),
    ];
    let (outseam, crotch, inseam) = (1, 3, 4);
    let m = |j| mirrored(j, 5);
    let seams = vec![
        stitch((0, outseam), (1, m(outseam))),
        stitch((0, inseam), (1, m(inseam))),
        stitch((2, m(outseam)), (3, outseam)),
        stitch((2, m(inseam)), (3, inseam)),
        stitch((0, crotch), (2, m(crotch))),
        stitch((1, m(crotch)), (3, crotch)),
    ];
    (panels, seams)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of item `index` of template number `spec_index` in a dataset.
pub fn item_seed(seed: u64, spec_index: usize, index: usize) -> u64 {
    splitmix64(splitmix64(seed ^ ((spec_index as u64) << 48)) ^ index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub file: String,
    pub caption: String,
    pub template: String,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub items: Vec<ManifestItem>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }
}

/// Generates the patterns of a dataset with their manifest, without touching disk.
///
/// In each template the `round(n / 10)` items with the smallest seed hash go
/// to validation.
pub fn generate_dataset(specs: &[TemplateSpec], n_per_spec: usize, seed: u64) -> Vec<(ManifestItem, Pattern)> {
    let n_val = (n_per_spec as f64 * 0.1).round() as usize;
    let mut out = Vec::with_capacity(specs.len() * n_per_spec);
    for (si, spec) in specs.iter().enumerate() {
        let seeds: Vec<u64> = (0..n_per_spec).map(|i| item_seed(seed, si, i)).collect();
        let mut order: Vec<usize> = (0..n_per_spec).collect();
        order.sort_by_key(|&i| (splitmix64(seeds[i]), i));
        let mut is_val = vec![false; n_per_spec];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        for (i, &s) in seeds.iter().enumerate() {
            let (pattern, caption) = synth_pattern(spec, s);
            let item = ManifestItem {
                file: format!("{}_{si}_{i:05}.json", spec.kind),
                caption,
                template: spec.kind.name().to_string(),
                seed: s,
                split: if is_val[i] { Split::Val } else { Split::Train },
            };
            out.push((item, pattern));
        }
    }
    out
}

pub fn build_dataset(
    specs: &[TemplateSpec],
    n_per_spec: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let mut manifest = Manifest::default();
    for (item, pattern) in generate_dataset(specs, n_per_spec, seed) {
        save_pattern(&out_dir.join(&item.file), &pattern)?;
        manifest.items.push(item);
    }
    save_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;
    use crate::pattern::{reconstruct_vertices, validate_pattern};

    #[test]
    fn mirror_keeps_winding_and_maps_edges() {
        let edges = polygon(&[[0.0, 0.0], [3.0, 0.0], [3.0, 1.0], [0.0, 2.0]], &[(0, [1.5, -1.0])]);
        let m = mirror(&edges);
        assert!(signed_area(&reconstruct_vertices(&Panel::new(m.clone(), Placement::default()))) > 0.0);
        // The curved edge 0 becomes edge 3 with mirrored control.
        assert_eq!(m[3].control, [-1.5, -1.0]);
        assert_eq!(m[0].start, [0.0, 0.0]);
        assert_eq!(mirror(&m), edges);
    }

    #[test]
    fn bins() {
        let r = ParamRange::new("x", 0.0, 10.0);
        assert_eq!(r.bin(0.0, 4), 0);
        assert_eq!(r.bin(2.6, 4), 1);
        assert_eq!(r.bin(9.99, 4), 3);
        assert_eq!(r.bin(10.0, 4), 3);
    }

    #[test]
    fn templates_are_valid_and_ccw() {
        for spec in TemplateSpec::all() {
            for seed in 0..20 {
                let (p, caption) = synth_pattern(&spec, seed);
                let report = validate_pattern(&p);
                assert!(report.is_empty(), "{} seed {seed}: {report:?}", spec.kind);
                assert_eq!(p.panels.len(), spec.kind.panel_count());
                assert_eq!(p.caption.as_deref(), Some(caption.as_str()));
            }
        }
    }
}
