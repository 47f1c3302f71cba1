use std::collections::{BTreeSet, HashSet};

use sewgpt_core::codec::{encode, fit_stats, QuantConfig};
use sewgpt_core::io::{load_manifest, load_pattern};
use sewgpt_core::svg::{render_svg, render_svg_string};
use sewgpt_core::synth::{build_dataset, synth_pattern, Split, TemplateKind, TemplateSpec};
use sewgpt_core::validate_pattern;

#[test]
fn synth_is_deterministic() {
    for spec in TemplateSpec::all() {
        assert_eq!(synth_pattern(&spec, 42), synth_pattern(&spec, 42));
    }
    let spec = TemplateSpec::new(TemplateKind::Tee);
    assert_ne!(synth_pattern(&spec, 1).0, synth_pattern(&spec, 2).0);
}

#[test]
fn every_template_is_codec_safe() {
    let cfg = QuantConfig::default();
    for spec in TemplateSpec::all() {
        let patterns: Vec<_> = (0..40).map(|s| synth_pattern(&spec, s).0).collect();
        let stats = fit_stats(&patterns).unwrap();
        for p in &patterns {
            assert!(p.panels.iter().all(|panel| panel.edges.len() <= cfg.k));
            assert!(encode(p, &stats, &cfg).unwrap().len() <= cfg.max_tokens);
        }
    }
}

#[test]
fn captions_are_injective_per_template() {
    for spec in TemplateSpec::all() {
        let bins = spec.caption_bins();
        let mut seen = HashSet::new();
        let mut total = 1;
        for b in &bins {
            total *= b;
        }
        for mut code in 0..total {
            let assignment: Vec<usize> = bins
                .iter()
                .map(|&b| {
                    let v = code % b;
                    code /= b;
                    v
                })
                .collect();
            assert!(seen.insert(spec.caption_for_bins(&assignment)), "{}", spec.kind);
        }
    }
}

#[test]
fn dataset_split_and_reproducibility() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let specs = TemplateSpec::all();
    let m = build_dataset(&specs, 10, 5, dir_a.path()).unwrap();
    build_dataset(&specs, 10, 5, dir_b.path()).unwrap();

    assert_eq!(m.items.len(), 40);
    assert_eq!(m.split(Split::Train).count(), 36);
    assert_eq!(m.split(Split::Val).count(), 4);
    let val_templates: BTreeSet<_> = m.split(Split::Val).map(|i| i.template.clone()).collect();
    assert_eq!(val_templates.len(), 4);

    let read = |d: &std::path::Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(dir_a.path()), read(dir_b.path()));
    assert_eq!(load_manifest(dir_a.path()).unwrap(), m);

    let patterns: Vec<_> = m.items.iter().map(|i| load_pattern(&dir_a.path().join(&i.file)).unwrap()).collect();
    for (item, p) in m.items.iter().zip(&patterns) {
        assert!(validate_pattern(p).is_empty());
        assert_eq!(p.caption.as_deref(), Some(item.caption.as_str()));
    }
    let stats = fit_stats(&patterns).unwrap();
    assert!(stats.edge_std.iter().all(|&s| s > 0.0));
}

#[test]
fn missing_stitch_data_is_recomputed_on_load() {
    let (p, _) = synth_pattern(&TemplateSpec::new(TemplateKind::Pants), 3);
    let mut v = serde_json::to_value(&p).unwrap();
    for panel in v["panels"].as_array_mut().unwrap() {
        let obj = panel.as_object_mut().unwrap();
        obj.remove("stitch_tags");
        obj.remove("stitch_flags");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert_eq!(load_pattern(&path).unwrap(), p);
}

fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

#[test]
fn svg_structure() {
    let (p, _) = synth_pattern(&TemplateSpec::new(TemplateKind::Skirt2Panel), 11);
    let svg = render_svg_string(&p);
    assert_eq!(svg, render_svg_string(&p));
    assert_eq!(count(&svg, r#"class="panel""#), 2);
    assert_eq!(count(&svg, "<text"), 2);
    assert_eq!(count(&svg, "<path"), 8);

    let stroke = |pi: usize, ei: usize| {
        let id = format!(r#"id="edge-{pi}-{ei}""#);
        let line = svg.lines().find(|l| l.contains(&id)).unwrap();
        let s = line.split("stroke=\"").nth(1).unwrap();
        s[..s.find('"').unwrap()].to_string()
    };
    for s in &p.stitches {
        assert_eq!(stroke(s.a.0, s.a.1), stroke(s.b.0, s.b.1));
    }
    assert_ne!(stroke(0, 1), stroke(0, 3));

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    render_svg(&p, &a).unwrap();
    render_svg(&p, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn fit_stats_is_bit_reproducible() {
    let spec = TemplateSpec::new(TemplateKind::Skirt2Panel);
    let patterns: Vec<_> = (0..100).map(|s| synth_pattern(&spec, s).0).collect();
    let a = fit_stats(&patterns).unwrap();
    let b = fit_stats(&patterns).unwrap();
    let bits = |s: &sewgpt_core::NormStats| {
        let mut v: Vec<u64> = s.edge_mean.iter().chain(&s.edge_std).map(|x| x.to_bits()).collect();
        v.extend(s.trans_min.iter().chain(&s.trans_max).chain(&s.tag_min).chain(&s.tag_max).map(|x| x.to_bits()));
        v
    };
    assert_eq!(bits(&a), bits(&b));
}
