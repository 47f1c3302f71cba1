use std::collections::BTreeSet;

use sewgpt_core::synth::{synth_pattern, TemplateSpec};
use sewgpt_nn::cond::{hashed_bow, project_condition, ProviderKind};
use sewgpt_nn::{embed_caption, Cond, Layout, ModelConfig, ModelParams, ProviderSpec};

fn caption_set() -> BTreeSet<String> {
    let mut set = BTreeSet::new();
    for spec in TemplateSpec::all() {
        for seed in 0..300 {
            set.insert(synth_pattern(&spec, seed).1);
        }
    }
    set
}

#[test]
fn distinct_captions_project_to_distinct_rows() {
    let cfg = ModelConfig::default();
    let lay = Layout::new(&cfg);
    let params = ModelParams::<f32>::init(&cfg, 1);
    let captions = caption_set();
    assert!(captions.len() > 40);
    let mut raws = BTreeSet::new();
    let mut rows = BTreeSet::new();
    let mut distinct_raw = 0;
    for c in &captions {
        let raw = hashed_bow(c, cfg.d_cond_in);
        let bits: Vec<u32> = raw.iter().map(|v| v.to_bits()).collect();
        if raws.insert(bits) {
            distinct_raw += 1;
            let row = project_condition(&params, &lay, &Cond::Raw(raw)).unwrap().rows;
            assert_eq!(row.rows, 1);
            assert!(row.all_finite());
            assert!(rows.insert(row.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()), "collision for {c:?}");
        }
    }
    assert_eq!(rows.len(), distinct_raw);
}

#[test]
fn zero_and_identity_projections() {
    let cfg = ModelConfig { d_model: 8, n_heads: 2, d_cond_in: 8, n_layers: 1, ..ModelConfig::default() };
    let lay = Layout::new(&cfg);
    let mut params = ModelParams::<f64>::zeros(&cfg);
    let raw: Vec<f32> = vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.25, 1.5, 0.75];
    let out = project_condition(&params, &lay, &Cond::Raw(raw.clone())).unwrap();
    assert!(out.rows.data.iter().all(|&v| v == 0.0));

    // Identity weights with a large bias push GELU into its linear regime;
    // the second layer removes the bias again.
    let shift = 50.0;
    for i in 0..8 {
        params.tensors[lay.cond_w1].data[i * 8 + i] = 1.0;
        params.tensors[lay.cond_w2].data[i * 8 + i] = 1.0;
    }
    params.tensors[lay.cond_b1].data.fill(shift);
    params.tensors[lay.cond_b2].data.fill(-shift);
    let out = project_condition(&params, &lay, &Cond::Raw(raw.clone())).unwrap();
    for (o, r) in out.rows.data.iter().zip(&raw) {
        assert!((o - *r as f64).abs() < 1e-9, "{o} vs {r}");
    }
    assert!(project_condition(&params, &lay, &Cond::Raw(vec![1.0; 3])).is_err());
}

#[test]
fn providers_are_pure_functions_of_spec_and_caption() {
    let spec = ProviderSpec::hashed_bow(64);
    let a = embed_caption(&spec, "long skirt").unwrap();
    assert_eq!(a, embed_caption(&spec, "long skirt").unwrap());
    assert_ne!(a, embed_caption(&spec, "short dress").unwrap());
    assert!(embed_caption(&spec, "").unwrap().iter().all(|&v| v == 0.0));
    let json = serde_json::to_value(&spec).unwrap();
    assert_eq!(json["kind"], "hashed_bow");
    let null = ProviderSpec { kind: ProviderKind::Null, dim: 4, path: None };
    assert_eq!(embed_caption(&null, "x").unwrap(), vec![0.0; 4]);
}
