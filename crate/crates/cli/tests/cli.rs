use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sewgpt_core::io::{load_pattern, save_json, save_pattern};
use sewgpt_core::synth::{synth_pattern, TemplateKind, TemplateSpec};

fn sewgpt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sewgpt"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEWCODEC_CONFIG")
        .output()
        .expect("spawn sewgpt")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A skirt dataset plus fitted statistics.
fn skirt_workspace(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = sewgpt(dir.path(), &["synth", "--template", "skirt_2panel", "--n", &n.to_string(), "--seed", "3", "-o", "data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = sewgpt(dir.path(), &["fit-stats", "data", "-o", "stats.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn first_pattern(dir: &Path) -> PathBuf {
    let mut files: Vec<_> = fs::read_dir(dir.join("data"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .collect();
    files.sort();
    files.remove(0)
}

#[test]
fn roundtrip_on_a_skirt_is_within_quantization() {
    let ws = skirt_workspace(10);
    let pattern = first_pattern(ws.path());
    let o = sewgpt(ws.path(), &["roundtrip", pattern.to_str().unwrap(), "--stats", "stats.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("stitches: EXACT"), "{out}");
    let edge: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("edge: "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(edge <= 0.01, "{edge}");
}

#[test]
fn encode_then_decode_reproduces_the_stitch_set() {
    let ws = skirt_workspace(10);
    let pattern = first_pattern(ws.path());
    let o = sewgpt(ws.path(), &["encode", pattern.to_str().unwrap(), "--stats", "stats.json", "-o", "t.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(ws.path().join("t.txt")).unwrap();
    assert!(text.starts_with("#vocab=2004 K=14\n"));
    assert_eq!(text.lines().nth(1).unwrap().split(' ').count(), 240);

    let o = sewgpt(ws.path(), &["decode", "t.txt", "--stats", "stats.json", "-o", "back.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = load_pattern(&pattern).unwrap();
    let b = load_pattern(&ws.path().join("back.json")).unwrap();
    assert_eq!(a.stitch_set(), b.stitch_set());
    assert_eq!(a.panels.len(), b.panels.len());
}

#[test]
fn decode_of_a_short_panel_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = std::iter::once(1).chain(std::iter::repeat_n(1003, 118)).chain([2]).map(|i: u32| i.to_string()).collect();
    fs::write(dir.path().join("t.txt"), format!("#vocab=2004 K=14\n{}\n", ids.join(" "))).unwrap();
    save_json(&dir.path().join("stats.json"), &sewgpt_core::NormStats::identity()).unwrap();
    let o = sewgpt(dir.path(), &["decode", "t.txt", "--stats", "stats.json", "-o", "p.json"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("malformed sequence"), "{}", stderr(&o));
    assert!(!dir.path().join("p.json").exists());
}

#[test]
fn validate_reports_min_edges() {
    let dir = tempfile::tempdir().unwrap();
    let (mut p, _) = synth_pattern(&TemplateSpec::new(TemplateKind::Skirt2Panel), 1);
    p.stitches.clear();
    for panel in &mut p.panels {
        panel.stitch_tags.clear();
        panel.stitch_flags.clear();
    }
    p.panels[1].edges.truncate(2);
    save_json(&dir.path().join("bad.json"), &p).unwrap();
    let o = sewgpt(dir.path(), &["validate", "bad.json"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("MIN_EDGES"), "{}", stdout(&o));

    let (good, _) = synth_pattern(&TemplateSpec::new(TemplateKind::Skirt2Panel), 1);
    save_pattern(&dir.path().join("good.json"), &good).unwrap();
    assert_eq!(code(&sewgpt(dir.path(), &["validate", "good.json"])), 0);
}

#[test]
fn usage_and_io_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sewgpt(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&sewgpt(dir.path(), &["encode", "x.json"])), 2);
    assert_eq!(code(&sewgpt(dir.path(), &["validate", "missing.json"])), 3);
    assert_eq!(code(&sewgpt(dir.path(), &["synth", "--template", "cape", "-o", "d"])), 2);

    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&sewgpt(dir.path(), &["validate", "broken.json"])), 3);
}

#[test]
fn contradictory_config_is_rejected_before_any_output() {
    let ws = skirt_workspace(10);
    fs::write(ws.path().join("c.json"), r#"{"K": 10, "quant": {"k": 14}}"#).unwrap();
    let pattern = first_pattern(ws.path());
    let o = sewgpt(
        ws.path(),
        &["--config", "c.json", "encode", pattern.to_str().unwrap(), "--stats", "stats.json", "-o", "t.txt"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("quant k"));
    assert!(!ws.path().join("t.txt").exists());
}

#[test]
fn config_comes_from_the_environment_when_no_flag_is_given() {
    let ws = skirt_workspace(10);
    fs::write(ws.path().join("c.json"), r#"{"d_cond_in": 32, "provider": {"kind": "hashed_bow", "dim": 16}}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sewgpt"))
        .args(["train", "--data", "data", "--out", "m.ckpt", "--steps", "1"])
        .current_dir(ws.path())
        .env("SEWCODEC_CONFIG", "c.json")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("provider dim"));
}

#[test]
fn render_svg_is_deterministic() {
    let ws = skirt_workspace(10);
    let pattern = first_pattern(ws.path());
    for out in ["a.svg", "b.svg"] {
        let o = sewgpt(ws.path(), &["render-svg", pattern.to_str().unwrap(), "-o", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read_to_string(ws.path().join("a.svg")).unwrap();
    assert_eq!(a, fs::read_to_string(ws.path().join("b.svg")).unwrap());
    assert_eq!(a.matches(r#"class="panel""#).count(), 2);
}

#[test]
fn gradcheck_passes_and_an_impossible_tolerance_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = sewgpt(dir.path(), &["gradcheck", "--coords", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    let o = sewgpt(dir.path(), &["gradcheck", "--coords", "20", "--tol", "1e-300"]);
    assert_eq!(code(&o), 1);
}

const TINY: &str = r#"{
  "n_layers": 1, "d_model": 16, "n_heads": 2, "max_seq_len": 80, "K": 4,
  "max_panels": 2, "d_cond_in": 16, "batch_size": 2
}"#;

#[test]
fn train_generate_and_complete_are_reproducible() {
    let ws = skirt_workspace(6);
    let p = ws.path();
    fs::write(p.join("tiny.json"), TINY).unwrap();
    for out in ["a.ckpt", "b.ckpt"] {
        let o = sewgpt(p, &["--config", "tiny.json", "train", "--data", "data", "--out", out, "--steps", "15"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(p.join("a.ckpt")).unwrap(), fs::read(p.join("b.ckpt")).unwrap());

    let gen = |out: &str, seed: &str| {
        let o = sewgpt(
            p,
            &["generate", "--ckpt", "a.ckpt", "--prompt", "a long skirt", "--temperature", "1.0", "--top-k", "50", "--seed", seed, "-o", out, "--tokens-out", &format!("{out}.txt")],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(p.join(format!("{out}.txt"))).unwrap()
    };
    let a = gen("g1.json", "7");
    assert_eq!(a, gen("g2.json", "7"));
    assert_eq!(fs::read(p.join("g1.json")).unwrap(), fs::read(p.join("g2.json")).unwrap());
    assert_ne!(a, gen("g3.json", "8"));

    // One whole panel as the prefix: the output must start with it unchanged.
    let full = load_pattern(&first_pattern(p)).unwrap();
    let mut partial = full.clone();
    partial.panels.truncate(1);
    partial.stitches.clear();
    for panel in &mut partial.panels {
        panel.stitch_tags.clear();
        panel.stitch_flags.clear();
    }
    save_pattern(&p.join("partial.json"), &partial).unwrap();
    let o = sewgpt(p, &["complete", "--ckpt", "a.ckpt", "--prefix", "partial.json", "--prompt", "a skirt", "-o", "c.json", "--tokens-out", "c.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = sewgpt(p, &["--config", "tiny.json", "encode", "partial.json", "--stats", "stats.json", "-o", "prefix.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Statistics are fitted on the same training split, so both encodings agree.
    let line = |f: &str| fs::read_to_string(p.join(f)).unwrap().lines().nth(1).unwrap().to_string();
    let prefix = line("prefix.txt");
    let prefix = prefix.strip_suffix(" 2").unwrap();
    assert!(line("c.txt").starts_with(prefix));

    let o = sewgpt(p, &["complete", "--ckpt", "a.ckpt", "-o", "x.json"]);
    assert_eq!(code(&o), 2);
}
