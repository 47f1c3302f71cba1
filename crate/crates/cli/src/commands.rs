use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use sewgpt_core::io::{self, TokenFileHeader};
use sewgpt_core::pattern::validate_pattern_with;
use sewgpt_core::svg::render_svg;
use sewgpt_core::synth::{Split, MANIFEST_FILE};
use sewgpt_core::{
    assign_stitch_tags, codec, decode, encode, fit_stats, NormStats, Pattern, QuantConfig, TemplateKind,
    TemplateSpec, END,
};
use sewgpt_nn::checkpoint::CheckpointConfig;
use sewgpt_nn::gradcheck::{gradcheck, tiny_config};
use sewgpt_nn::{load_checkpoint, sample, save_checkpoint, Checkpoint, Cond, Example, Provider, Trainer};

use crate::config::{CliConfig, Pipeline};
use crate::exit::{Outcome, Usage};
use crate::{Cli, Command, GenArgs};

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { pattern } => validate(&cfg, &pattern),
        Command::FitStats { dir, out } => {
            let corpus = load_corpus(&dir)?;
            let stats = fit_stats(corpus.iter().map(|(p, _)| p))?;
            write_json(&out, &stats)?;
            eprintln!("fitted statistics on {} patterns", corpus.len());
            Ok(Outcome::Done)
        }
        Command::Encode { pattern, stats, out } => {
            cfg.check()?;
            let seq = encode(&io::load_pattern(&pattern)?, &load_stats(&stats)?, &cfg.quant)?;
            write_tokens(&out, &cfg.quant, &seq.ids)?;
            Ok(Outcome::Done)
        }
        Command::Decode { tokens, stats, out } => {
            cfg.check()?;
            let ids = read_first_sequence(&tokens, &cfg.quant)?;
            let decoded = decode(&ids, &load_stats(&stats)?, &cfg.quant)?;
            report_decode(&decoded);
            write_pattern(&out, &decoded.pattern)?;
            Ok(Outcome::Done)
        }
        Command::Roundtrip { pattern, stats } => roundtrip(&cfg, &pattern, &stats),
        Command::Synth { template, n, seed, out } => synth(&template, n, seed, &out),
        Command::Train { data, out, stats, steps, seed, lr, batch_size } => {
            let mut cfg = cfg;
            let t = &mut cfg.train;
            t.steps = steps.unwrap_or(t.steps);
            t.seed = seed.unwrap_or(t.seed);
            t.lr = lr.unwrap_or(t.lr);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            cfg.check()?;
            train(&cfg, &data, &out, stats.as_deref())
        }
        Command::Generate { gen } => generate(cfg, &gen, None),
        Command::Complete { gen, prefix, tokens } => {
            let source = match (prefix, tokens) {
                (Some(p), None) => PrefixSource::Pattern(p),
                (None, Some(t)) => PrefixSource::Tokens(t),
                _ => return Err(Usage("give exactly one of --prefix and --tokens".into()).into()),
            };
            generate(cfg, &gen, Some(source))
        }
        Command::Gradcheck { coords, h, seed, tol } => {
            let model = match cfg.source {
                Some(_) => cfg.train.model.clone(),
                None => tiny_config(),
            };
            model.validate().map_err(|e| Usage(format!("config: {e}")))?;
            if !(h > 0.0) || coords == 0 {
                bail!(Usage("--h and --coords must be positive".into()));
            }
            let report = gradcheck(&model, coords, h, seed)?;
            let mut worst: Vec<_> = report.checks.iter().collect();
            worst.sort_by(|a, b| b.rel_err.total_cmp(&a.rel_err));
            for c in worst.iter().take(3) {
                eprintln!("{}[{}]: analytic {:.6e} numeric {:.6e} rel {:.3e}", c.tensor, c.index, c.analytic, c.numeric, c.rel_err);
            }
            let pass = report.passed(tol);
            println!(
                "gradcheck: {} coordinates, max relative error {:.3e} (tol {tol:e}): {}",
                report.checks.len(),
                report.max_rel_err,
                if pass { "PASS" } else { "FAIL" }
            );
            Ok(if pass { Outcome::Done } else { Outcome::Invalid })
        }
        Command::RenderSvg { pattern, out } => {
            let p = io::load_pattern(&pattern)?;
            let report = validate_pattern_with(&p, cfg.quant.limits());
            if !report.is_valid() {
                for v in &report.violations {
                    eprintln!("{v}");
                }
                return Ok(Outcome::Invalid);
            }
            ensure_parent(&out)?;
            render_svg(&p, &out)?;
            Ok(Outcome::Done)
        }
    }
}

fn validate(cfg: &CliConfig, path: &Path) -> anyhow::Result<Outcome> {
    // Read without deriving stitch data first, so a broken stitch list is
    // reported as a rule violation rather than a load error.
    let mut pattern: Pattern = io::load_json(path)?;
    if pattern.panels.iter().any(|p| !p.has_stitch_data()) {
        if let Ok(tagged) = assign_stitch_tags(&pattern) {
            pattern = tagged;
        }
    }
    let report = validate_pattern_with(&pattern, cfg.quant.limits());
    for v in &report.violations {
        println!("{v}");
    }
    if report.is_valid() {
        println!("valid: {} panels, {} stitches", pattern.panels.len(), pattern.stitches.len());
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::Invalid)
    }
}

fn roundtrip(cfg: &CliConfig, path: &Path, stats: &Path) -> anyhow::Result<Outcome> {
    cfg.check()?;
    let pattern = io::load_pattern(path)?;
    let stats = load_stats(stats)?;
    let seq = encode(&pattern, &stats, &cfg.quant)?;
    let decoded = decode(&seq.ids, &stats, &cfg.quant)?;
    let r = codec::compare_roundtrip(&pattern, &decoded.pattern, &stats);
    let exact = |b: bool| if b { "EXACT" } else { "MISMATCH" };
    println!("tokens: {}", seq.len());
    println!("edge: {:.6} (standardized, bound {:.6})", r.edge, 0.5 / f64::from(cfg.quant.c_e));
    println!("rotation: {:.6}", r.rotation);
    println!("translation: {:.6}", r.translation);
    println!("tag: {:.6}", r.tag);
    println!("counts: {}", exact(r.counts_exact));
    println!("flags: {}", exact(r.flags_exact));
    println!("stitches: {}", exact(r.stitches_exact));
    Ok(if r.within_quantization(&cfg.quant) { Outcome::Done } else { Outcome::Invalid })
}

fn synth(template: &str, n: usize, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let specs = if template == "all" {
        TemplateSpec::all()
    } else {
        let kind = TemplateKind::parse(template).ok_or_else(|| Usage(format!("unknown template `{template}`")))?;
        vec![TemplateSpec::new(kind)]
    };
    if n == 0 {
        bail!(Usage("--n must be positive".into()));
    }
    let manifest = sewgpt_core::build_dataset(&specs, n, seed, out)?;
    let n_train = manifest.split(Split::Train).count();
    eprintln!("wrote {} patterns ({n_train} train) to {}", manifest.items.len(), out.display());
    Ok(Outcome::Done)
}

fn train(cfg: &CliConfig, data: &Path, out: &Path, stats: Option<&Path>) -> anyhow::Result<Outcome> {
    let corpus = load_corpus(data)?;
    let stats = match stats {
        Some(p) => load_stats(p)?,
        None => fit_stats(corpus.iter().map(|(p, _)| p))?,
    };
    let provider = Provider::new(&cfg.provider)?;
    let mut examples = Vec::with_capacity(corpus.len());
    for (pattern, caption) in &corpus {
        let seq = encode(pattern, &stats, &cfg.quant)?;
        examples.push(Example::new(seq, provider.embed(caption)?));
    }

    let mut trainer = Trainer::new(cfg.train.clone())?;
    let total = cfg.train.steps;
    let every = (total / 50).max(1);
    eprintln!("training on {} sequences for {total} steps", examples.len());
    let mut last = f64::NAN;
    trainer.train(&examples, |step, loss| {
        last = loss;
        if step % every == 0 || step == total {
            eprintln!("step {step}/{total} loss {loss:.5}");
        }
    })?;

    let pipeline = Pipeline { quant: cfg.quant, stats, provider: cfg.provider.clone() };
    let ckpt_cfg = CheckpointConfig { model: cfg.train.model.clone(), pipeline: serde_json::to_value(&pipeline)? };
    ensure_parent(out)?;
    save_checkpoint(out, &trainer.params, &ckpt_cfg)?;
    println!("{}", serde_json::json!({ "steps": trainer.step, "last_loss": last, "checkpoint": out }));
    Ok(Outcome::Done)
}

enum PrefixSource {
    Pattern(PathBuf),
    Tokens(PathBuf),
}

fn generate(cfg: CliConfig, args: &GenArgs, prefix: Option<PrefixSource>) -> anyhow::Result<Outcome> {
    let mut opts = cfg.sampler;
    opts.temperature = args.temperature.unwrap_or(opts.temperature);
    opts.top_k = args.top_k.or(opts.top_k);
    opts.seed = args.seed.unwrap_or(opts.seed);
    opts.max_new_tokens = args.max_new_tokens.unwrap_or(opts.max_new_tokens);
    opts.validate().map_err(|e| Usage(e.to_string()))?;

    let (ckpt, pipeline) = open_checkpoint(&args.ckpt)?;
    let provider = Provider::new(&pipeline.provider)?;
    let cond = if args.prompt.trim().is_empty() { Cond::Null } else { Cond::Raw(provider.embed(&args.prompt)?) };

    let prefix_ids = match prefix {
        None => None,
        Some(PrefixSource::Pattern(p)) => {
            let seq = encode(&io::load_pattern(&p)?, &pipeline.stats, &pipeline.quant)?;
            Some(strip_end(seq.ids))
        }
        Some(PrefixSource::Tokens(t)) => Some(strip_end(read_first_sequence(&t, &pipeline.quant)?)),
    };

    let sampled = sample(&ckpt.params, &ckpt.config.model, &cond, &opts, prefix_ids.as_deref())?;
    if sampled.truncated {
        eprintln!("warning: sampling stopped mid-panel; output cut back to the last whole panel");
    }
    if let Some(t) = &args.tokens_out {
        write_tokens(t, &pipeline.quant, &sampled.tokens.ids)?;
    }
    let mut decoded = decode(&sampled.tokens.ids, &pipeline.stats, &pipeline.quant)?;
    report_decode(&decoded);
    if !args.prompt.is_empty() {
        decoded.pattern.caption = Some(args.prompt.clone());
    }
    write_pattern(&args.out, &decoded.pattern)?;
    eprintln!("{} panels, {} stitches", decoded.pattern.panels.len(), decoded.pattern.stitches.len());
    Ok(Outcome::Done)
}

fn open_checkpoint(path: &Path) -> anyhow::Result<(Checkpoint, Pipeline)> {
    let ckpt = load_checkpoint(path)?;
    let pipeline: Pipeline = serde_json::from_value(ckpt.config.pipeline.clone())
        .with_context(|| format!("{}: checkpoint lacks codec settings", path.display()))?;
    Ok((ckpt, pipeline))
}

fn strip_end(mut ids: Vec<u32>) -> Vec<u32> {
    if ids.last() == Some(&END) {
        ids.pop();
    }
    ids
}

/// Training patterns and captions: the manifest's train split when a
/// manifest exists, otherwise every JSON file in `dir` in name order.
pub fn load_corpus(dir: &Path) -> anyhow::Result<Vec<(Pattern, String)>> {
    let mut out = Vec::new();
    if dir.join(MANIFEST_FILE).exists() {
        let manifest = io::load_manifest(dir)?;
        for item in manifest.split(Split::Train) {
            out.push((io::load_pattern(&dir.join(&item.file))?, item.caption.clone()));
        }
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            let p = io::load_pattern(&f)?;
            let caption = p.caption.clone().unwrap_or_default();
            out.push((p, caption));
        }
    }
    if out.is_empty() {
        bail!("{}: no training patterns found", dir.display());
    }
    Ok(out)
}

fn load_stats(path: &Path) -> anyhow::Result<NormStats> {
    Ok(io::load_json(path)?)
}

fn read_first_sequence(path: &Path, quant: &QuantConfig) -> anyhow::Result<Vec<u32>> {
    let (header, mut seqs) = io::read_token_file(path)?;
    if let Some(h) = header {
        if h.vocab != quant.vocab_size() || h.k != quant.k {
            bail!(
                "{}: written for vocab {} K {}, configured for vocab {} K {}",
                path.display(),
                h.vocab,
                h.k,
                quant.vocab_size(),
                quant.k
            );
        }
    }
    if seqs.is_empty() {
        bail!("{}: no token sequence", path.display());
    }
    if seqs.len() > 1 {
        eprintln!("warning: {} holds {} sequences; using the first", path.display(), seqs.len());
    }
    Ok(seqs.swap_remove(0))
}

fn report_decode(decoded: &codec::Decoded) {
    for i in &decoded.dropped_panels {
        eprintln!("warning: dropped panel {i} with fewer than 3 edges");
    }
    if !decoded.unmatched.is_empty() {
        let list: Vec<String> = decoded.unmatched.iter().take(8).map(ToString::to_string).collect();
        let more = if decoded.unmatched.len() > 8 { ", ..." } else { "" };
        eprintln!(
            "warning: {} stitched edges have no partner and were freed: {}{more}",
            decoded.unmatched.len(),
            list.join(", ")
        );
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    ensure_parent(path)?;
    Ok(io::save_json(path, value)?)
}

fn write_pattern(path: &Path, pattern: &Pattern) -> anyhow::Result<()> {
    ensure_parent(path)?;
    Ok(io::save_pattern(path, pattern)?)
}

fn write_tokens(path: &Path, quant: &QuantConfig, ids: &[u32]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let header = TokenFileHeader { vocab: quant.vocab_size(), k: quant.k };
    Ok(io::write_token_file(path, header, &[ids.to_vec()])?)
}
