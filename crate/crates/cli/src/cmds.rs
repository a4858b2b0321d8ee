//! Command implementations.

use crate::util::{
    content_hash, load_file_config, profile, resolve_seed, write_json, CorpusMeta,
    ManifestBuilder,
};
use crate::{EvalArgs, PrepArgs, SummarizeArgs, TrainishArgs};
use anyhow::{anyhow, bail, Context, Result};
use dmacos_core::ast::AstNode;
use dmacos_core::corpus::{
    self, build_sample, corpus_stats, split_corpus, RawMethod, Sample, SplitSpec, Vocab,
};
use dmacos_core::eval as core_eval;
use dmacos_core::model::{Ablation, ModelConfig, PreparedSample};
use dmacos_core::training::{self, Checkpoint, TrainConfig};
use rayon::prelude::*;
use std::io::Read;
use std::path::{Path, PathBuf};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn parse_split(text: &str, seed: u64) -> Result<SplitSpec> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing split {text:?}"))?;
    if parts.len() != 3 {
        bail!("split must have three comma-separated percentages, got {text:?}");
    }
    let total: f64 = parts.iter().sum();
    if total <= 0.0 {
        bail!("split percentages must be positive");
    }
    Ok(SplitSpec::new(
        parts[0] / total,
        parts[1] / total,
        parts[2] / total,
        seed,
    )?)
}

// ─── prep ────────────────────────────────────────────────────────────────

pub fn prep(args: PrepArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, 17)?;
    let mut prof = profile(&args.lang_profile)?;
    if let Some(cap) = args.body_vocab {
        prof.body_vocab_cap = cap;
    }
    if let Some(cap) = args.summary_vocab {
        prof.sum_vocab_cap = cap;
    }
    let split = parse_split(&args.split, seed)?;
    ensure_dir(&args.out)?;

    let (raws, input_hash) = match (&args.input, args.gen_toy) {
        (Some(path), None) => {
            let raws: Vec<RawMethod> = corpus::read_jsonl(path)?;
            (raws, content_hash(&[path.clone()])?)
        }
        (None, Some(n)) => {
            let raws = corpus::toy::generate(n, seed);
            (raws, format!("gen-toy:{n}:{seed}"))
        }
        _ => bail!("provide exactly one of --input or --gen-toy"),
    };

    let config = serde_json::json!({
        "profile": prof,
        "split": [split.train, split.valid, split.test],
        "seed": seed,
    });
    let mut manifest = ManifestBuilder::new("prep", config, seed, input_hash.clone());

    let run = || -> Result<Vec<PathBuf>> {
        let samples: Vec<Sample> = raws
            .iter()
            .map(|r| build_sample(r).map_err(|e| anyhow!("record {}: {e}", r.id)))
            .collect::<Result<_>>()?;
        if samples.is_empty() {
            bail!("input corpus is empty");
        }
        let stats = corpus_stats(&samples)?;
        let (train, valid, test) = split_corpus(samples, &split)?;

        let body_vocab = Vocab::build(
            train.iter().flat_map(|s| s.body_tokens.iter().map(String::as_str)),
            prof.body_vocab_cap,
        )?;
        let sum_vocab = Vocab::build(
            train.iter().flat_map(|s| {
                s.summary_tokens
                    .iter()
                    .chain(s.name_tokens.iter())
                    .map(String::as_str)
            }),
            prof.sum_vocab_cap,
        )?;

        let meta = CorpusMeta {
            profile: prof.clone(),
            seed,
            split: (split.train, split.valid, split.test),
            counts: (train.len(), valid.len(), test.len()),
            input_hash: input_hash.clone(),
        };

        let mut written = Vec::new();
        let mut write =
            |name: &str, action: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
                let path = args.out.join(name);
                action(&path)?;
                written.push(path);
                Ok(())
            };
        write("train.jsonl", &|p| Ok(corpus::write_jsonl(p, &train)?))?;
        write("valid.jsonl", &|p| Ok(corpus::write_jsonl(p, &valid)?))?;
        write("test.jsonl", &|p| Ok(corpus::write_jsonl(p, &test)?))?;
        write("body_vocab.json", &|p| write_json(p, &body_vocab))?;
        write("summary_vocab.json", &|p| write_json(p, &sum_vocab))?;
        write("meta.json", &|p| write_json(p, &meta))?;
        write("stats.json", &|p| write_json(p, &stats))?;
        write("stats.txt", &|p| {
            let text = format!(
                "samples                {}\nname words in summary  {:.4}\nsummary words in name  {:.4}\nfully covered names    {:.4}\n",
                stats.samples,
                stats.mean_name_in_summary,
                stats.mean_summary_in_name,
                stats.fully_covered_fraction,
            );
            std::fs::write(p, text).map_err(Into::into)
        })?;
        println!(
            "prepared {} samples: {} train / {} valid / {} test",
            stats.samples,
            train.len(),
            valid.len(),
            test.len()
        );
        println!(
            "name->summary overlap {:.4}, summary->name {:.4}, fully covered {:.4}",
            stats.mean_name_in_summary, stats.mean_summary_in_name, stats.fully_covered_fraction
        );
        Ok(written)
    };

    match run() {
        Ok(written) => {
            for path in &written {
                manifest.artifact(path);
            }
            manifest.finish(&args.out, "ok")
        }
        Err(err) => {
            manifest.finish(&args.out, &format!("failed: {err:#}")).ok();
            Err(err)
        }
    }
}

// ─── shared corpus/config loading for train-like commands ────────────────

struct LoadedCorpus {
    meta: CorpusMeta,
    body_vocab: Vocab,
    sum_vocab: Vocab,
    train: Vec<Sample>,
    valid: Vec<Sample>,
    test: Vec<Sample>,
    hash: String,
}

fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    if !dir.exists() {
        bail!("corpus directory {} does not exist", dir.display());
    }
    let read = |name: &str| -> Result<String> {
        std::fs::read_to_string(dir.join(name))
            .with_context(|| format!("reading {}", dir.join(name).display()))
    };
    let meta: CorpusMeta = serde_json::from_str(&read("meta.json")?)?;
    let body_vocab: Vocab = serde_json::from_str(&read("body_vocab.json")?)?;
    let sum_vocab: Vocab = serde_json::from_str(&read("summary_vocab.json")?)?;
    let train: Vec<Sample> = corpus::read_jsonl(&dir.join("train.jsonl"))?;
    let valid: Vec<Sample> = corpus::read_jsonl(&dir.join("valid.jsonl"))?;
    let test: Vec<Sample> = corpus::read_jsonl(&dir.join("test.jsonl"))?;
    let hash = content_hash(&[
        dir.join("train.jsonl"),
        dir.join("valid.jsonl"),
        dir.join("test.jsonl"),
        dir.join("body_vocab.json"),
        dir.join("summary_vocab.json"),
    ])?;
    Ok(LoadedCorpus {
        meta,
        body_vocab,
        sum_vocab,
        train,
        valid,
        test,
        hash,
    })
}

fn assemble_configs(
    args: &TrainishArgs,
    meta: &CorpusMeta,
    seed: u64,
) -> Result<(ModelConfig, TrainConfig)> {
    let file = load_file_config(args.config.as_ref())?;
    let defaults_model = ModelConfig::default();
    let defaults_train = TrainConfig::default();

    let model_cfg = ModelConfig {
        hidden: args.hidden.or(file.hidden).unwrap_or(defaults_model.hidden),
        body_embed: args
            .body_embed
            .or(file.body_embed)
            .unwrap_or(defaults_model.body_embed),
        type_embed: args
            .type_embed
            .or(file.type_embed)
            .unwrap_or(defaults_model.type_embed),
        text_embed: args
            .text_embed
            .or(file.text_embed)
            .unwrap_or(defaults_model.text_embed),
        max_name_len: file.max_name_len.unwrap_or(meta.profile.max_name_len),
        max_body_len: file.max_body_len.unwrap_or(meta.profile.max_body_len),
        max_summary_len: file.max_summary_len.unwrap_or(meta.profile.max_summary_len),
    };
    let ablation: Ablation = match args.ablation.as_deref().or(file.ablation.as_deref()) {
        Some(text) => text.parse()?,
        None => Ablation::Full,
    };
    let train_cfg = TrainConfig {
        alpha: args.alpha.or(file.alpha).unwrap_or(defaults_train.alpha),
        beta: args.beta.or(file.beta).unwrap_or(defaults_train.beta),
        lr: args.lr.or(file.lr).unwrap_or(defaults_train.lr),
        batch_size: args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults_train.batch_size),
        max_epochs: args
            .max_epochs
            .or(file.max_epochs)
            .unwrap_or(defaults_train.max_epochs),
        seed,
        ablation,
        max_grad_norm: args.grad_clip.or(file.max_grad_norm),
        early_stop_val_bleu: args.early_stop_bleu.or(file.early_stop_val_bleu),
    };
    Ok((model_cfg, train_cfg))
}

// ─── pretrain / train ────────────────────────────────────────────────────

pub fn pretrain(args: TrainishArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, 42)?;
    let corpus = load_corpus(&args.corpus)?;
    let (model_cfg, train_cfg) = assemble_configs(&args, &corpus.meta, seed)?;
    ensure_dir(&args.out)?;
    let config = serde_json::json!({ "model": model_cfg, "train": train_cfg });
    let mut manifest = ManifestBuilder::new("pretrain", config, seed, corpus.hash.clone());

    let run = || -> Result<Vec<PathBuf>> {
        let outcome = training::pretrain(
            &corpus.train,
            &corpus.body_vocab,
            &corpus.sum_vocab,
            &model_cfg,
            &train_cfg,
        )?;
        for record in &outcome.epochs {
            println!(
                "epoch {:>3}  mng {:>10.4}  mnip {:>8.5}  loss {:>10.4}",
                record.epoch, record.mng, record.mnip, record.loss
            );
        }
        let ckpt_path = args.out.join("checkpoint.dmacos");
        outcome.checkpoint.save(&ckpt_path)?;
        let history_path = args.out.join("history.jsonl");
        let lines: Vec<String> = outcome
            .epochs
            .iter()
            .map(|e| serde_json::to_string(e).unwrap_or_default())
            .collect();
        std::fs::write(&history_path, lines.join("\n") + "\n")?;
        println!("saved {}", ckpt_path.display());
        Ok(vec![ckpt_path, history_path])
    };

    match run() {
        Ok(written) => {
            for path in &written {
                manifest.artifact(path);
            }
            manifest.finish(&args.out, "ok")
        }
        Err(err) => {
            manifest.finish(&args.out, &format!("failed: {err:#}")).ok();
            Err(err)
        }
    }
}

pub fn train(args: TrainishArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, 42)?;
    let corpus = load_corpus(&args.corpus)?;
    let (model_cfg, train_cfg) = assemble_configs(&args, &corpus.meta, seed)?;
    let init = match &args.init {
        Some(path) => Some(Checkpoint::load(path)?),
        None => None,
    };
    ensure_dir(&args.out)?;
    let config = serde_json::json!({
        "model": model_cfg,
        "train": train_cfg,
        "init": args.init.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = ManifestBuilder::new("train", config, seed, corpus.hash.clone());

    let run = || -> Result<Vec<PathBuf>> {
        let outcome = training::train(
            &corpus.train,
            &corpus.valid,
            &corpus.body_vocab,
            &corpus.sum_vocab,
            &model_cfg,
            &train_cfg,
            init.as_ref(),
        )?;
        for record in &outcome.epochs {
            println!(
                "epoch {:>3}  joint {:>10.4}  cos/token {:>7.4}  val bleu4 {:>7.4}",
                record.epoch, record.mean_joint, record.mean_cos_per_token, record.val_bleu4
            );
        }
        println!(
            "best epoch {} with validation bleu4 {:.4}",
            outcome.checkpoint.epoch, outcome.checkpoint.val_metric
        );
        let ckpt_path = args.out.join("checkpoint.dmacos");
        outcome.checkpoint.save(&ckpt_path)?;
        let history_path = args.out.join("history.jsonl");
        let lines: Vec<String> = outcome
            .epochs
            .iter()
            .map(|e| serde_json::to_string(e).unwrap_or_default())
            .collect();
        std::fs::write(&history_path, lines.join("\n") + "\n")?;
        let steps_path = args.out.join("steps.jsonl");
        let lines: Vec<String> = outcome
            .steps
            .iter()
            .map(|s| serde_json::to_string(s).unwrap_or_default())
            .collect();
        std::fs::write(&steps_path, lines.join("\n") + "\n")?;
        println!("saved {}", ckpt_path.display());
        Ok(vec![ckpt_path, history_path, steps_path])
    };

    match run() {
        Ok(written) => {
            for path in &written {
                manifest.artifact(path);
            }
            manifest.finish(&args.out, "ok")
        }
        Err(err) => {
            manifest.finish(&args.out, &format!("failed: {err:#}")).ok();
            Err(err)
        }
    }
}

// ─── eval ────────────────────────────────────────────────────────────────

fn parallel_report(
    ckpt: &Checkpoint,
    samples: &[Sample],
    mask_name: bool,
    tag: &str,
    jobs: usize,
) -> Result<core_eval::MetricReport> {
    let mp = ckpt.model()?;
    let ablation = ckpt.train_cfg.ablation;
    let preps: Vec<PreparedSample> = samples
        .iter()
        .map(|s| {
            dmacos_core::model::prepare_sample(
                s,
                &ckpt.body_vocab,
                &ckpt.sum_vocab,
                &ckpt.model_cfg,
                ablation == Ablation::NoMtl,
                mask_name,
            )
        })
        .collect::<dmacos_core::Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building evaluation thread pool")?;
    let outputs: Vec<core_eval::SummarizeOutput> = pool.install(|| {
        preps
            .par_iter()
            .map(|p| core_eval::summarize_prepared(&mp, p, ablation, &ckpt.sum_vocab))
            .collect::<dmacos_core::Result<_>>()
    })?;
    Ok(core_eval::report_from_outputs(
        tag,
        core_eval::config_hash(ckpt),
        &preps,
        &outputs,
    )?)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let corpus = load_corpus(&args.corpus)?;
    if corpus.body_vocab.tokens() != ckpt.body_vocab.tokens()
        || corpus.sum_vocab.tokens() != ckpt.sum_vocab.tokens()
    {
        bail!(
            "vocabulary mismatch: corpus {} was not prepared with the checkpoint's vocabularies",
            args.corpus.display()
        );
    }
    let samples = match args.split.as_str() {
        "train" => &corpus.train,
        "valid" => &corpus.valid,
        "test" => &corpus.test,
        other => bail!("unknown split {other:?} (expected train, valid, or test)"),
    };
    if samples.is_empty() {
        bail!("split {} of {} is empty", args.split, args.corpus.display());
    }
    ensure_dir(&args.out)?;
    let config = serde_json::json!({
        "ckpt": args.ckpt.display().to_string(),
        "split": args.split,
        "masked": args.masked,
        "jobs": args.jobs,
    });
    let mut manifest =
        ManifestBuilder::new("eval", config, ckpt.train_cfg.seed, corpus.hash.clone());

    let run = || -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut emit = |report: &core_eval::MetricReport| -> Result<()> {
            let stem = format!("report_{}", report.tag);
            let json = args.out.join(format!("{stem}.json"));
            std::fs::write(&json, report.to_json()?)?;
            let txt = args.out.join(format!("{stem}.txt"));
            std::fs::write(&txt, report.to_text_table())?;
            let tsv = args.out.join(format!("{stem}.tsv"));
            std::fs::write(&tsv, report.to_tsv())?;
            written.extend([json, txt, tsv]);
            print!("{}", report.to_text_table());
            Ok(())
        };
        let standard = parallel_report(&ckpt, samples, false, "standard", args.jobs)?;
        emit(&standard)?;
        if args.masked {
            let masked = parallel_report(&ckpt, samples, true, "name_masked", args.jobs)?;
            emit(&masked)?;
            let deltas = serde_json::json!({
                "delta_bleu4": masked.bleu4 - standard.bleu4,
                "delta_rouge_l": masked.rouge_l - standard.rouge_l,
                "delta_meteor_lite": masked.meteor_lite - standard.meteor_lite,
            });
            let path = args.out.join("mask_deltas.json");
            write_json(&path, &deltas)?;
            written.push(path);
        }
        Ok(written)
    };

    match run() {
        Ok(written) => {
            for path in &written {
                manifest.artifact(path);
            }
            manifest.finish(&args.out, "ok")
        }
        Err(err) => {
            manifest.finish(&args.out, &format!("failed: {err:#}")).ok();
            Err(err)
        }
    }
}

// ─── summarize ───────────────────────────────────────────────────────────

pub fn summarize(args: SummarizeArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let tree: AstNode = match (&args.ast, &args.source, &args.source_file) {
        (Some(path), None, None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(source), None) => dmacos_core::ast::parse_toy(source)?,
        (None, None, Some(path)) => {
            let source = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            dmacos_core::ast::parse_toy(&source)?
        }
        (None, None, None) => {
            let mut source = String::new();
            std::io::stdin().read_to_string(&mut source)?;
            dmacos_core::ast::parse_toy(&source)?
        }
        _ => bail!("provide at most one of --ast, --source, or --source-file"),
    };
    let name = args
        .name
        .clone()
        .or_else(|| {
            if tree.node_type == "MethodDecl" {
                tree.token.clone()
            } else {
                None
            }
        })
        .ok_or_else(|| anyhow!("cannot determine the method name; pass --name"))?;

    let raw = RawMethod {
        id: "summarize".to_string(),
        ast: Some(tree),
        body_tokens: None,
        body_types: None,
        name,
        summary: String::new(),
    };
    let sample = build_sample(&raw)?;
    let output = core_eval::summarize(&ckpt, &sample, false)?;

    println!("generated name : {}", output.gen_name_tokens.join(" "));
    match (output.score_human, output.score_gen) {
        (Some(h), Some(g)) => {
            println!("informativeness: human {h:.4}  generated {g:.4}");
        }
        _ => println!("informativeness: not scored under ablation {}", ckpt.train_cfg.ablation),
    }
    match output.fusion_weights {
        Some((w_n, w_gn)) => println!(
            "fusion weights : human {w_n:.4} + generated {w_gn:.4} = {:.4}",
            w_n + w_gn
        ),
        None => println!("fusion weights : none under ablation {}", ckpt.train_cfg.ablation),
    }
    println!("summary        : {}", output.summary_tokens.join(" "));

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let config = serde_json::json!({ "ckpt": args.ckpt.display().to_string() });
        let mut manifest =
            ManifestBuilder::new("summarize", config, ckpt.train_cfg.seed, String::new());
        let path = out.join("result.json");
        write_json(&path, &output)?;
        manifest.artifact(&path);
        manifest.finish(out, "ok")?;
    }
    Ok(())
}
