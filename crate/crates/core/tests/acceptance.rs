//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Oracles here are written independently of the library code
//! paths they check.

use dmacos_core::ast::{split_subtokens, to_asbt, to_sbt, type_codes, AsbtSequence, AstNode};
use dmacos_core::autodiff::{grad_check, Fwd};
use dmacos_core::corpus::{self, informativeness_score, toy, Sample, Vocab};
use dmacos_core::eval::{bleu4, mask_eval, rouge_l};
use dmacos_core::model::{
    forward_sample, greedy_name_ids, prepare_sample, Ablation, ModelConfig, ModelParams,
};
use dmacos_core::rng::SeedSplitter;
use dmacos_core::training::{joint_loss, pretrain, train, Checkpoint, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

fn verdict(criterion: u32, name: &str, ok: bool) -> bool {
    println!(
        "criterion {criterion} ({name}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn build_corpus(n: usize, seed: u64) -> (Vec<Sample>, Vocab, Vocab) {
    let raws = toy::generate(n, seed);
    let samples: Vec<Sample> = raws
        .iter()
        .map(|r| corpus::build_sample(r).expect("toy corpus builds"))
        .collect();
    let body_vocab = Vocab::build(
        samples
            .iter()
            .flat_map(|s| s.body_tokens.iter().map(String::as_str)),
        500,
    )
    .unwrap();
    let sum_vocab = Vocab::build(
        samples.iter().flat_map(|s| {
            s.summary_tokens
                .iter()
                .chain(s.name_tokens.iter())
                .map(String::as_str)
        }),
        500,
    )
    .unwrap();
    (samples, body_vocab, sum_vocab)
}

fn small_cfg(hidden: usize) -> ModelConfig {
    ModelConfig {
        hidden,
        body_embed: 12,
        type_embed: 4,
        text_embed: 12,
        max_name_len: 6,
        max_body_len: 60,
        max_summary_len: 12,
    }
}

// ─── 1. gradient integrity ───────────────────────────────────────────────

#[test]
fn criterion_1_gradient_integrity() {
    let started = std::time::Instant::now();
    let (samples, _, _) = build_corpus(2, 41);
    // vocabulary capped at 50 ids as stated
    let body_vocab = Vocab::build(
        samples
            .iter()
            .flat_map(|s| s.body_tokens.iter().map(String::as_str)),
        50,
    )
    .unwrap();
    let sum_vocab = Vocab::build(
        samples.iter().flat_map(|s| {
            s.summary_tokens
                .iter()
                .chain(s.name_tokens.iter())
                .map(String::as_str)
        }),
        50,
    )
    .unwrap();
    let cfg = small_cfg(16);
    let mp = ModelParams::init(&cfg, body_vocab.len(), sum_vocab.len(), 7).unwrap();
    let train_cfg = TrainConfig::default();

    let preps: Vec<_> = samples
        .iter()
        .map(|s| prepare_sample(s, &body_vocab, &sum_vocab, &cfg, false, false).unwrap())
        .collect();
    // the generated names are discrete constants in pass 2; freeze them
    // so finite differences see a smooth function
    let frozen: Vec<Vec<usize>> = preps
        .iter()
        .map(|p| greedy_name_ids(&mp, p).unwrap())
        .collect();

    let mut set = mp.set.clone();
    let report = grad_check(
        &mut set,
        |fw, set| {
            let view = mp.with_set(set.clone());
            let (loss, _) = joint_loss(fw, &view, &preps, &train_cfg, &sum_vocab, Some(&frozen))?;
            Ok(loss)
        },
        1e-5,
        32,
        99,
    )
    .unwrap();

    let elapsed = started.elapsed();
    for entry in &report.entries {
        assert!(
            entry.checked >= 32.min(set.get(set.id_of(&entry.name).unwrap()).numel()),
            "{} undersampled",
            entry.name
        );
    }
    let ok = report.max_rel_err() < 1e-4 && elapsed.as_secs() < 60;
    println!(
        "  max relative error {:.3e} over {} tensors in {:.1?}",
        report.max_rel_err(),
        report.entries.len(),
        elapsed
    );
    assert!(verdict(1, "gradient integrity", ok));
}

// ─── 2. distribution invariants ──────────────────────────────────────────

#[test]
fn criterion_2_distribution_invariants() {
    let (samples, body_vocab, sum_vocab) = build_corpus(16, 43);
    let cfg = small_cfg(8);
    let mut ok = true;
    let mut rng = SeedSplitter::new(2).stream("criterion2");
    let mut checked = 0usize;

    let sums_to_one = |values: &[f64]| -> bool {
        values.iter().all(|&v| v >= 0.0) && (values.iter().sum::<f64>() - 1.0).abs() < 1e-6
    };

    for pass in 0..1000 {
        let mp = ModelParams::init(&cfg, body_vocab.len(), sum_vocab.len(), pass as u64).unwrap();
        let sample = &samples[rng.gen_range(0..samples.len())];
        let prep = prepare_sample(sample, &body_vocab, &sum_vocab, &cfg, false, false).unwrap();
        let gen = greedy_name_ids(&mp, &prep).unwrap();
        let mut fw = Fwd::new();
        let out =
            forward_sample(&mut fw, &mp, &prep, Ablation::Full, Some(&gen), &sum_vocab, true)
                .unwrap();

        let ext = out.copy.ext_size();
        for (step, dist) in out.summary.dist_vars.iter().enumerate() {
            let final_dist = fw.tape.values(*dist);
            let attn = &out.summary.step_attention[step];
            let p_cos = &out.summary.step_p_cos[step];
            // copy distributions: attention mass scattered onto ids
            let mut copies = [vec![0.0; ext], vec![0.0; ext], vec![0.0; ext]];
            for (i, &id) in out.copy.body_ids.iter().enumerate() {
                copies[0][id] += attn.body[i];
            }
            for (i, &id) in out.copy.name_ids.iter().enumerate() {
                copies[1][id] += attn.name[i];
            }
            for (i, &id) in out.copy.gen_ids.iter().enumerate() {
                copies[2][id] += attn.gen[i];
            }
            ok &= sums_to_one(final_dist);
            ok &= sums_to_one(p_cos);
            ok &= sums_to_one(&attn.body);
            ok &= sums_to_one(&attn.name);
            ok &= sums_to_one(&attn.gen);
            ok &= copies.iter().all(|c| sums_to_one(c));
            checked += 1;
        }
        let (w_n, w_gn) = out.fusion_weights.unwrap();
        ok &= (w_n + w_gn - 1.0).abs() < 1e-6 && w_n >= 0.0 && w_gn >= 0.0;
        if !ok {
            break;
        }
    }
    println!("  {checked} decode steps over 1000 forward passes");
    assert!(verdict(2, "distribution invariants", ok));
}

// ─── 3. aSBT oracle ──────────────────────────────────────────────────────

fn oracle_split(token: &str) -> Vec<String> {
    let mut parts: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in token.chars() {
        if c == '_' {
            if !cur.is_empty() {
                parts.push(std::mem::take(&mut cur));
            }
            prev = None;
            continue;
        }
        if let (Some(p), false) = (prev, cur.is_empty()) {
            if p.is_lowercase() && c.is_uppercase() {
                parts.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
        prev = Some(c);
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    if parts.is_empty() {
        parts.push(token.to_string());
    }
    parts
}

fn oracle_sbt(node: &AstNode, out: &mut Vec<String>) {
    let label = match &node.token {
        Some(t) => format!("{}_{}", node.node_type, t),
        None => node.node_type.clone(),
    };
    if node.children.is_empty() {
        out.push(label);
    } else {
        out.push("(".into());
        out.push(node.node_type.clone());
        for c in &node.children {
            oracle_sbt(c, out);
        }
        out.push(")".into());
        out.push(node.node_type.clone());
    }
}

fn oracle_asbt(node: &AstNode, tokens: &mut Vec<String>, types: &mut Vec<u8>) {
    let emit_token = |t: &str, tokens: &mut Vec<String>, types: &mut Vec<u8>| {
        let parts = oracle_split(t);
        let n = parts.len();
        for (i, p) in parts.into_iter().enumerate() {
            tokens.push(p);
            types.push(match (n, i) {
                (1, _) => 6,
                (_, 0) => 3,
                (_, i) if i == n - 1 => 5,
                _ => 4,
            });
        }
    };
    if node.children.is_empty() {
        tokens.push(node.node_type.clone());
        types.push(2);
        if let Some(t) = &node.token {
            emit_token(t, tokens, types);
        }
    } else {
        tokens.push(node.node_type.clone());
        types.push(0);
        if let Some(t) = &node.token {
            emit_token(t, tokens, types);
        }
        for c in &node.children {
            oracle_asbt(c, tokens, types);
        }
        tokens.push(node.node_type.clone());
        types.push(1);
    }
}

fn random_tree(rng: &mut impl Rng, depth: usize) -> AstNode {
    let tokens = [
        "storage_client", "Client", "formatDecimal2", "x", "readValue", "a_b_c", "HTTPServer",
        "n1",
    ];
    if depth == 0 || rng.gen_bool(0.4) {
        let ty = ["SimpleName", "NumberLiteral"][rng.gen_range(0..2)];
        AstNode::with_token(ty, tokens[rng.gen_range(0..tokens.len())])
    } else {
        let ty = ["Assign", "Call", "Block", "MethodDecl"][rng.gen_range(0..4)];
        let arity = rng.gen_range(1..=4);
        let children = (0..arity).map(|_| random_tree(rng, depth - 1)).collect();
        AstNode::with_children(ty, children)
    }
}

#[test]
fn criterion_3_asbt_oracle() {
    let mut ok = true;

    // the worked example, exactly
    let tree = AstNode::with_children(
        "Assign",
        vec![
            AstNode::with_token("SimpleName", "storage_client"),
            AstNode::with_children("Call", vec![AstNode::with_token("SimpleName", "Client")]),
        ],
    );
    let seq = to_asbt(&tree);
    ok &= seq.tokens
        == vec![
            "Assign",
            "SimpleName",
            "storage",
            "client",
            "Call",
            "SimpleName",
            "Client",
            "Call",
            "Assign",
        ];
    ok &= seq.types == vec![0, 2, 3, 5, 0, 2, 6, 1, 1];

    let mut rng = SeedSplitter::new(3).stream("criterion3");
    for _ in 0..1000 {
        let tree = random_tree(&mut rng, 6);
        let mut want_sbt = Vec::new();
        oracle_sbt(&tree, &mut want_sbt);
        ok &= to_sbt(&tree) == want_sbt;

        let mut want_tokens = Vec::new();
        let mut want_types = Vec::new();
        oracle_asbt(&tree, &mut want_tokens, &mut want_types);
        let got = to_asbt(&tree);
        ok &= got
            == AsbtSequence {
                tokens: want_tokens,
                types: want_types,
            };
        if !ok {
            break;
        }
    }
    // sub-token splitting consistency with the flattening
    ok &= split_subtokens("storage_client") == ["storage", "client"];
    ok &= type_codes::TOKEN_SINGLE == 6;
    assert!(verdict(3, "aSBT oracle", ok));
}

// ─── 4. informativeness oracle ───────────────────────────────────────────

#[test]
fn criterion_4_informativeness_oracle() {
    use std::collections::HashSet;
    let mut rng = SeedSplitter::new(4).stream("criterion4");
    let words = ["get", "set", "index", "cache", "load", "the", "a", "value"];
    let mut ok = true;
    for _ in 0..1000 {
        let name: Vec<String> = (0..rng.gen_range(1..5))
            .map(|_| words[rng.gen_range(0..words.len())].to_string())
            .collect();
        let summary: Vec<String> = (0..rng.gen_range(0..10))
            .map(|_| words[rng.gen_range(0..words.len())].to_string())
            .collect();
        let got = informativeness_score(&name, &summary).unwrap();
        let ns: HashSet<&String> = name.iter().collect();
        let ss: HashSet<&String> = summary.iter().collect();
        let want = ns.intersection(&ss).count() as f64 / ns.len() as f64;
        ok &= got == want;
        if !ok {
            break;
        }
    }
    assert!(verdict(4, "informativeness oracle", ok));
}

// ─── 5. metric oracles ───────────────────────────────────────────────────

fn oracle_bleu4(refs: &[Vec<String>], cands: &[Vec<String>]) -> f64 {
    use std::collections::HashMap;
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let mut num = 0.0;
        let mut den = 0.0;
        for (rf, cd) in refs.iter().zip(cands) {
            let mut rc: HashMap<Vec<&String>, f64> = HashMap::new();
            if rf.len() >= n {
                for w in rf.windows(n) {
                    *rc.entry(w.iter().collect()).or_default() += 1.0;
                }
            }
            let mut cc: HashMap<Vec<&String>, f64> = HashMap::new();
            if cd.len() >= n {
                for w in cd.windows(n) {
                    *cc.entry(w.iter().collect()).or_default() += 1.0;
                }
            }
            for (gram, count) in cc {
                num += count.min(rc.get(&gram).copied().unwrap_or(0.0));
                den += count;
            }
        }
        if n >= 2 {
            num += 1.0;
            den += 1.0;
        }
        if num == 0.0 || den == 0.0 {
            return 0.0;
        }
        log_sum += 0.25 * (num / den).ln();
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * log_sum.exp()
}

fn oracle_rouge_l(reference: &[String], candidate: &[String]) -> f64 {
    fn lcs(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            0
        } else if a[0] == b[0] {
            1 + lcs(&a[1..], &b[1..])
        } else {
            lcs(&a[1..], b).max(lcs(a, &b[1..]))
        }
    }
    if candidate.is_empty() {
        return 0.0;
    }
    let l = lcs(reference, candidate) as f64;
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    if r + 1.2 * p == 0.0 {
        0.0
    } else {
        (1.0 + 1.2) * r * p / (r + 1.2 * p)
    }
}

#[test]
fn criterion_5_metric_oracles() {
    let mut rng = SeedSplitter::new(5).stream("criterion5");
    let words = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran"];
    let mut ok = true;
    for _ in 0..200 {
        let reference: Vec<String> = (0..rng.gen_range(1..=12))
            .map(|_| words[rng.gen_range(0..words.len())].to_string())
            .collect();
        let candidate: Vec<String> = (0..rng.gen_range(0..=12))
            .map(|_| words[rng.gen_range(0..words.len())].to_string())
            .collect();
        let b = bleu4(&[reference.clone()], &[candidate.clone()]).unwrap();
        let bo = oracle_bleu4(&[reference.clone()], &[candidate.clone()]);
        ok &= (b - bo).abs() < 1e-9;
        let r = rouge_l(&reference, &candidate).unwrap();
        let ro = oracle_rouge_l(&reference, &candidate);
        ok &= (r - ro).abs() < 1e-9;
        // identical pairs score exactly one
        ok &= bleu4(&[reference.clone()], &[reference.clone()]).unwrap() == 1.0;
        ok &= rouge_l(&reference, &reference).unwrap() == 1.0;
        if !ok {
            break;
        }
    }
    assert!(verdict(5, "metric oracles", ok));
}

// ─── 6. overfit sanity ───────────────────────────────────────────────────

fn name_reproduction(ckpt: &Checkpoint, samples: &[Sample]) -> f64 {
    let mp = ckpt.model().unwrap();
    let mut hits = 0usize;
    for sample in samples {
        let prep = prepare_sample(
            sample,
            &ckpt.body_vocab,
            &ckpt.sum_vocab,
            &ckpt.model_cfg,
            false,
            false,
        )
        .unwrap();
        let gen = greedy_name_ids(&mp, &prep).unwrap();
        if gen == prep.name_enc_ids {
            hits += 1;
        }
    }
    hits as f64 / samples.len() as f64
}

fn train_bleu(ckpt: &Checkpoint, samples: &[Sample]) -> f64 {
    let report = dmacos_core::eval::evaluate(ckpt, samples, false, "standard").unwrap();
    report.bleu4
}

#[test]
fn criterion_6_overfit_sanity() {
    let started = std::time::Instant::now();
    let (samples, body_vocab, sum_vocab) = build_corpus(32, 6);
    let model_cfg = ModelConfig {
        hidden: 64,
        body_embed: 32,
        type_embed: 8,
        text_embed: 32,
        max_name_len: 6,
        max_body_len: 60,
        max_summary_len: 12,
    };
    let cfg = TrainConfig {
        lr: 0.002,
        batch_size: 4,
        max_epochs: 500,
        seed: 6,
        early_stop_val_bleu: Some(0.99),
        ..TrainConfig::default()
    };
    let out = train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    let bleu = train_bleu(&out.checkpoint, &samples);
    let names = name_reproduction(&out.checkpoint, &samples);
    let elapsed = started.elapsed();
    println!(
        "  {} epochs, training BLEU4 {bleu:.4}, name reproduction {names:.3}, {:.1?}",
        out.epochs.len(),
        elapsed
    );
    let ok = bleu >= 0.95 && names >= 0.90 && elapsed.as_secs() < 600;
    assert!(verdict(6, "overfit sanity", ok));
}

// ─── 7. ablation wiring ──────────────────────────────────────────────────

#[test]
fn criterion_7_ablation_wiring() {
    let (samples, body_vocab, sum_vocab) = build_corpus(8, 71);
    let model_cfg = small_cfg(12);

    // no_mtl: name-task parameters stay bit-identical to initialization
    let cfg = TrainConfig {
        ablation: Ablation::NoMtl,
        max_epochs: 3,
        batch_size: 4,
        seed: 77,
        ..TrainConfig::default()
    };
    let out = train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    let init = ModelParams::init(&model_cfg, body_vocab.len(), sum_vocab.len(), cfg.seed).unwrap();
    let mut ok = true;
    for name in ModelParams::name_task_param_names() {
        let trained = out.checkpoint.params.id_of(name).unwrap();
        let fresh = init.set.id_of(name).unwrap();
        let bit_exact = out
            .checkpoint
            .params
            .get(trained)
            .values
            .iter()
            .zip(&init.set.get(fresh).values)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !bit_exact {
            println!("  {name} moved under no_mtl");
        }
        ok &= bit_exact;
    }
    // and the summary path did train
    let moved = {
        let trained = out.checkpoint.params.id_of("dec_sum.wz").unwrap();
        let fresh = init.set.id_of("dec_sum.wz").unwrap();
        out.checkpoint.params.get(trained).values != init.set.get(fresh).values
    };
    ok &= moved;

    // no_mnip: constant 0.5/0.5 fusion weights on every step
    let cfg = TrainConfig {
        ablation: Ablation::NoMnip,
        max_epochs: 2,
        batch_size: 4,
        seed: 78,
        ..TrainConfig::default()
    };
    let out = train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    ok &= !out.steps.is_empty();
    for step in &out.steps {
        ok &= step.fusion_w_name == Some(0.5) && step.fusion_w_gen == Some(0.5);
    }
    assert!(verdict(7, "ablation wiring", ok));
}

// ─── 8. masked-name direction ────────────────────────────────────────────

#[test]
fn criterion_8_masked_name_direction() {
    let mut degraded = 0;
    for seed in [81u64, 82, 83] {
        let (samples, body_vocab, sum_vocab) = build_corpus(12, seed);
        let model_cfg = ModelConfig {
            hidden: 32,
            body_embed: 16,
            type_embed: 4,
            text_embed: 16,
            max_name_len: 6,
            max_body_len: 60,
            max_summary_len: 12,
        };
        let cfg = TrainConfig {
            lr: 0.002,
            batch_size: 4,
            max_epochs: 300,
            seed,
            early_stop_val_bleu: Some(0.95),
            ..TrainConfig::default()
        };
        let out =
            train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
        let report = mask_eval(&out.checkpoint, &samples).unwrap();
        println!(
            "  seed {seed}: standard BLEU4 {:.4}, masked {:.4}",
            report.standard.bleu4, report.name_masked.bleu4
        );
        if report.name_masked.bleu4 <= report.standard.bleu4 {
            degraded += 1;
        }
    }
    let ok = degraded >= 2;
    println!("  masked <= standard in {degraded} of 3 seeds");
    assert!(verdict(8, "masked-name direction", ok));
}

// ─── 9. pre-training workflow ────────────────────────────────────────────

#[test]
fn criterion_9_pretraining_workflow() {
    let (corpus_a, body_a, sum_a) = build_corpus(10, 91);
    let (corpus_b, body_b, sum_b) = build_corpus(8, 92);
    let model_cfg = small_cfg(12);

    let pre_cfg = TrainConfig {
        max_epochs: 5,
        batch_size: 4,
        seed: 93,
        ..TrainConfig::default()
    };
    let pre = pretrain(&corpus_a, &body_a, &sum_a, &model_cfg, &pre_cfg).unwrap();
    // MNG loss should trend down over the pre-training epochs
    let first = pre.epochs.first().unwrap().mng;
    let last = pre.epochs.last().unwrap().mng;
    println!("  pretrain mng loss: epoch 1 {first:.3} -> epoch 5 {last:.3}");

    let tune_cfg = TrainConfig {
        max_epochs: 1,
        batch_size: 4,
        seed: 94,
        ..TrainConfig::default()
    };
    let warm = train(
        &corpus_b,
        &corpus_b,
        &body_b,
        &sum_b,
        &model_cfg,
        &tune_cfg,
        Some(&pre.checkpoint),
    )
    .unwrap();
    let cold = train(&corpus_b, &corpus_b, &body_b, &sum_b, &model_cfg, &tune_cfg, None).unwrap();

    let epoch1_cos = |steps: &[dmacos_core::training::StepRecord]| -> f64 {
        let first_epoch: Vec<&dmacos_core::training::StepRecord> =
            steps.iter().filter(|s| s.epoch == 1).collect();
        first_epoch.iter().map(|s| s.cos).sum::<f64>() / first_epoch.len().max(1) as f64
    };
    let warm_cos = epoch1_cos(&warm.steps);
    let cold_cos = epoch1_cos(&cold.steps);
    // reported, not asserted: toy scale is noisy
    println!(
        "  epoch-1 training loss_cos: pretrained-init {warm_cos:.3} vs random-init {cold_cos:.3} ({})",
        if warm_cos < cold_cos { "pretraining helped" } else { "no gain at this scale" }
    );
    let ok = last.is_finite() && warm_cos.is_finite() && cold_cos.is_finite();
    assert!(verdict(9, "pre-training workflow", ok));
}

// ─── 10. determinism ─────────────────────────────────────────────────────

#[test]
fn criterion_10_determinism() {
    let (samples, body_vocab, sum_vocab) = build_corpus(8, 101);
    let model_cfg = small_cfg(12);
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 4,
        seed: 102,
        ..TrainConfig::default()
    };
    let a = train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    let b = train(&samples, &samples, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    let mut ok = a.checkpoint.to_bytes().unwrap() == b.checkpoint.to_bytes().unwrap();

    let report_a = dmacos_core::eval::evaluate(&a.checkpoint, &samples, false, "standard")
        .unwrap()
        .to_json()
        .unwrap();
    let report_b = dmacos_core::eval::evaluate(&b.checkpoint, &samples, false, "standard")
        .unwrap()
        .to_json()
        .unwrap();
    ok &= report_a == report_b;

    // shuffled sample order must not change sorted artifacts, only the
    // seed-driven pipeline does: rerun with reshuffled input order
    let mut reordered = samples.clone();
    reordered.shuffle(&mut SeedSplitter::new(5).stream("criterion10"));
    let c = train(&reordered, &reordered, &body_vocab, &sum_vocab, &model_cfg, &cfg, None).unwrap();
    // not asserted equal (input order is an input); both must be finite
    ok &= c.checkpoint.params.all_finite();
    assert!(verdict(10, "determinism", ok));
}
