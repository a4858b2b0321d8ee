//! Two-pass inference and corpus metrics.
//!
//! BLEU4 is corpus-level: n-gram counts aggregate over all pairs before
//! the precisions are formed, with add-1 smoothing on numerator and
//! denominator for n ≥ 2 (disclosed in every report). ROUGE-L is the
//! LCS F-measure with β² = 1.2, averaged over samples. METEOR here is a
//! deliberately reduced "meteor_lite": exact-match unigram alignment
//! only, no stemming or synonymy, so scores are not comparable to
//! METEOR numbers produced with lexical resources.

use crate::autodiff::Fwd;
use crate::corpus::Sample;
use crate::error::{CoreError, Result};
use crate::model::{self, Ablation, ModelParams, PreparedSample};
use crate::training::Checkpoint;
use serde::Serialize;
use std::collections::HashMap;

pub const BLEU_SMOOTHING_NOTE: &str =
    "bleu4: corpus-level aggregated n-gram counts; add-1 numerator/denominator smoothing for n >= 2";

const ROUGE_BETA_SQ: f64 = 1.2;

// ─── BLEU4 ───────────────────────────────────────────────────────────────

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_default() += 1;
        }
    }
    counts
}

/// Corpus-level BLEU4 in [0,1]: modified n-gram precisions for n = 1..4,
/// geometric mean, brevity penalty. Single reference per candidate.
pub fn bleu4(references: &[Vec<String>], candidates: &[Vec<String>]) -> Result<f64> {
    if references.is_empty() || references.len() != candidates.len() {
        return Err(CoreError::contract(format!(
            "bleu4 needs equal-length nonempty lists, got {} references and {} candidates",
            references.len(),
            candidates.len()
        )));
    }
    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let mut numerator = 0u64;
        let mut denominator = 0u64;
        for (reference, candidate) in references.iter().zip(candidates) {
            let ref_counts = ngram_counts(reference, n);
            for (gram, &count) in ngram_counts(candidate, n).iter() {
                numerator += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                denominator += count;
            }
        }
        let (num, den) = if n >= 2 {
            (numerator + 1, denominator + 1)
        } else {
            (numerator, denominator)
        };
        if num == 0 || den == 0 {
            return Ok(0.0);
        }
        log_sum += 0.25 * ((num as f64).ln() - (den as f64).ln());
    }
    let brevity = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * log_sum.exp())
}

// ─── ROUGE-L ─────────────────────────────────────────────────────────────

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with β² = 1.2.
pub fn rouge_l(reference: &[String], candidate: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(CoreError::contract("rouge_l with an empty reference"));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_len(reference, candidate) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let denom = recall + ROUGE_BETA_SQ * precision;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + ROUGE_BETA_SQ) * recall * precision / denom)
}

// ─── METEOR-lite ─────────────────────────────────────────────────────────

/// Exact-match unigram METEOR: F_mean = 10PR/(R+9P), fragmentation
/// penalty 0.5·(chunks/matches)³. Alignment is greedy left-to-right,
/// preferring the reference position that continues the current chunk.
pub fn meteor_lite(reference: &[String], candidate: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(CoreError::contract("meteor_lite with an empty reference"));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut used = vec![false; reference.len()];
    let mut matches = 0usize;
    let mut chunks = 0usize;
    let mut prev_ref: Option<usize> = None;
    for token in candidate {
        let next = prev_ref.map(|p| p + 1);
        let contiguous = next
            .filter(|&p| p < reference.len() && !used[p] && &reference[p] == token);
        let chosen = contiguous.or_else(|| {
            reference
                .iter()
                .enumerate()
                .position(|(j, t)| !used[j] && t == token)
        });
        match chosen {
            Some(j) => {
                used[j] = true;
                matches += 1;
                if prev_ref != Some(j.wrapping_sub(1)) {
                    chunks += 1;
                }
                prev_ref = Some(j);
            }
            None => {
                prev_ref = None;
            }
        }
    }
    if matches == 0 {
        return Ok(0.0);
    }
    let precision = matches as f64 / candidate.len() as f64;
    let recall = matches as f64 / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    Ok(f_mean * (1.0 - penalty))
}

// ─── Inference ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct SummarizeOutput {
    pub id: String,
    pub gen_name_tokens: Vec<String>,
    pub summary_tokens: Vec<String>,
    pub score_human: Option<f64>,
    pub score_gen: Option<f64>,
    pub fusion_weights: Option<(f64, f64)>,
}

/// Greedy two-pass inference for one prepared sample; read-only over the
/// parameters, safe to call from multiple threads.
pub fn summarize_prepared(
    mp: &ModelParams,
    prep: &PreparedSample,
    ablation: Ablation,
    sum_vocab: &crate::corpus::Vocab,
) -> Result<SummarizeOutput> {
    let gen = if ablation.uses_generated_name() {
        Some(model::greedy_name_ids(mp, prep)?)
    } else {
        None
    };
    let mut fw = Fwd::new();
    let out = model::forward_sample(&mut fw, mp, prep, ablation, gen.as_deref(), sum_vocab, false)?;
    let gen_name_tokens: Vec<String> = out
        .gen_name_ids
        .iter()
        .map(|&id| sum_vocab.token(id).to_string())
        .collect();
    let summary_tokens: Vec<String> = out
        .summary
        .token_ids
        .iter()
        .map(|&id| out.copy.token(sum_vocab, id).to_string())
        .collect();
    Ok(SummarizeOutput {
        id: prep.id.clone(),
        gen_name_tokens,
        summary_tokens,
        score_human: out.score_human.map(|v| fw.tape.scalar_value(v)),
        score_gen: out.score_gen.map(|v| fw.tape.scalar_value(v)),
        fusion_weights: out.fusion_weights,
    })
}

/// Two-pass inference for one corpus sample under a checkpoint.
pub fn summarize(ckpt: &Checkpoint, sample: &Sample, mask_name: bool) -> Result<SummarizeOutput> {
    let mp = ckpt.model()?;
    let ablation = ckpt.train_cfg.ablation;
    let prep = model::prepare_sample(
        sample,
        &ckpt.body_vocab,
        &ckpt.sum_vocab,
        &ckpt.model_cfg,
        ablation == Ablation::NoMtl,
        mask_name,
    )?;
    summarize_prepared(&mp, &prep, ablation, &ckpt.sum_vocab)
}

// ─── Reports ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub id: String,
    pub reference: String,
    pub candidate: String,
    pub gen_name: String,
    pub score_human: Option<f64>,
    pub score_gen: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    /// "standard" or "name_masked".
    pub tag: String,
    pub config_hash: String,
    pub smoothing: String,
    pub samples: usize,
    pub bleu4: f64,
    pub bleu4_x100: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub rows: Vec<SampleRow>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table of the corpus metrics.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment   {}\n", self.tag));
        out.push_str(&format!("samples      {}\n", self.samples));
        out.push_str(&format!("config hash  {}\n", self.config_hash));
        out.push_str(&format!("smoothing    {}\n", self.smoothing));
        out.push_str(&format!(
            "{:<12} {:>10} {:>10}\n",
            "metric", "[0,1]", "x100"
        ));
        for (name, value) in [
            ("bleu4", self.bleu4),
            ("rouge_l", self.rouge_l),
            ("meteor_lite", self.meteor_lite),
        ] {
            out.push_str(&format!(
                "{:<12} {:>10.6} {:>10.2}\n",
                name,
                value,
                value * 100.0
            ));
        }
        out
    }

    /// One row per sample: id, reference, candidate, generated name,
    /// scores.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\treference\tcandidate\tgen_name\tscore_human\tscore_gen\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                row.id,
                row.reference,
                row.candidate,
                row.gen_name,
                row.score_human.map_or(String::new(), |v| format!("{v:.6}")),
                row.score_gen.map_or(String::new(), |v| format!("{v:.6}")),
            ));
        }
        out
    }
}

/// Stable hash of the evaluation configuration, for report provenance.
pub fn config_hash(ckpt: &Checkpoint) -> String {
    let payload = serde_json::json!({
        "model_cfg": ckpt.model_cfg,
        "train_cfg": ckpt.train_cfg,
        "epoch": ckpt.epoch,
        "body_vocab": ckpt.body_vocab.len(),
        "sum_vocab": ckpt.sum_vocab.len(),
    });
    let bytes = serde_json::to_vec(&payload).unwrap_or_default();
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Builds a report from per-sample outputs (already generated, possibly
/// in parallel) and their prepared references.
pub fn report_from_outputs(
    tag: &str,
    config_hash: String,
    preps: &[PreparedSample],
    outputs: &[SummarizeOutput],
) -> Result<MetricReport> {
    if preps.is_empty() || preps.len() != outputs.len() {
        return Err(CoreError::contract("report over mismatched sample sets"));
    }
    let refs: Vec<Vec<String>> = preps.iter().map(|p| p.summary_tokens.clone()).collect();
    let cands: Vec<Vec<String>> = outputs.iter().map(|o| o.summary_tokens.clone()).collect();
    let bleu = bleu4(&refs, &cands)?;
    let mut rouge_sum = 0.0;
    let mut meteor_sum = 0.0;
    for (r, c) in refs.iter().zip(&cands) {
        rouge_sum += rouge_l(r, c)?;
        meteor_sum += meteor_lite(r, c)?;
    }
    let n = preps.len() as f64;
    let rows = preps
        .iter()
        .zip(outputs)
        .map(|(p, o)| SampleRow {
            id: p.id.clone(),
            reference: p.summary_tokens.join(" "),
            candidate: o.summary_tokens.join(" "),
            gen_name: o.gen_name_tokens.join(" "),
            score_human: o.score_human,
            score_gen: o.score_gen,
        })
        .collect();
    Ok(MetricReport {
        tag: tag.to_string(),
        config_hash,
        smoothing: BLEU_SMOOTHING_NOTE.to_string(),
        samples: preps.len(),
        bleu4: bleu,
        bleu4_x100: bleu * 100.0,
        rouge_l: rouge_sum / n,
        meteor_lite: meteor_sum / n,
        rows,
    })
}

/// Full evaluation of a corpus under a checkpoint.
pub fn evaluate(ckpt: &Checkpoint, samples: &[Sample], mask_name: bool, tag: &str) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(CoreError::contract("evaluate over an empty corpus"));
    }
    let mp = ckpt.model()?;
    let ablation = ckpt.train_cfg.ablation;
    let mut preps = Vec::with_capacity(samples.len());
    let mut outputs = Vec::with_capacity(samples.len());
    for sample in samples {
        let prep = model::prepare_sample(
            sample,
            &ckpt.body_vocab,
            &ckpt.sum_vocab,
            &ckpt.model_cfg,
            ablation == Ablation::NoMtl,
            mask_name,
        )?;
        outputs.push(summarize_prepared(&mp, &prep, ablation, &ckpt.sum_vocab)?);
        preps.push(prep);
    }
    report_from_outputs(tag, config_hash(ckpt), &preps, &outputs)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskEvalReport {
    pub standard: MetricReport,
    pub name_masked: MetricReport,
    pub delta_bleu4: f64,
    pub delta_rouge_l: f64,
    pub delta_meteor_lite: f64,
}

/// Runs the masked-name robustness experiment: evaluates the corpus once
/// normally and once with every human name token replaced by UNK.
pub fn mask_eval(ckpt: &Checkpoint, samples: &[Sample]) -> Result<MaskEvalReport> {
    let standard = evaluate(ckpt, samples, false, "standard")?;
    let name_masked = evaluate(ckpt, samples, true, "name_masked")?;
    Ok(MaskEvalReport {
        delta_bleu4: name_masked.bleu4 - standard.bleu4,
        delta_rouge_l: name_masked.rouge_l - standard.rouge_l,
        delta_meteor_lite: name_masked.meteor_lite - standard.meteor_lite,
        standard,
        name_masked,
    })
}
