//! Corpus construction: tokenize names and summaries, compute golden
//! informativeness scores, mask name occurrences in bodies, build
//! vocabularies, truncate/pad, and split datasets.

use crate::ast::{self, type_codes, AsbtSequence, AstNode};
use crate::error::{CoreError, Result};
use crate::rng::SeedSplitter;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

pub mod toy;

// ─── Reserved vocabulary ids ─────────────────────────────────────────────

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NAME_MASK: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const NAME_MASK_TOKEN: &str = "<name>";

pub const RESERVED: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, NAME_MASK_TOKEN];

// ─── Records ─────────────────────────────────────────────────────────────

/// One corpus record. Body tokens are aSBT tokens with every occurrence
/// of the method name replaced by [`NAME_MASK_TOKEN`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub body_tokens: Vec<String>,
    pub body_types: Vec<u8>,
    pub name_tokens: Vec<String>,
    pub summary_tokens: Vec<String>,
    pub informativeness: f64,
}

/// Raw ingestion record: either a neutral AST or pre-flattened sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMethod {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ast: Option<AstNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_types: Option<Vec<u8>>,
    pub name: String,
    pub summary: String,
}

// ─── Scoring and masking ─────────────────────────────────────────────────

/// Fraction of distinct name tokens that appear among the summary tokens.
/// Set semantics; exact string match, no stemming.
pub fn informativeness_score(name_tokens: &[String], summary_tokens: &[String]) -> Result<f64> {
    if name_tokens.is_empty() {
        return Err(CoreError::contract(
            "informativeness_score on an empty name",
        ));
    }
    let name_set: BTreeSet<&str> = name_tokens.iter().map(String::as_str).collect();
    let summary_set: BTreeSet<&str> = summary_tokens.iter().map(String::as_str).collect();
    let hits = name_set.iter().filter(|t| summary_set.contains(*t)).count();
    Ok(hits as f64 / name_set.len() as f64)
}

/// Replaces every run of body sub-tokens equal to the name (case
/// insensitive) with a single mask token typed [`type_codes::TOKEN_SINGLE`].
/// Only sub-token positions participate; structural markers break a run.
pub fn mask_name(body: &AsbtSequence, name_tokens: &[String]) -> AsbtSequence {
    if name_tokens.is_empty() {
        return body.clone();
    }
    let lower: Vec<String> = name_tokens.iter().map(|t| t.to_lowercase()).collect();
    let n = lower.len();
    let mut tokens = Vec::with_capacity(body.tokens.len());
    let mut types = Vec::with_capacity(body.types.len());
    let mut i = 0;
    while i < body.tokens.len() {
        let matches = i + n <= body.tokens.len()
            && (0..n).all(|j| {
                type_codes::is_subtoken(body.types[i + j])
                    && body.tokens[i + j].to_lowercase() == lower[j]
            });
        if matches {
            tokens.push(NAME_MASK_TOKEN.to_string());
            types.push(type_codes::TOKEN_SINGLE);
            i += n;
        } else {
            tokens.push(body.tokens[i].clone());
            types.push(body.types[i]);
            i += 1;
        }
    }
    AsbtSequence { tokens, types }
}

/// Undoes [`mask_name`]: expands each mask token back into the name's
/// sub-tokens with position codes. Used by the single-task ablation,
/// whose body keeps the original name text.
pub fn unmask_name(body: &AsbtSequence, name_tokens: &[String]) -> AsbtSequence {
    let mut tokens = Vec::with_capacity(body.tokens.len());
    let mut types = Vec::with_capacity(body.types.len());
    for (tok, &ty) in body.tokens.iter().zip(&body.types) {
        if tok == NAME_MASK_TOKEN && ty == type_codes::TOKEN_SINGLE && !name_tokens.is_empty() {
            let last = name_tokens.len() - 1;
            for (j, name_tok) in name_tokens.iter().enumerate() {
                tokens.push(name_tok.clone());
                types.push(match (name_tokens.len(), j) {
                    (1, _) => type_codes::TOKEN_SINGLE,
                    (_, 0) => type_codes::TOKEN_BEGIN,
                    (_, j) if j == last => type_codes::TOKEN_END,
                    _ => type_codes::TOKEN_MID,
                });
            }
        } else {
            tokens.push(tok.clone());
            types.push(ty);
        }
    }
    AsbtSequence { tokens, types }
}

// ─── Tokenization ────────────────────────────────────────────────────────

/// Name string to lowercased sub-tokens: whitespace-separated words are
/// each split on underscores and camelCase.
pub fn tokenize_name(name: &str) -> Vec<String> {
    name.split_whitespace()
        .flat_map(ast::split_subtokens)
        .collect()
}

/// Summary string to lowercased word tokens.
pub fn tokenize_summary(summary: &str) -> Vec<String> {
    summary
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

/// Builds one [`Sample`] from a raw record: flatten (or take the given
/// flattening), tokenize, score, mask.
pub fn build_sample(raw: &RawMethod) -> Result<Sample> {
    let body = match (&raw.ast, &raw.body_tokens, &raw.body_types) {
        (Some(tree), _, _) => {
            tree.validate()?;
            ast::to_asbt(tree)
        }
        (None, Some(tokens), Some(types)) => {
            if tokens.len() != types.len() {
                return Err(CoreError::contract(format!(
                    "record {}: body_tokens and body_types lengths differ",
                    raw.id
                )));
            }
            AsbtSequence {
                tokens: tokens.clone(),
                types: types.clone(),
            }
        }
        _ => {
            return Err(CoreError::contract(format!(
                "record {}: need either ast or body_tokens+body_types",
                raw.id
            )))
        }
    };
    let name_tokens = tokenize_name(&raw.name);
    if name_tokens.is_empty() {
        return Err(CoreError::contract(format!(
            "record {}: empty method name",
            raw.id
        )));
    }
    let summary_tokens = tokenize_summary(&raw.summary);
    let informativeness = informativeness_score(&name_tokens, &summary_tokens)?;
    let masked = mask_name(&body, &name_tokens);
    Ok(Sample {
        id: raw.id.clone(),
        body_tokens: masked.tokens,
        body_types: masked.types,
        name_tokens,
        summary_tokens,
        informativeness,
    })
}

// ─── Vocabulary ──────────────────────────────────────────────────────────

/// Frequency-capped token table with five reserved entries. Lookups are
/// case-insensitive: tokens are lowercased at build and encode time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            tokens: Vec<String>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(Vocab::from_tokens(raw.tokens))
    }
}

impl Vocab {
    /// Retains the `cap - reserved` most frequent tokens, breaking
    /// frequency ties lexicographically.
    pub fn build<'a>(stream: impl IntoIterator<Item = &'a str>, cap: usize) -> Result<Vocab> {
        if cap <= RESERVED.len() {
            return Err(CoreError::config(format!(
                "vocab cap {cap} leaves no room beyond {} reserved tokens",
                RESERVED.len()
            )));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tok in stream {
            let lower = tok.to_lowercase();
            if RESERVED.contains(&lower.as_str()) {
                continue;
            }
            *counts.entry(lower).or_default() += 1;
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap - RESERVED.len());
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        Ok(Vocab::from_tokens(tokens))
    }

    /// Rebuilds the lookup index; used after deserialization too.
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        let lower = token.to_lowercase();
        self.index.get(lower.as_str()).copied().unwrap_or(UNK)
    }

    /// Id only if the token is in-vocabulary.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        let lower = token.to_lowercase();
        self.index.get(lower.as_str()).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Truncates to `max_len`, then right-pads with [`PAD`].
pub fn encode_and_pad(tokens: &[String], vocab: &Vocab, max_len: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens.iter().take(max_len).map(|t| vocab.id(t)).collect();
    ids.resize(max_len, PAD);
    ids
}

/// Decoder-target variant: wraps the token ids in BOS..EOS before
/// truncating and padding.
pub fn encode_target_padded(tokens: &[String], vocab: &Vocab, max_len: usize) -> Vec<usize> {
    let mut ids = Vec::with_capacity(tokens.len() + 2);
    ids.push(BOS);
    ids.extend(tokens.iter().map(|t| vocab.id(t)));
    ids.push(EOS);
    ids.truncate(max_len);
    ids.resize(max_len, PAD);
    ids
}

/// Strips trailing padding.
pub fn strip_pad(ids: &[usize]) -> &[usize] {
    let end = ids.iter().rposition(|&id| id != PAD).map_or(0, |p| p + 1);
    &ids[..end]
}

// ─── Corpus statistics ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    /// Mean fraction of name tokens appearing in the summary.
    pub mean_name_in_summary: f64,
    /// Mean fraction of summary tokens appearing in the name.
    pub mean_summary_in_name: f64,
    /// Fraction of samples whose name is fully covered by the summary.
    pub fully_covered_fraction: f64,
}

pub fn corpus_stats(samples: &[Sample]) -> Result<CorpusStats> {
    if samples.is_empty() {
        return Err(CoreError::contract("corpus_stats on an empty corpus"));
    }
    let mut name_in_summary = 0.0;
    let mut summary_in_name = 0.0;
    let mut fully = 0usize;
    for s in samples {
        let fwd = informativeness_score(&s.name_tokens, &s.summary_tokens)?;
        name_in_summary += fwd;
        if fwd == 1.0 {
            fully += 1;
        }
        if !s.summary_tokens.is_empty() {
            summary_in_name += informativeness_score(&s.summary_tokens, &s.name_tokens)?;
        }
    }
    let n = samples.len() as f64;
    Ok(CorpusStats {
        samples: samples.len(),
        mean_name_in_summary: name_in_summary / n,
        mean_summary_in_name: summary_in_name / n,
        fully_covered_fraction: fully as f64 / n,
    })
}

// ─── Splitting ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, valid: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec { train, valid, test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_with_seed(seed: u64) -> Self {
        SplitSpec { train: 0.90, valid: 0.05, test: 0.05, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.train + self.valid + self.test;
        if (total - 1.0).abs() > 1e-9 || self.train < 0.0 || self.valid < 0.0 || self.test < 0.0 {
            return Err(CoreError::config(format!(
                "split fractions {}/{}/{} do not sum to 1",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }
}

/// Shuffles deterministically, then partitions by the split fractions.
pub fn split_corpus(
    mut samples: Vec<Sample>,
    spec: &SplitSpec,
) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    use rand::seq::SliceRandom;
    spec.validate()?;
    let mut rng = SeedSplitter::new(spec.seed).stream("shuffle");
    samples.shuffle(&mut rng);
    let n = samples.len();
    let n_train = (n as f64 * spec.train).floor() as usize;
    let n_valid = (n as f64 * spec.valid).floor() as usize;
    let rest = samples.split_off(n_train.min(n));
    let mut valid = rest;
    let test = valid.split_off(n_valid.min(valid.len()));
    Ok((samples, valid, test))
}

// ─── JSONL I/O ───────────────────────────────────────────────────────────

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| {
            CoreError::Io(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
