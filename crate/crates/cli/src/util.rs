//! Run manifests, language profiles, config overlays, and input hashing.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Fixed defaults per language profile: sequence windows follow the
/// dataset conventions, vocabulary caps the published sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LangProfile {
    pub name: String,
    pub max_name_len: usize,
    pub max_body_len: usize,
    pub max_summary_len: usize,
    pub body_vocab_cap: usize,
    pub sum_vocab_cap: usize,
}

pub fn profile(name: &str) -> Result<LangProfile> {
    let p = match name {
        "java" => LangProfile {
            name: "java".into(),
            max_name_len: 10,
            max_body_len: 300,
            max_summary_len: 13,
            body_vocab_cap: 50_000,
            sum_vocab_cap: 44_707,
        },
        "python" => LangProfile {
            name: "python".into(),
            max_name_len: 10,
            max_body_len: 100,
            max_summary_len: 20,
            body_vocab_cap: 50_400,
            sum_vocab_cap: 31_350,
        },
        "toy" => LangProfile {
            name: "toy".into(),
            max_name_len: 10,
            max_body_len: 120,
            max_summary_len: 16,
            body_vocab_cap: 5_000,
            sum_vocab_cap: 5_000,
        },
        other => bail!("unknown lang profile {other:?} (expected java, python, or toy)"),
    };
    Ok(p)
}

/// Metadata written next to a prepared corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub profile: LangProfile,
    pub seed: u64,
    pub split: (f64, f64, f64),
    pub counts: (usize, usize, usize),
    pub input_hash: String,
}

/// One manifest per run: command, effective config, seed, content hash
/// of the inputs, timestamps, and the artifacts written.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub corpus_hash: String,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<String>,
    pub status: String,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: u64,
    corpus_hash: String,
    started: chrono::DateTime<chrono::Utc>,
    artifacts: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, corpus_hash: String) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            corpus_hash,
            started: chrono::Utc::now(),
            artifacts: Vec::new(),
        }
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    fn build(&self, status: &str) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            corpus_hash: self.corpus_hash.clone(),
            started: self.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            artifacts: self
                .artifacts
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            status: status.to_string(),
        }
    }

    /// Writes the manifest; with status "ok" every artifact must exist.
    pub fn finish(&self, dir: &Path, status: &str) -> Result<()> {
        if status == "ok" {
            for artifact in &self.artifacts {
                if !artifact.exists() {
                    bail!("declared artifact {} was not written", artifact.display());
                }
            }
        }
        let manifest = self.build(status);
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Content hash over a set of files: sha256 of (name, bytes) pairs in
/// sorted name order.
pub fn content_hash(paths: &[PathBuf]) -> Result<String> {
    let mut sorted: Vec<&PathBuf> = paths.iter().collect();
    sorted.sort();
    let mut hasher = Sha256::new();
    for path in sorted {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
        hasher.update(&bytes);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Seed precedence: flag, then DMACOS_SEED, then the default.
pub fn resolve_seed(flag: Option<u64>, default: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(value) = std::env::var("DMACOS_SEED") {
        return value
            .parse()
            .with_context(|| format!("DMACOS_SEED={value:?} is not an integer"));
    }
    Ok(default)
}

/// Optional keys of the TOML config file. Precedence: CLI flag over
/// file value over profile/built-in default.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub ablation: Option<String>,
    pub max_grad_norm: Option<f64>,
    pub early_stop_val_bleu: Option<f64>,
    pub hidden: Option<usize>,
    pub body_embed: Option<usize>,
    pub type_embed: Option<usize>,
    pub text_embed: Option<usize>,
    pub max_name_len: Option<usize>,
    pub max_body_len: Option<usize>,
    pub max_summary_len: Option<usize>,
}

pub fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
