//! Checkpoint file format.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       7     magic "DMACOS1"
//! 7       4     u32 parameter count P
//!               P records, each:
//!                 u32   name length N
//!                 N     parameter name, UTF-8
//!                 u32   rank R
//!                 8·R   u64 dimensions
//!                 8·Π   f64 values, row-major, IEEE-754 little-endian
//!               then:
//!                 u64   metadata length M
//!                 M     JSON metadata: {"version", "model_cfg",
//!                       "train_cfg", "epoch", "val_metric",
//!                       "body_vocab": {"tokens": [...]},
//!                       "sum_vocab": {"tokens": [...]}}
//! ```
//!
//! Values round-trip bit-exactly, so a saved and reloaded model
//! reproduces identical forward outputs.

use crate::autodiff::{ParamSet, Tensor};
use crate::corpus::Vocab;
use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::training::TrainConfig;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"DMACOS1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ParamSet,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub epoch: usize,
    pub val_metric: f64,
    pub body_vocab: Vocab,
    pub sum_vocab: Vocab,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    version: u32,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    epoch: usize,
    val_metric: f64,
    body_vocab: Vocab,
    sum_vocab: Vocab,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes)
            .map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CoreError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, tensor) in self.params.iter() {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.shape.len() as u32).to_le_bytes())?;
            for &d in &tensor.shape {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &tensor.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        let meta = Meta {
            version: self.version,
            model_cfg: self.model_cfg.clone(),
            train_cfg: self.train_cfg.clone(),
            epoch: self.epoch,
            val_metric: self.val_metric,
            body_vocab: self.body_vocab.clone(),
            sum_vocab: self.sum_vocab.clone(),
        };
        let json = serde_json::to_vec(&meta)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(7)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CoreError::config(format!(
                "not a checkpoint file (magic {:?})",
                String::from_utf8_lossy(magic)
            )));
        }
        let count = cur.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|e| CoreError::Io(format!("bad parameter name: {e}")))?;
            let rank = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut values = Vec::with_capacity(numel);
            for _ in 0..numel {
                values.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
            }
            params.add(&name, Tensor::param(shape, values)?)?;
        }
        let json_len = cur.u64()? as usize;
        let meta: Meta = serde_json::from_slice(cur.take(json_len)?)?;
        Ok(Checkpoint {
            version: meta.version,
            params,
            model_cfg: meta.model_cfg,
            train_cfg: meta.train_cfg,
            epoch: meta.epoch,
            val_metric: meta.val_metric,
            body_vocab: meta.body_vocab,
            sum_vocab: meta.sum_vocab,
        })
    }

    /// Model view over the checkpoint's parameters.
    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::from_set(
            self.params.clone(),
            self.model_cfg.clone(),
            self.body_vocab.len(),
            self.sum_vocab.len(),
        )
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Io("truncated checkpoint".to_string()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Per-parameter max absolute difference between two checkpoints.
/// Shape mismatches report infinity.
pub fn checkpoint_diff(a: &Checkpoint, b: &Checkpoint) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (name, ta) in a.params.iter() {
        let diff = match b.params.id_of(name) {
            Some(id) => {
                let tb = b.params.get(id);
                if tb.shape != ta.shape {
                    f64::INFINITY
                } else {
                    ta.values
                        .iter()
                        .zip(&tb.values)
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max)
                }
            }
            None => f64::INFINITY,
        };
        out.push((name.to_string(), diff));
    }
    out
}

/// Copies parameters from an initialization checkpoint into a freshly
/// built model, matching vocabulary-indexed rows by token string so a
/// model pre-trained on one corpus can initialize fine-tuning on another.
/// Non-embedding tensors transfer verbatim and must match shapes.
pub fn transfer_params(
    init: &Checkpoint,
    mp: &mut ModelParams,
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
) -> Result<()> {
    let src_cfg = &init.model_cfg;
    let dst_cfg = &mp.cfg;
    if src_cfg.hidden != dst_cfg.hidden
        || src_cfg.body_embed != dst_cfg.body_embed
        || src_cfg.type_embed != dst_cfg.type_embed
        || src_cfg.text_embed != dst_cfg.text_embed
    {
        return Err(CoreError::config(
            "init checkpoint has incompatible model dimensions".to_string(),
        ));
    }

    // (parameter name, source vocab, destination vocab) for row-matched
    // tensors; everything else copies verbatim.
    let row_matched: [(&str, &Vocab, &Vocab); 4] = [
        ("embed.body", &init.body_vocab, body_vocab),
        ("embed.text", &init.sum_vocab, sum_vocab),
        ("out_name.ws", &init.sum_vocab, sum_vocab),
        ("out_sum.ws", &init.sum_vocab, sum_vocab),
    ];

    let names: Vec<String> = mp.set.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let src_id = match init.params.id_of(&name) {
            Some(id) => id,
            None => {
                return Err(CoreError::config(format!(
                    "init checkpoint is missing parameter {name}"
                )))
            }
        };
        let src = init.params.get(src_id).clone();
        let dst_id = mp.set.id_of(&name).expect("model owns its parameters");
        if let Some((_, src_vocab, dst_vocab)) =
            row_matched.iter().find(|(n, _, _)| *n == name)
        {
            let width = src.shape[1];
            if mp.set.get(dst_id).shape[1] != width {
                return Err(CoreError::config(format!(
                    "parameter {name}: row width mismatch"
                )));
            }
            if src_vocab.tokens() == dst_vocab.tokens() {
                mp.set.get_mut(dst_id).values = src.values;
                continue;
            }
            let dst = mp.set.get_mut(dst_id);
            for (row, token) in dst_vocab.tokens().iter().enumerate() {
                if let Some(src_row) = src_vocab.lookup(token) {
                    dst.values[row * width..(row + 1) * width]
                        .copy_from_slice(&src.values[src_row * width..(src_row + 1) * width]);
                }
            }
        } else {
            if mp.set.get(dst_id).shape != src.shape {
                return Err(CoreError::config(format!(
                    "parameter {name}: shape {:?} incompatible with checkpoint {:?}",
                    mp.set.get(dst_id).shape, src.shape
                )));
            }
            mp.set.get_mut(dst_id).values = src.values;
        }
    }
    Ok(())
}
