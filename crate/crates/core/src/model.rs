//! The DMACOS network.
//!
//! Pass 1 (MNG): a GRU over the aSBT-flattened body encodes the method,
//! and a name decoder with attention over the body states generates a
//! method name. Pass 2 (COS): the human-written and generated names are
//! run through one shared name GRU, scored for informativeness against
//! the body, and their attention contexts fused with softmax-normalized
//! scores; the summary decoder conditions on the body context and the
//! fused name context, and its output mixes a generation distribution
//! with copy distributions from all three sources under a learned gate.
//!
//! The generated name is decoded greedily and enters pass 2 as discrete
//! constant tokens; no gradient flows through the token choice. The
//! summary decoder never runs before a complete generated name exists —
//! [`NameConditioning::TwoPass`] requires the generated name's states.

use crate::autodiff::{Fwd, ParamId, ParamSet, Tensor, Var};
use crate::corpus::{self, Sample, Vocab, BOS, EOS, UNK, UNK_TOKEN};
use crate::error::{CoreError, Result};
use crate::rng::SeedSplitter;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Floor for log-probabilities in the copy-mixture path, where a
/// vocabulary token can receive zero mass.
pub const LOG_FLOOR: f64 = 1e-12;

// ─── Configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// GRU hidden size (all three recurrent cells).
    pub hidden: usize,
    /// Body token embedding width.
    pub body_embed: usize,
    /// aSBT type-code embedding width, concatenated onto body embeddings.
    pub type_embed: usize,
    /// Shared name/summary embedding width.
    pub text_embed: usize,
    pub max_name_len: usize,
    pub max_body_len: usize,
    pub max_summary_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 256,
            body_embed: 100,
            type_embed: 28,
            text_embed: 100,
            max_name_len: 10,
            max_body_len: 300,
            max_summary_len: 13,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.hidden,
            self.body_embed,
            self.type_embed,
            self.text_embed,
            self.max_name_len,
            self.max_body_len,
            self.max_summary_len,
        ];
        if fields.iter().any(|&v| v == 0) {
            return Err(CoreError::config("model dimensions must be positive"));
        }
        Ok(())
    }
}

// ─── Parameters ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruParams {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wh: ParamId,
}

/// Every learnable tensor, named and checkpointable. The name encoder
/// and name decoder share one [`GruParams`] instance, so updating one
/// updates the other.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub set: ParamSet,
    pub cfg: ModelConfig,
    pub body_vocab_size: usize,
    pub sum_vocab_size: usize,
    pub e_body: ParamId,
    pub e_type: ParamId,
    /// Shared name/summary embedding.
    pub e_text: ParamId,
    pub body_gru: GruParams,
    /// Shared between the name encoder and the name decoder.
    pub name_gru: GruParams,
    pub sum_gru: GruParams,
    /// Name-decoder attention matrix.
    pub w_a: ParamId,
    /// Bilinear matrix for the three second-pass attentions.
    pub w_bi: ParamId,
    /// Scorer matrix over [body last state; name last state].
    pub w_p: ParamId,
    pub w_t_name: ParamId,
    pub w_s_name: ParamId,
    pub w_t_sum: ParamId,
    pub w_s_sum: ParamId,
    pub w_f: ParamId,
    pub b_f: ParamId,
}

fn xavier(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::param(vec![rows, cols], values).expect("shape matches generated length")
}

fn embedding(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-0.1..0.1)).collect();
    Tensor::param(vec![rows, cols], values).expect("shape matches generated length")
}

impl ModelParams {
    /// Fresh parameters from the "init" stream of a seed. Creation order
    /// is fixed, so one seed gives one initialization.
    pub fn init(
        cfg: &ModelConfig,
        body_vocab_size: usize,
        sum_vocab_size: usize,
        seed: u64,
    ) -> Result<ModelParams> {
        cfg.validate()?;
        let mut rng = SeedSplitter::new(seed).stream("init");
        let h = cfg.hidden;
        let body_in = cfg.body_embed + cfg.type_embed;
        let mut set = ParamSet::new();
        let e_body = set.add("embed.body", embedding(&mut rng, body_vocab_size, cfg.body_embed))?;
        let e_type = set.add(
            "embed.type",
            embedding(&mut rng, crate::ast::type_codes::COUNT, cfg.type_embed),
        )?;
        let e_text = set.add("embed.text", embedding(&mut rng, sum_vocab_size, cfg.text_embed))?;
        let gru = |set: &mut ParamSet, rng: &mut rand_chacha::ChaCha8Rng, prefix: &str, d_in: usize| -> Result<GruParams> {
            Ok(GruParams {
                wz: set.add(&format!("{prefix}.wz"), xavier(rng, h, h + d_in))?,
                wr: set.add(&format!("{prefix}.wr"), xavier(rng, h, h + d_in))?,
                wh: set.add(&format!("{prefix}.wh"), xavier(rng, h, h + d_in))?,
            })
        };
        let body_gru = gru(&mut set, &mut rng, "enc_body", body_in)?;
        let name_gru = gru(&mut set, &mut rng, "gru_name", cfg.text_embed)?;
        let sum_gru = gru(&mut set, &mut rng, "dec_sum", cfg.text_embed)?;
        let w_a = set.add("attn.wa", xavier(&mut rng, h, h))?;
        let w_bi = set.add("attn.wbi", xavier(&mut rng, h, h))?;
        let w_p = set.add("scorer.wp", xavier(&mut rng, 1, 2 * h))?;
        let w_t_name = set.add("out_name.wt", xavier(&mut rng, h, 2 * h))?;
        let w_s_name = set.add("out_name.ws", xavier(&mut rng, sum_vocab_size, h))?;
        let w_t_sum = set.add("out_sum.wt", xavier(&mut rng, h, 3 * h))?;
        let w_s_sum = set.add("out_sum.ws", xavier(&mut rng, sum_vocab_size, h))?;
        let w_f = set.add("gate.wf", xavier(&mut rng, 1, 3 * h))?;
        let b_f = set.add("gate.bf", Tensor::param(vec![1], vec![0.0])?)?;
        Ok(ModelParams {
            set,
            cfg: cfg.clone(),
            body_vocab_size,
            sum_vocab_size,
            e_body,
            e_type,
            e_text,
            body_gru,
            name_gru,
            sum_gru,
            w_a,
            w_bi,
            w_p,
            w_t_name,
            w_s_name,
            w_t_sum,
            w_s_sum,
            w_f,
            b_f,
        })
    }

    /// Rebinds ids onto an existing named set (checkpoint load).
    pub fn from_set(
        set: ParamSet,
        cfg: ModelConfig,
        body_vocab_size: usize,
        sum_vocab_size: usize,
    ) -> Result<ModelParams> {
        cfg.validate()?;
        let find = |name: &str| {
            set.id_of(name)
                .ok_or_else(|| CoreError::config(format!("checkpoint is missing parameter {name}")))
        };
        let gru = |prefix: &str| -> Result<GruParams> {
            Ok(GruParams {
                wz: find(&format!("{prefix}.wz"))?,
                wr: find(&format!("{prefix}.wr"))?,
                wh: find(&format!("{prefix}.wh"))?,
            })
        };
        let mp = ModelParams {
            e_body: find("embed.body")?,
            e_type: find("embed.type")?,
            e_text: find("embed.text")?,
            body_gru: gru("enc_body")?,
            name_gru: gru("gru_name")?,
            sum_gru: gru("dec_sum")?,
            w_a: find("attn.wa")?,
            w_bi: find("attn.wbi")?,
            w_p: find("scorer.wp")?,
            w_t_name: find("out_name.wt")?,
            w_s_name: find("out_name.ws")?,
            w_t_sum: find("out_sum.wt")?,
            w_s_sum: find("out_sum.ws")?,
            w_f: find("gate.wf")?,
            b_f: find("gate.bf")?,
            set,
            cfg,
            body_vocab_size,
            sum_vocab_size,
        };
        let expect = |id: ParamId, shape: &[usize], what: &str| -> Result<()> {
            if mp.set.get(id).shape != shape {
                return Err(CoreError::config(format!(
                    "checkpoint parameter {what} has shape {:?}, expected {:?}",
                    mp.set.get(id).shape, shape
                )));
            }
            Ok(())
        };
        let h = mp.cfg.hidden;
        expect(mp.e_body, &[body_vocab_size, mp.cfg.body_embed], "embed.body")?;
        expect(mp.e_text, &[sum_vocab_size, mp.cfg.text_embed], "embed.text")?;
        expect(mp.w_s_sum, &[sum_vocab_size, h], "out_sum.ws")?;
        expect(mp.w_p, &[1, 2 * h], "scorer.wp")?;
        Ok(mp)
    }

    /// Parameters used only by the name tasks (MNG decoding head, shared
    /// name GRU, name attention, scorer). The single-task ablation must
    /// leave these bit-identical to initialization.
    pub fn name_task_param_names() -> &'static [&'static str] {
        &[
            "gru_name.wz",
            "gru_name.wr",
            "gru_name.wh",
            "attn.wa",
            "out_name.wt",
            "out_name.ws",
            "scorer.wp",
        ]
    }

    /// Parameters used only by the summary decoder; pre-training must
    /// leave these bit-identical to initialization.
    pub fn summary_only_param_names() -> &'static [&'static str] {
        &[
            "dec_sum.wz",
            "dec_sum.wr",
            "dec_sum.wh",
            "attn.wbi",
            "out_sum.wt",
            "out_sum.ws",
            "gate.wf",
            "gate.bf",
        ]
    }

    /// The same parameter layout over a different value set (ids are
    /// positional, so the set must come from an identically-built model).
    pub fn with_set(&self, set: ParamSet) -> ModelParams {
        ModelParams {
            set,
            cfg: self.cfg.clone(),
            body_vocab_size: self.body_vocab_size,
            sum_vocab_size: self.sum_vocab_size,
            e_body: self.e_body,
            e_type: self.e_type,
            e_text: self.e_text,
            body_gru: self.body_gru,
            name_gru: self.name_gru,
            sum_gru: self.sum_gru,
            w_a: self.w_a,
            w_bi: self.w_bi,
            w_p: self.w_p,
            w_t_name: self.w_t_name,
            w_s_name: self.w_s_name,
            w_t_sum: self.w_t_sum,
            w_s_sum: self.w_s_sum,
            w_f: self.w_f,
            b_f: self.b_f,
        }
    }

    /// Everything the MNG+MNIP pre-training phase is allowed to touch.
    pub fn pretrain_param_ids(&self) -> Vec<ParamId> {
        let excluded: Vec<ParamId> = Self::summary_only_param_names()
            .iter()
            .filter_map(|n| self.set.id_of(n))
            .collect();
        self.set.ids().filter(|id| !excluded.contains(id)).collect()
    }
}

// ─── Encoder states ──────────────────────────────────────────────────────

/// Hidden states of one encoder run over an unpadded sequence.
pub struct EncoderStates {
    pub hs: Vec<Var>,
    /// The states stacked as a [len, hidden] matrix (attention keys).
    pub keys: Var,
    pub last: Var,
}

// ─── Core blocks ─────────────────────────────────────────────────────────

/// One GRU step: z and r gates from `[h_prev; x]`, candidate from
/// `[r ⊙ h_prev; x]`, output `(1 − z) ⊙ h_prev + z ⊙ ĥ`.
pub fn gru_step(fw: &mut Fwd, set: &ParamSet, gru: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let wz = fw.p(set, gru.wz);
    let wr = fw.p(set, gru.wr);
    let wh = fw.p(set, gru.wh);
    let hx = fw.tape.concat(&[h_prev, x])?;
    let z = {
        let lin = fw.tape.matvec(wz, hx)?;
        fw.tape.sigmoid(lin)
    };
    let r = {
        let lin = fw.tape.matvec(wr, hx)?;
        fw.tape.sigmoid(lin)
    };
    let rh = fw.tape.mul(r, h_prev)?;
    let rhx = fw.tape.concat(&[rh, x])?;
    let candidate = {
        let lin = fw.tape.matvec(wh, rhx)?;
        fw.tape.tanh(lin)
    };
    let hidden = fw.tape.shape(h_prev)[0];
    let ones = fw.tape.leaf(vec![hidden], vec![1.0; hidden])?;
    let keep = fw.tape.sub(ones, z)?;
    let kept = fw.tape.mul(keep, h_prev)?;
    let new = fw.tape.mul(z, candidate)?;
    fw.tape.add(kept, new)
}

fn run_gru(
    fw: &mut Fwd,
    set: &ParamSet,
    gru: &GruParams,
    inputs: &[Var],
    h0: Var,
) -> Result<EncoderStates> {
    let mut h = h0;
    let mut hs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        h = gru_step(fw, set, gru, x, h)?;
        hs.push(h);
    }
    let keys = fw.tape.stack_rows(&hs)?;
    Ok(EncoderStates { hs, keys, last: h })
}

/// Encodes the aSBT body: per position `[token embedding; type embedding]`
/// through the body GRU from a zero initial state. Trailing padding is
/// dropped; an effectively empty body is a contract error.
pub fn encode_body(
    fw: &mut Fwd,
    mp: &ModelParams,
    body_ids: &[usize],
    body_types: &[usize],
) -> Result<EncoderStates> {
    let ids = corpus::strip_pad(body_ids);
    if ids.is_empty() {
        return Err(CoreError::contract("encode_body: all-PAD body"));
    }
    if body_types.len() < ids.len() {
        return Err(CoreError::contract(
            "encode_body: type sequence shorter than token sequence",
        ));
    }
    let e_body = fw.p(&mp.set, mp.e_body);
    let e_type = fw.p(&mp.set, mp.e_type);
    let mut inputs = Vec::with_capacity(ids.len());
    for (i, &tok) in ids.iter().enumerate() {
        let te = fw.tape.row(e_body, tok)?;
        let ty = fw.tape.row(e_type, body_types[i])?;
        inputs.push(fw.tape.concat(&[te, ty])?);
    }
    let h0 = fw.tape.zeros(vec![mp.cfg.hidden]);
    run_gru(fw, &mp.set, &mp.body_gru, &inputs, h0)
}

/// Runs the shared name GRU over embedded name tokens from a zero state.
pub fn encode_name(fw: &mut Fwd, mp: &ModelParams, token_ids: &[usize]) -> Result<EncoderStates> {
    let ids: Vec<usize> = token_ids.iter().take(mp.cfg.max_name_len).copied().collect();
    if ids.is_empty() {
        return Err(CoreError::contract("encode_name: empty name"));
    }
    let e_text = fw.p(&mp.set, mp.e_text);
    let mut inputs = Vec::with_capacity(ids.len());
    for &tok in &ids {
        let tok = if tok >= mp.sum_vocab_size { UNK } else { tok };
        inputs.push(fw.tape.row(e_text, tok)?);
    }
    let h0 = fw.tape.zeros(vec![mp.cfg.hidden]);
    run_gru(fw, &mp.set, &mp.name_gru, &inputs, h0)
}

/// Bilinear attention: weights softmax(qᵀW kᵢ), context Σ wᵢ·kᵢ. Keys and
/// values are the encoder states. The name decoder passes `w_a`, the
/// summary decoder `w_bi`.
pub fn attention(
    fw: &mut Fwd,
    w: Var,
    query: Var,
    enc: &EncoderStates,
) -> Result<(Var, Var)> {
    if enc.hs.is_empty() {
        return Err(CoreError::contract("attention over empty keys"));
    }
    let u = fw.tape.matvec_t(w, query)?;
    let scores = fw.tape.matvec(enc.keys, u)?;
    let weights = fw.tape.softmax(scores)?;
    let context = fw.tape.matvec_t(enc.keys, weights)?;
    Ok((context, weights))
}

/// Informativeness scorer: σ(W_p·[body last state; name last state]).
pub fn score_name(
    fw: &mut Fwd,
    mp: &ModelParams,
    body: &EncoderStates,
    name: &EncoderStates,
) -> Result<Var> {
    let wp = fw.p(&mp.set, mp.w_p);
    let joint = fw.tape.concat(&[body.last, name.last])?;
    let lin = fw.tape.matvec(wp, joint)?;
    Ok(fw.tape.sigmoid(lin))
}

/// Softmax-normalizes the two scores and mixes the contexts. Returns the
/// fused context and the [2] weight vector.
pub fn fuse_names(
    fw: &mut Fwd,
    c_name: Var,
    c_gen: Var,
    score_name: Var,
    score_gen: Var,
) -> Result<(Var, Var)> {
    let pair = fw.tape.concat(&[score_name, score_gen])?;
    let weights = fw.tape.softmax(pair)?;
    let w_n = fw.tape.pick(weights, 0)?;
    let w_gn = fw.tape.pick(weights, 1)?;
    let a = fw.tape.mul_scalar(c_name, w_n)?;
    let b = fw.tape.mul_scalar(c_gen, w_gn)?;
    let fused = fw.tape.add(a, b)?;
    Ok((fused, weights))
}

// ─── Decoding ────────────────────────────────────────────────────────────

/// Generated (or teacher-forced) sequence with per-step distributions.
pub struct DecodeResult {
    /// Emitted token ids (extended ids for the summary decoder), without
    /// BOS/EOS.
    pub token_ids: Vec<usize>,
    /// On-tape distribution per step, for the losses.
    pub dist_vars: Vec<Var>,
    /// Teacher-forced target id per step (aligned with `dist_vars`).
    pub step_targets: Option<Vec<usize>>,
    /// Detached attention weights per step.
    pub step_attention: Vec<StepAttention>,
    /// Detached gate value per step (summary decoder only).
    pub gamma: Vec<f64>,
    /// Detached generation distribution per step, before the copy
    /// mixture (summary decoder only).
    pub step_p_cos: Vec<Vec<f64>>,
}

impl DecodeResult {
    /// Detached copy of the per-step distributions.
    pub fn step_distributions(&self, fw: &Fwd) -> Vec<Vec<f64>> {
        self.dist_vars.iter().map(|&v| fw.tape.values(v).to_vec()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepAttention {
    pub body: Vec<f64>,
    pub name: Vec<f64>,
    pub gen: Vec<f64>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// First-pass name decoder. Teacher-forced over wrapped targets
/// (`BOS \u{2026} EOS`) when given, greedy to `max_name_len` otherwise.
/// The recurrent state starts from the body encoder's final state.
pub fn decode_name(
    fw: &mut Fwd,
    mp: &ModelParams,
    body: &EncoderStates,
    targets: Option<&[usize]>,
) -> Result<DecodeResult> {
    let e_text = fw.p(&mp.set, mp.e_text);
    let w_a = fw.p(&mp.set, mp.w_a);
    let w_t = fw.p(&mp.set, mp.w_t_name);
    let w_s = fw.p(&mp.set, mp.w_s_name);

    let mut state = body.last;
    let mut dist_vars = Vec::new();
    let mut step_attention = Vec::new();
    let mut token_ids = Vec::new();
    let mut step_targets = None;

    match targets {
        Some(full) => {
            let full = corpus::strip_pad(full);
            if full.len() < 2 {
                return Err(CoreError::contract(
                    "decode_name: teacher targets need at least BOS and one token",
                ));
            }
            let mut expected = Vec::new();
            for step in 0..full.len() - 1 {
                let prev = if full[step] >= mp.sum_vocab_size { UNK } else { full[step] };
                let x = fw.tape.row(e_text, prev)?;
                state = gru_step(fw, &mp.set, &mp.name_gru, x, state)?;
                let (ctx, attn) = attention(fw, w_a, state, body)?;
                let mix = fw.tape.concat(&[state, ctx])?;
                let hidden = {
                    let lin = fw.tape.matvec(w_t, mix)?;
                    fw.tape.tanh(lin)
                };
                let logits = fw.tape.matvec(w_s, hidden)?;
                let dist = fw.tape.softmax(logits)?;
                dist_vars.push(dist);
                expected.push(full[step + 1]);
                step_attention.push(StepAttention {
                    body: fw.tape.values(attn).to_vec(),
                    ..Default::default()
                });
            }
            token_ids = full[1..]
                .iter()
                .copied()
                .filter(|&t| t != EOS)
                .collect();
            step_targets = Some(expected);
        }
        None => {
            let mut prev = BOS;
            for _ in 0..mp.cfg.max_name_len {
                let x = fw.tape.row(e_text, prev)?;
                state = gru_step(fw, &mp.set, &mp.name_gru, x, state)?;
                let (ctx, attn) = attention(fw, w_a, state, body)?;
                let mix = fw.tape.concat(&[state, ctx])?;
                let hidden = {
                    let lin = fw.tape.matvec(w_t, mix)?;
                    fw.tape.tanh(lin)
                };
                let logits = fw.tape.matvec(w_s, hidden)?;
                let dist = fw.tape.softmax(logits)?;
                let choice = argmax(fw.tape.values(dist));
                dist_vars.push(dist);
                step_attention.push(StepAttention {
                    body: fw.tape.values(attn).to_vec(),
                    ..Default::default()
                });
                if choice == EOS {
                    break;
                }
                token_ids.push(choice);
                prev = choice;
            }
        }
    }
    Ok(DecodeResult {
        token_ids,
        dist_vars,
        step_targets,
        step_attention,
        gamma: Vec::new(),
        step_p_cos: Vec::new(),
    })
}

// ─── Copy sources and the extended vocabulary ────────────────────────────

/// Token ids each copy source scatters onto, over the summary vocabulary
/// extended with this sample's out-of-vocabulary source tokens.
#[derive(Debug, Clone)]
pub struct CopySources {
    pub body_ids: Vec<usize>,
    pub name_ids: Vec<usize>,
    pub gen_ids: Vec<usize>,
    /// OOV token strings, in first-occurrence order; extended id = vocab
    /// size + position.
    pub ext_tokens: Vec<String>,
    pub vocab_size: usize,
}

impl CopySources {
    pub fn ext_size(&self) -> usize {
        self.vocab_size + self.ext_tokens.len()
    }

    pub fn token<'a>(&'a self, vocab: &'a Vocab, id: usize) -> &'a str {
        if id < self.vocab_size {
            vocab.token(id)
        } else {
            &self.ext_tokens[id - self.vocab_size]
        }
    }

    /// Extended id for a token: vocabulary id when in vocabulary, its
    /// extended id when copyable, UNK otherwise.
    pub fn ext_id(&self, vocab: &Vocab, token: &str) -> usize {
        if let Some(id) = vocab.lookup(token) {
            return id;
        }
        let lower = token.to_lowercase();
        match self.ext_tokens.iter().position(|t| *t == lower) {
            Some(pos) => self.vocab_size + pos,
            None => UNK,
        }
    }
}

/// Builds the per-sample extended vocabulary from the body and human-name
/// tokens; generated-name tokens are vocabulary ids already.
pub fn build_copy_sources(
    vocab: &Vocab,
    body_tokens: &[String],
    name_tokens: &[String],
    gen_ids: &[usize],
) -> CopySources {
    let vocab_size = vocab.len();
    let mut ext_tokens: Vec<String> = Vec::new();
    let mut resolve = |token: &str| -> usize {
        if let Some(id) = vocab.lookup(token) {
            return id;
        }
        let lower = token.to_lowercase();
        if let Some(pos) = ext_tokens.iter().position(|t| *t == lower) {
            vocab_size + pos
        } else {
            ext_tokens.push(lower);
            vocab_size + ext_tokens.len() - 1
        }
    };
    let body_ids: Vec<usize> = body_tokens.iter().map(|t| resolve(t)).collect();
    let name_ids: Vec<usize> = name_tokens.iter().map(|t| resolve(t)).collect();
    CopySources {
        body_ids,
        name_ids,
        gen_ids: gen_ids.to_vec(),
        ext_tokens,
        vocab_size,
    }
}

// ─── Summary decoding ────────────────────────────────────────────────────

/// How the summary decoder is conditioned on name information. The full
/// model requires the generated name's encoder states, which makes the
/// two-pass ordering an API-level guarantee.
pub enum NameConditioning<'a> {
    /// Human and generated names fused with scorer-derived weights.
    TwoPass {
        name: &'a EncoderStates,
        gen: &'a EncoderStates,
        score_name: Var,
        score_gen: Var,
    },
    /// Both names, constant 0.5/0.5 fusion (the no-MNIP ablation).
    TwoPassFixed {
        name: &'a EncoderStates,
        gen: &'a EncoderStates,
    },
    /// Human name only (the no-two-pass ablation).
    HumanOnly { name: &'a EncoderStates },
    /// No name context at all (the single-task ablation).
    BodyOnly,
}

/// Second-pass summary decoder with multiple attention, name fusion, and
/// the multi-copy output mixture. Teacher-forced over wrapped extended-id
/// targets when given, greedy otherwise. The recurrent state starts from
/// the body encoder's final state.
///
/// Returns the decode result and the detached fusion weights when the
/// conditioning has two name sources.
pub fn decode_summary(
    fw: &mut Fwd,
    mp: &ModelParams,
    body: &EncoderStates,
    cond: &NameConditioning<'_>,
    copy: &CopySources,
    targets: Option<&[usize]>,
) -> Result<(DecodeResult, Option<(f64, f64)>)> {
    let e_text = fw.p(&mp.set, mp.e_text);
    let w_bi = fw.p(&mp.set, mp.w_bi);
    let w_t = fw.p(&mp.set, mp.w_t_sum);
    let w_s = fw.p(&mp.set, mp.w_s_sum);
    let w_f = fw.p(&mp.set, mp.w_f);
    let b_f = fw.p(&mp.set, mp.b_f);

    // Fusion weights are per-sample (final states), not per-step.
    let (fusion_vars, fusion_detached) = match cond {
        NameConditioning::TwoPass { score_name, score_gen, .. } => {
            let pair = fw.tape.concat(&[*score_name, *score_gen])?;
            let weights = fw.tape.softmax(pair)?;
            let w_n = fw.tape.pick(weights, 0)?;
            let w_gn = fw.tape.pick(weights, 1)?;
            let vals = fw.tape.values(weights);
            let detached = (vals[0], vals[1]);
            (Some((w_n, w_gn)), Some(detached))
        }
        NameConditioning::TwoPassFixed { .. } => {
            let w_n = fw.tape.scalar(0.5);
            let w_gn = fw.tape.scalar(0.5);
            (Some((w_n, w_gn)), Some((0.5, 0.5)))
        }
        _ => (None, None),
    };

    let ext = copy.ext_size();
    let mut state = body.last;
    let mut dist_vars = Vec::new();
    let mut step_attention = Vec::new();
    let mut gamma_log = Vec::new();
    let mut p_cos_log = Vec::new();
    let mut token_ids = Vec::new();
    let mut step_targets = None;

    enum Steps {
        Teacher(Vec<usize>),
        Greedy,
    }
    let plan = match targets {
        Some(full) => {
            let full = corpus::strip_pad(full);
            if full.len() < 2 {
                return Err(CoreError::contract(
                    "decode_summary: teacher targets need at least BOS and one token",
                ));
            }
            Steps::Teacher(full.to_vec())
        }
        None => Steps::Greedy,
    };

    let steps = match &plan {
        Steps::Teacher(full) => full.len() - 1,
        Steps::Greedy => mp.cfg.max_summary_len,
    };

    let mut prev = BOS;
    let mut expected = Vec::new();
    for step in 0..steps {
        if let Steps::Teacher(full) = &plan {
            prev = full[step];
        }
        let embed_id = if prev >= mp.sum_vocab_size { UNK } else { prev };
        let x = fw.tape.row(e_text, embed_id)?;
        state = gru_step(fw, &mp.set, &mp.sum_gru, x, state)?;

        let (c_body, a_body) = attention(fw, w_bi, state, body)?;
        let mut attn_snapshot = StepAttention {
            body: fw.tape.values(a_body).to_vec(),
            ..Default::default()
        };

        // Name context and the copy distributions available this step.
        let mut copy_dists: Vec<Var> = Vec::with_capacity(3);
        let a_b_scatter = fw.tape.scatter_sum(a_body, &copy.body_ids, ext)?;
        copy_dists.push(a_b_scatter);

        let c_fused = match cond {
            NameConditioning::TwoPass { name, gen, .. }
            | NameConditioning::TwoPassFixed { name, gen } => {
                let (c_n, a_n) = attention(fw, w_bi, state, name)?;
                let (c_gn, a_gn) = attention(fw, w_bi, state, gen)?;
                attn_snapshot.name = fw.tape.values(a_n).to_vec();
                attn_snapshot.gen = fw.tape.values(a_gn).to_vec();
                copy_dists.push(fw.tape.scatter_sum(a_n, &copy.name_ids, ext)?);
                copy_dists.push(fw.tape.scatter_sum(a_gn, &copy.gen_ids, ext)?);
                let (w_n, w_gn) = fusion_vars.expect("two-pass conditioning has weights");
                let a = fw.tape.mul_scalar(c_n, w_n)?;
                let b = fw.tape.mul_scalar(c_gn, w_gn)?;
                fw.tape.add(a, b)?
            }
            NameConditioning::HumanOnly { name } => {
                let (c_n, a_n) = attention(fw, w_bi, state, name)?;
                attn_snapshot.name = fw.tape.values(a_n).to_vec();
                copy_dists.push(fw.tape.scatter_sum(a_n, &copy.name_ids, ext)?);
                c_n
            }
            NameConditioning::BodyOnly => fw.tape.zeros(vec![mp.cfg.hidden]),
        };

        let mix = fw.tape.concat(&[state, c_body, c_fused])?;
        let p_cos = {
            let lin = fw.tape.matvec(w_t, mix)?;
            let act = fw.tape.tanh(lin);
            let logits = fw.tape.matvec(w_s, act)?;
            fw.tape.softmax(logits)?
        };
        let gamma = {
            let lin = fw.tape.matvec(w_f, mix)?;
            let biased = fw.tape.add(lin, b_f)?;
            fw.tape.sigmoid(biased)
        };
        gamma_log.push(fw.tape.scalar_value(gamma));
        p_cos_log.push(fw.tape.values(p_cos).to_vec());

        let p_cos_ext = fw.tape.pad_zeros(p_cos, ext)?;
        let generated = fw.tape.mul_scalar(p_cos_ext, gamma)?;
        let mut copy_total = copy_dists[0];
        for &d in &copy_dists[1..] {
            copy_total = fw.tape.add(copy_total, d)?;
        }
        let one = fw.tape.scalar(1.0);
        let inv_gamma = fw.tape.sub(one, gamma)?;
        let copy_coef = fw.tape.scale(inv_gamma, 1.0 / copy_dists.len() as f64);
        let copied = fw.tape.mul_scalar(copy_total, copy_coef)?;
        let final_dist = fw.tape.add(generated, copied)?;

        dist_vars.push(final_dist);
        step_attention.push(attn_snapshot);

        match &plan {
            Steps::Teacher(full) => {
                expected.push(full[step + 1]);
            }
            Steps::Greedy => {
                let choice = argmax(fw.tape.values(final_dist));
                if choice == EOS {
                    break;
                }
                token_ids.push(choice);
                prev = choice;
            }
        }
    }

    if let Steps::Teacher(full) = &plan {
        token_ids = full[1..].iter().copied().filter(|&t| t != EOS).collect();
        step_targets = Some(expected);
    }

    Ok((
        DecodeResult {
            token_ids,
            dist_vars,
            step_targets,
            step_attention,
            gamma: gamma_log,
            step_p_cos: p_cos_log,
        },
        fusion_detached,
    ))
}

// ─── Prepared samples and the full two-pass forward ──────────────────────

/// Ablation variants, shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Two-pass with scorer-weighted fusion and all three losses.
    Full,
    /// Single task: body-to-summary only, body keeps the original name
    /// text, no name conditioning, body-only copy.
    NoMtl,
    /// MNG as plain auxiliary task; summary conditions on the human name
    /// only.
    NoTwoPass,
    /// Two-pass with constant 0.5/0.5 fusion and no MNIP loss.
    NoMnip,
}

impl Ablation {
    pub fn uses_generated_name(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoMnip)
    }

    pub fn uses_human_name(self) -> bool {
        !matches!(self, Ablation::NoMtl)
    }
}

impl std::str::FromStr for Ablation {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_mtl" => Ok(Ablation::NoMtl),
            "no_two_pass" => Ok(Ablation::NoTwoPass),
            "no_mnip" => Ok(Ablation::NoMnip),
            other => Err(CoreError::config(format!("unknown ablation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Ablation::Full => "full",
            Ablation::NoMtl => "no_mtl",
            Ablation::NoTwoPass => "no_two_pass",
            Ablation::NoMnip => "no_mnip",
        };
        f.write_str(s)
    }
}

/// A sample encoded against fixed vocabularies and truncated to the model
/// limits, ready for the tape.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub id: String,
    pub body_ids: Vec<usize>,
    pub body_type_ids: Vec<usize>,
    /// Body tokens aligned with `body_ids` (copy-source strings).
    pub body_tokens: Vec<String>,
    pub name_enc_ids: Vec<usize>,
    /// Name tokens aligned with `name_enc_ids`.
    pub name_tokens: Vec<String>,
    /// Wrapped BOS..EOS name targets.
    pub name_targets: Vec<usize>,
    /// Content summary tokens after truncation to the target window.
    pub summary_tokens: Vec<String>,
    pub golden_informativeness: f64,
}

/// Encodes a corpus sample. `unmask` restores the original name text in
/// the body (single-task ablation); `mask_name_as_unk` replaces every
/// human-name token with UNK (the masked-name experiment).
pub fn prepare_sample(
    sample: &Sample,
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    cfg: &ModelConfig,
    unmask: bool,
    mask_name_as_unk: bool,
) -> Result<PreparedSample> {
    if sample.body_tokens.len() != sample.body_types.len() {
        return Err(CoreError::contract(format!(
            "sample {}: body_tokens and body_types lengths differ",
            sample.id
        )));
    }
    let body_seq = if unmask {
        corpus::unmask_name(
            &crate::ast::AsbtSequence {
                tokens: sample.body_tokens.clone(),
                types: sample.body_types.clone(),
            },
            &sample.name_tokens,
        )
    } else {
        crate::ast::AsbtSequence {
            tokens: sample.body_tokens.clone(),
            types: sample.body_types.clone(),
        }
    };
    let take = body_seq.tokens.len().min(cfg.max_body_len);
    let body_tokens: Vec<String> = body_seq.tokens[..take].to_vec();
    let body_ids: Vec<usize> = body_tokens.iter().map(|t| body_vocab.id(t)).collect();
    let body_type_ids: Vec<usize> = body_seq.types[..take].iter().map(|&t| t as usize).collect();

    let name_take = sample.name_tokens.len().min(cfg.max_name_len);
    let name_tokens: Vec<String> = if mask_name_as_unk {
        vec![UNK_TOKEN.to_string(); name_take]
    } else {
        sample.name_tokens[..name_take].to_vec()
    };
    let name_enc_ids: Vec<usize> = name_tokens.iter().map(|t| sum_vocab.id(t)).collect();

    let mut name_targets = Vec::with_capacity(name_take + 2);
    name_targets.push(BOS);
    name_targets.extend(sample.name_tokens.iter().map(|t| sum_vocab.id(t)));
    name_targets.push(EOS);
    name_targets.truncate(cfg.max_name_len.max(2));

    // Wrapping consumes two slots of the summary window.
    let content = sample
        .summary_tokens
        .len()
        .min(cfg.max_summary_len.saturating_sub(2).max(1));
    let summary_tokens: Vec<String> = sample.summary_tokens[..content].to_vec();

    Ok(PreparedSample {
        id: sample.id.clone(),
        body_ids,
        body_type_ids,
        body_tokens,
        name_enc_ids,
        name_tokens,
        name_targets,
        summary_tokens,
        golden_informativeness: sample.informativeness,
    })
}

/// Greedy first-pass name decode on a scratch tape. The returned ids are
/// the discrete generated name; pass 2 treats them as constants.
pub fn greedy_name_ids(mp: &ModelParams, prep: &PreparedSample) -> Result<Vec<usize>> {
    let mut fw = Fwd::new();
    let body = encode_body(&mut fw, mp, &prep.body_ids, &prep.body_type_ids)?;
    let dec = decode_name(&mut fw, mp, &body, None)?;
    Ok(dec.token_ids)
}

/// One sample's full forward pass, as far as the ablation requires.
pub struct SampleForward {
    /// Teacher-forced name decode (present when MNG participates and
    /// teacher forcing was requested).
    pub name_decode: Option<DecodeResult>,
    /// Discrete generated-name ids fed to pass 2, empty when unused.
    pub gen_name_ids: Vec<usize>,
    pub score_human: Option<Var>,
    pub score_gen: Option<Var>,
    pub fusion_weights: Option<(f64, f64)>,
    pub summary: DecodeResult,
    pub copy: CopySources,
}

/// Builds the two-pass forward for one sample.
///
/// `gen_name_ids` must be supplied for the conditionings that consume a
/// generated name (decode it first via [`greedy_name_ids`], or reuse a
/// frozen decode). `teacher` switches both decoders to teacher forcing,
/// with summary targets drawn from the prepared sample.
pub fn forward_sample(
    fw: &mut Fwd,
    mp: &ModelParams,
    prep: &PreparedSample,
    ablation: Ablation,
    gen_name_ids: Option<&[usize]>,
    sum_vocab: &Vocab,
    teacher: bool,
) -> Result<SampleForward> {
    let body = encode_body(fw, mp, &prep.body_ids, &prep.body_type_ids)?;

    let name_decode = if teacher && ablation != Ablation::NoMtl {
        Some(decode_name(fw, mp, &body, Some(&prep.name_targets))?)
    } else {
        None
    };

    let gen_ids: Vec<usize> = match (ablation.uses_generated_name(), gen_name_ids) {
        (true, Some(ids)) => ids.to_vec(),
        (true, None) => {
            return Err(CoreError::contract(
                "two-pass forward requires a completed generated name",
            ))
        }
        (false, _) => Vec::new(),
    };

    // The shared name encoder needs at least one token; an empty greedy
    // decode degenerates to a single UNK.
    let gen_enc_ids: Vec<usize> = if gen_ids.is_empty() { vec![UNK] } else { gen_ids.clone() };

    let human = if ablation.uses_human_name() {
        Some(encode_name(fw, mp, &prep.name_enc_ids)?)
    } else {
        None
    };
    let gen = if ablation.uses_generated_name() {
        Some(encode_name(fw, mp, &gen_enc_ids)?)
    } else {
        None
    };

    let (score_human, score_gen) = match ablation {
        Ablation::Full => {
            let h = human.as_ref().expect("human name present");
            let g = gen.as_ref().expect("generated name present");
            (
                Some(score_name(fw, mp, &body, h)?),
                Some(score_name(fw, mp, &body, g)?),
            )
        }
        _ => (None, None),
    };

    let copy = match ablation {
        Ablation::NoMtl => build_copy_sources(sum_vocab, &prep.body_tokens, &[], &[]),
        Ablation::NoTwoPass => {
            build_copy_sources(sum_vocab, &prep.body_tokens, &prep.name_tokens, &[])
        }
        _ => build_copy_sources(
            sum_vocab,
            &prep.body_tokens,
            &prep.name_tokens,
            &gen_enc_ids,
        ),
    };

    let cond = match ablation {
        Ablation::Full => NameConditioning::TwoPass {
            name: human.as_ref().expect("human name present"),
            gen: gen.as_ref().expect("generated name present"),
            score_name: score_human.expect("scored"),
            score_gen: score_gen.expect("scored"),
        },
        Ablation::NoMnip => NameConditioning::TwoPassFixed {
            name: human.as_ref().expect("human name present"),
            gen: gen.as_ref().expect("generated name present"),
        },
        Ablation::NoTwoPass => NameConditioning::HumanOnly {
            name: human.as_ref().expect("human name present"),
        },
        Ablation::NoMtl => NameConditioning::BodyOnly,
    };

    let summary_targets: Option<Vec<usize>> = if teacher {
        let mut t = Vec::with_capacity(prep.summary_tokens.len() + 2);
        t.push(BOS);
        t.extend(prep.summary_tokens.iter().map(|tok| copy.ext_id(sum_vocab, tok)));
        t.push(EOS);
        Some(t)
    } else {
        None
    };

    let (summary, fusion_weights) =
        decode_summary(fw, mp, &body, &cond, &copy, summary_targets.as_deref())?;

    Ok(SampleForward {
        name_decode,
        gen_name_ids: gen_ids,
        score_human,
        score_gen,
        fusion_weights,
        summary,
        copy,
    })
}

/// MNG/MNIP-only forward (the pre-training phase): teacher-forced name
/// decode plus the human-name informativeness score.
pub struct PretrainForward {
    pub name_decode: DecodeResult,
    pub score_human: Var,
}

pub fn forward_pretrain(
    fw: &mut Fwd,
    mp: &ModelParams,
    prep: &PreparedSample,
) -> Result<PretrainForward> {
    let body = encode_body(fw, mp, &prep.body_ids, &prep.body_type_ids)?;
    let name_decode = decode_name(fw, mp, &body, Some(&prep.name_targets))?;
    let human = encode_name(fw, mp, &prep.name_enc_ids)?;
    let score_human = score_name(fw, mp, &body, &human)?;
    Ok(PretrainForward {
        name_decode,
        score_human,
    })
}

#[cfg(test)]
mod tests;
