//! Losses, pre-training, joint multi-task optimization, checkpointing,
//! and validation-based model selection.
//!
//! The objective is `loss_cos + α·loss_mng + β·loss_mnip`: summed
//! negative log-likelihood over summary and name positions plus a
//! mean-square error on the informativeness scores. Ablations drop
//! terms and rewire the summary conditioning (see [`Ablation`]).

use crate::autodiff::{Fwd, ParamId, ParamSet, Var};
use crate::corpus::{Sample, Vocab};
use crate::error::{CoreError, Result};
use crate::model::{
    self, Ablation, ModelConfig, ModelParams, PreparedSample, LOG_FLOOR,
};
use crate::rng::SeedSplitter;
use serde::{Deserialize, Serialize};

mod checkpoint;
pub use checkpoint::{checkpoint_diff, Checkpoint, CHECKPOINT_MAGIC};

// ─── Configuration ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the name-generation loss.
    pub alpha: f64,
    /// Weight of the informativeness-prediction loss.
    pub beta: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    /// Optional global gradient-norm guard.
    pub max_grad_norm: Option<f64>,
    /// Stop once validation BLEU4 reaches this value.
    pub early_stop_val_bleu: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            beta: 0.1,
            lr: 0.001,
            batch_size: 16,
            max_epochs: 30,
            seed: 42,
            ablation: Ablation::Full,
            max_grad_norm: None,
            early_stop_val_bleu: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(CoreError::config("alpha and beta must be nonnegative"));
        }
        if self.lr <= 0.0 {
            return Err(CoreError::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::config("batch size must be positive"));
        }
        Ok(())
    }
}

// ─── Loss construction ───────────────────────────────────────────────────

/// −Σ ln p(target) over one decode's steps. Logs are clamped at
/// [`LOG_FLOOR`]; the tape counts clamp events.
fn nll_of_decode(fw: &mut Fwd, dec: &model::DecodeResult) -> Result<(Var, usize)> {
    let targets = dec
        .step_targets
        .as_ref()
        .ok_or_else(|| CoreError::contract("nll over a greedy decode"))?;
    let mut total: Option<Var> = None;
    for (&dist, &target) in dec.dist_vars.iter().zip(targets) {
        let p = fw.tape.pick(dist, target)?;
        let lp = fw.tape.ln_clamped(p, LOG_FLOOR);
        total = Some(match total {
            Some(t) => fw.tape.add(t, lp)?,
            None => lp,
        });
    }
    let total = total.ok_or_else(|| CoreError::contract("nll over an empty decode"))?;
    Ok((fw.tape.scale(total, -1.0), targets.len()))
}

/// Mean over the batch; kept on-tape via constant 1/n scaling.
fn mean_of(fw: &mut Fwd, terms: &[Var]) -> Result<Var> {
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = fw.tape.add(total, t)?;
    }
    Ok(fw.tape.scale(total, 1.0 / terms.len() as f64))
}

/// Per-batch loss components (detached values for logging).
#[derive(Debug, Clone, Default, Serialize)]
pub struct JointBreakdown {
    pub joint: f64,
    pub cos: f64,
    pub mng: f64,
    pub mnip: f64,
    pub cos_tokens: usize,
    pub mng_tokens: usize,
    /// Per-token mean of the summary loss.
    pub cos_per_token: f64,
    pub clamp_events: usize,
    /// Mean fusion weights across the batch (two-pass modes).
    pub fusion_mean: Option<(f64, f64)>,
}

/// Summed NLL of the summary task over a batch, via full two-pass
/// forwards. `frozen_gen` fixes the generated names (gradient checking);
/// otherwise each sample's name is greedily decoded on a scratch tape.
pub fn loss_cos(
    fw: &mut Fwd,
    mp: &ModelParams,
    batch: &[PreparedSample],
    ablation: Ablation,
    sum_vocab: &Vocab,
    frozen_gen: Option<&[Vec<usize>]>,
) -> Result<(Var, usize)> {
    if batch.is_empty() {
        return Err(CoreError::contract("loss_cos over an empty batch"));
    }
    let mut terms = Vec::with_capacity(batch.len());
    let mut tokens = 0;
    for (i, prep) in batch.iter().enumerate() {
        let gen = gen_ids_for(mp, prep, ablation, frozen_gen, i)?;
        let out = model::forward_sample(fw, mp, prep, ablation, gen.as_deref(), sum_vocab, true)?;
        let (nll, n) = nll_of_decode(fw, &out.summary)?;
        terms.push(nll);
        tokens += n;
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = fw.tape.add(total, t)?;
    }
    Ok((total, tokens))
}

/// Summed NLL of teacher-forced name generation over a batch.
pub fn loss_mng(fw: &mut Fwd, mp: &ModelParams, batch: &[PreparedSample]) -> Result<(Var, usize)> {
    if batch.is_empty() {
        return Err(CoreError::contract("loss_mng over an empty batch"));
    }
    let mut total: Option<Var> = None;
    let mut tokens = 0;
    for prep in batch {
        let out = model::forward_pretrain(fw, mp, prep)?;
        let (nll, n) = nll_of_decode(fw, &out.name_decode)?;
        tokens += n;
        total = Some(match total {
            Some(t) => fw.tape.add(t, nll)?,
            None => nll,
        });
    }
    Ok((total.expect("nonempty batch"), tokens))
}

/// Mean squared error between golden informativeness scores and the
/// scorer's output on human-written names.
pub fn loss_mnip(fw: &mut Fwd, mp: &ModelParams, batch: &[PreparedSample]) -> Result<Var> {
    if batch.is_empty() {
        return Err(CoreError::contract("loss_mnip over an empty batch"));
    }
    let mut terms = Vec::with_capacity(batch.len());
    for prep in batch {
        let out = model::forward_pretrain(fw, mp, prep)?;
        let golden = fw.tape.scalar(prep.golden_informativeness);
        let diff = fw.tape.sub(golden, out.score_human)?;
        terms.push(fw.tape.mul(diff, diff)?);
    }
    mean_of(fw, &terms)
}

fn gen_ids_for(
    mp: &ModelParams,
    prep: &PreparedSample,
    ablation: Ablation,
    frozen: Option<&[Vec<usize>]>,
    index: usize,
) -> Result<Option<Vec<usize>>> {
    if !ablation.uses_generated_name() {
        return Ok(None);
    }
    match frozen {
        Some(all) => Ok(Some(all[index].clone())),
        None => Ok(Some(model::greedy_name_ids(mp, prep)?)),
    }
}

/// The weighted multi-task objective over one batch, sharing each
/// sample's body encoding between the summary and name paths.
pub fn joint_loss(
    fw: &mut Fwd,
    mp: &ModelParams,
    batch: &[PreparedSample],
    cfg: &TrainConfig,
    sum_vocab: &Vocab,
    frozen_gen: Option<&[Vec<usize>]>,
) -> Result<(Var, JointBreakdown)> {
    if batch.is_empty() {
        return Err(CoreError::contract("joint_loss over an empty batch"));
    }
    cfg.validate()?;
    let ablation = cfg.ablation;

    let mut cos_terms = Vec::with_capacity(batch.len());
    let mut mng_terms = Vec::new();
    let mut mnip_terms = Vec::new();
    let mut cos_tokens = 0;
    let mut mng_tokens = 0;
    let mut fusion_acc = (0.0, 0.0);
    let mut fusion_count = 0usize;

    for (i, prep) in batch.iter().enumerate() {
        let gen = gen_ids_for(mp, prep, ablation, frozen_gen, i)?;
        let out = model::forward_sample(fw, mp, prep, ablation, gen.as_deref(), sum_vocab, true)?;
        let (cos_nll, n) = nll_of_decode(fw, &out.summary)?;
        cos_terms.push(cos_nll);
        cos_tokens += n;
        if let Some(name_dec) = &out.name_decode {
            let (mng_nll, n) = nll_of_decode(fw, name_dec)?;
            mng_terms.push(mng_nll);
            mng_tokens += n;
        }
        if ablation == Ablation::Full {
            let score = out.score_human.expect("full model scores the human name");
            let golden = fw.tape.scalar(prep.golden_informativeness);
            let diff = fw.tape.sub(golden, score)?;
            mnip_terms.push(fw.tape.mul(diff, diff)?);
        }
        if let Some((w_n, w_gn)) = out.fusion_weights {
            fusion_acc.0 += w_n;
            fusion_acc.1 += w_gn;
            fusion_count += 1;
        }
    }

    let mut cos = cos_terms[0];
    for &t in &cos_terms[1..] {
        cos = fw.tape.add(cos, t)?;
    }
    let mut joint = cos;
    let mut mng_value = 0.0;
    if !mng_terms.is_empty() {
        let mut mng = mng_terms[0];
        for &t in &mng_terms[1..] {
            mng = fw.tape.add(mng, t)?;
        }
        mng_value = fw.tape.scalar_value(mng);
        if cfg.alpha != 0.0 {
            let weighted = fw.tape.scale(mng, cfg.alpha);
            joint = fw.tape.add(joint, weighted)?;
        }
    }
    let mut mnip_value = 0.0;
    if !mnip_terms.is_empty() {
        let mnip = mean_of(fw, &mnip_terms)?;
        mnip_value = fw.tape.scalar_value(mnip);
        if cfg.beta != 0.0 {
            let weighted = fw.tape.scale(mnip, cfg.beta);
            joint = fw.tape.add(joint, weighted)?;
        }
    }

    let cos_value = fw.tape.scalar_value(cos);
    let breakdown = JointBreakdown {
        joint: fw.tape.scalar_value(joint),
        cos: cos_value,
        mng: mng_value,
        mnip: mnip_value,
        cos_tokens,
        mng_tokens,
        cos_per_token: cos_value / cos_tokens.max(1) as f64,
        clamp_events: fw.tape.clamp_events(),
        fusion_mean: if fusion_count > 0 {
            Some((
                fusion_acc.0 / fusion_count as f64,
                fusion_acc.1 / fusion_count as f64,
            ))
        } else {
            None
        },
    };
    Ok((joint, breakdown))
}

// ─── Adam ────────────────────────────────────────────────────────────────

/// Standard Adam (β₁=0.9, β₂=0.999, ε=1e-8) over a parameter scope.
/// Parameters whose gradient is absent are left untouched, moments
/// included.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, set: &ParamSet) -> Adam {
        let m = set.ids().map(|id| vec![0.0; set.get(id).numel()]).collect();
        let v = set.ids().map(|id| vec![0.0; set.get(id).numel()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m,
            v,
        }
    }

    /// One update over the scope; clears consumed gradients. With
    /// `max_norm` set, gradients are rescaled when their global norm
    /// exceeds it.
    pub fn step(&mut self, set: &mut ParamSet, scope: &[ParamId], max_norm: Option<f64>) {
        self.t += 1;
        let mut clip = 1.0;
        if let Some(limit) = max_norm {
            let mut sq = 0.0;
            for &id in scope {
                if let Some(g) = &set.get(id).grad {
                    sq += g.iter().map(|v| v * v).sum::<f64>();
                }
            }
            let norm = sq.sqrt();
            if norm > limit {
                clip = limit / norm;
            }
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for &id in scope {
            let tensor = set.get_mut(id);
            let Some(grad) = tensor.grad.take() else { continue };
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            for j in 0..grad.len() {
                let g = grad[j] * clip;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                tensor.values[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

// ─── Training loops ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub joint: f64,
    pub cos: f64,
    pub mng: f64,
    pub mnip: f64,
    pub clamp_events: usize,
    pub fusion_w_name: Option<f64>,
    pub fusion_w_gen: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_joint: f64,
    pub mean_cos_per_token: f64,
    pub val_bleu4: f64,
    pub clamp_events: usize,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
}

fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size)
}

fn prepare_all(
    samples: &[Sample],
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    cfg: &ModelConfig,
    ablation: Ablation,
) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            model::prepare_sample(
                s,
                body_vocab,
                sum_vocab,
                cfg,
                ablation == Ablation::NoMtl,
                false,
            )
        })
        .collect()
}

/// Greedy validation BLEU4 under the training ablation.
fn validation_bleu(
    mp: &ModelParams,
    preps: &[PreparedSample],
    ablation: Ablation,
    sum_vocab: &Vocab,
) -> Result<f64> {
    if preps.is_empty() {
        return Ok(0.0);
    }
    let mut refs = Vec::with_capacity(preps.len());
    let mut cands = Vec::with_capacity(preps.len());
    for prep in preps {
        let gen = if ablation.uses_generated_name() {
            Some(model::greedy_name_ids(mp, prep)?)
        } else {
            None
        };
        let mut fw = Fwd::new();
        let out =
            model::forward_sample(&mut fw, mp, prep, ablation, gen.as_deref(), sum_vocab, false)?;
        let cand: Vec<String> = out
            .summary
            .token_ids
            .iter()
            .map(|&id| out.copy.token(sum_vocab, id).to_string())
            .collect();
        refs.push(prep.summary_tokens.clone());
        cands.push(cand);
    }
    crate::eval::bleu4(&refs, &cands)
}

/// Joint multi-task training with per-epoch validation; returns the
/// checkpoint of the best-validation epoch.
pub fn train(
    train_samples: &[Sample],
    valid_samples: &[Sample],
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    init: Option<&Checkpoint>,
) -> Result<TrainOutcome> {
    use rand::seq::SliceRandom;
    cfg.validate()?;
    model_cfg.validate()?;
    if train_samples.is_empty() {
        return Err(CoreError::contract("train called with an empty corpus"));
    }

    let mut mp = ModelParams::init(model_cfg, body_vocab.len(), sum_vocab.len(), cfg.seed)?;
    if let Some(ckpt) = init {
        checkpoint::transfer_params(ckpt, &mut mp, body_vocab, sum_vocab)?;
    }

    let train_preps = prepare_all(train_samples, body_vocab, sum_vocab, model_cfg, cfg.ablation)?;
    let valid_preps = prepare_all(valid_samples, body_vocab, sum_vocab, model_cfg, cfg.ablation)?;

    let splitter = SeedSplitter::new(cfg.seed);
    let scope: Vec<ParamId> = mp.set.ids().collect();
    let mut adam = Adam::new(cfg.lr, &mp.set);

    let mut best_val = validation_bleu(&mp, &valid_preps, cfg.ablation, sum_vocab)?;
    let mut best_params = mp.set.clone();
    let mut best_epoch = 0usize;

    let mut epochs = Vec::new();
    let mut steps = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_preps.len()).collect();
        order.shuffle(&mut splitter.stream_at("batch", epoch as u64));

        let mut joint_sum = 0.0;
        let mut cpt_sum = 0.0;
        let mut clamps = 0usize;
        let mut batch_count = 0usize;
        for (step, chunk) in batches(&order, cfg.batch_size).enumerate() {
            let batch: Vec<PreparedSample> =
                chunk.iter().map(|&i| train_preps[i].clone()).collect();
            let mut fw = Fwd::new();
            let (loss, parts) = joint_loss(&mut fw, &mp, &batch, cfg, sum_vocab, None)?;
            if !parts.joint.is_finite() {
                return Err(CoreError::numeric(format!(
                    "training diverged at epoch {epoch} step {step}: joint loss {}",
                    parts.joint
                )));
            }
            fw.backprop(&mut mp.set, loss)?;
            adam.step(&mut mp.set, &scope, cfg.max_grad_norm);
            if !mp.set.all_finite() {
                return Err(CoreError::numeric(format!(
                    "non-finite parameter after optimizer step (epoch {epoch} step {step})"
                )));
            }
            joint_sum += parts.joint;
            cpt_sum += parts.cos_per_token;
            clamps += parts.clamp_events;
            batch_count += 1;
            steps.push(StepRecord {
                epoch,
                step,
                joint: parts.joint,
                cos: parts.cos,
                mng: parts.mng,
                mnip: parts.mnip,
                clamp_events: parts.clamp_events,
                fusion_w_name: parts.fusion_mean.map(|f| f.0),
                fusion_w_gen: parts.fusion_mean.map(|f| f.1),
            });
        }

        let val_bleu4 = validation_bleu(&mp, &valid_preps, cfg.ablation, sum_vocab)?;
        epochs.push(EpochRecord {
            epoch,
            mean_joint: joint_sum / batch_count.max(1) as f64,
            mean_cos_per_token: cpt_sum / batch_count.max(1) as f64,
            val_bleu4,
            clamp_events: clamps,
        });
        // ties go to the later (more trained) epoch
        if val_bleu4 >= best_val {
            best_val = val_bleu4;
            best_params = mp.set.clone();
            best_epoch = epoch;
        }
        if let Some(target) = cfg.early_stop_val_bleu {
            if val_bleu4 >= target {
                break;
            }
        }
    }

    let checkpoint = Checkpoint {
        version: 1,
        params: best_params,
        model_cfg: model_cfg.clone(),
        train_cfg: cfg.clone(),
        epoch: best_epoch,
        val_metric: best_val,
        body_vocab: body_vocab.clone(),
        sum_vocab: sum_vocab.clone(),
    };
    Ok(TrainOutcome {
        checkpoint,
        epochs,
        steps,
    })
}

// ─── Pre-training ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct PretrainEpochRecord {
    pub epoch: usize,
    pub mng: f64,
    pub mnip: f64,
    pub loss: f64,
}

pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<PretrainEpochRecord>,
}

/// Pre-optimizes the MNG and MNIP parameter subset with
/// `loss_mng + β·loss_mnip`; summary-only parameters are never touched.
pub fn pretrain(
    corpus: &[Sample],
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    use rand::seq::SliceRandom;
    cfg.validate()?;
    model_cfg.validate()?;
    if corpus.is_empty() {
        return Err(CoreError::contract("pretrain called with an empty corpus"));
    }

    let mut mp = ModelParams::init(model_cfg, body_vocab.len(), sum_vocab.len(), cfg.seed)?;
    let preps = prepare_all(corpus, body_vocab, sum_vocab, model_cfg, Ablation::Full)?;

    let splitter = SeedSplitter::new(cfg.seed);
    let scope = mp.pretrain_param_ids();
    let mut adam = Adam::new(cfg.lr, &mp.set);
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..preps.len()).collect();
        order.shuffle(&mut splitter.stream_at("batch", epoch as u64));
        let mut mng_sum = 0.0;
        let mut mnip_sum = 0.0;
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for chunk in batches(&order, cfg.batch_size) {
            let batch: Vec<PreparedSample> = chunk.iter().map(|&i| preps[i].clone()).collect();
            let mut fw = Fwd::new();
            let (mng, _tokens) = loss_mng(&mut fw, &mp, &batch)?;
            let mnip = loss_mnip(&mut fw, &mp, &batch)?;
            let mng_v = fw.tape.scalar_value(mng);
            let mnip_v = fw.tape.scalar_value(mnip);
            let weighted = fw.tape.scale(mnip, cfg.beta);
            let loss = fw.tape.add(mng, weighted)?;
            let loss_v = fw.tape.scalar_value(loss);
            if !loss_v.is_finite() {
                return Err(CoreError::numeric(format!(
                    "pre-training diverged at epoch {epoch}: loss {loss_v}"
                )));
            }
            fw.backprop(&mut mp.set, loss)?;
            adam.step(&mut mp.set, &scope, cfg.max_grad_norm);
            mng_sum += mng_v;
            mnip_sum += mnip_v;
            loss_sum += loss_v;
            count += 1;
        }
        epochs.push(PretrainEpochRecord {
            epoch,
            mng: mng_sum / count.max(1) as f64,
            mnip: mnip_sum / count.max(1) as f64,
            loss: loss_sum / count.max(1) as f64,
        });
    }

    let final_loss = epochs.last().map(|e| e.loss).unwrap_or(f64::NAN);
    let checkpoint = Checkpoint {
        version: 1,
        params: mp.set,
        model_cfg: model_cfg.clone(),
        train_cfg: cfg.clone(),
        epoch: cfg.max_epochs,
        val_metric: final_loss,
        body_vocab: body_vocab.clone(),
        sum_vocab: sum_vocab.clone(),
    };
    Ok(PretrainOutcome { checkpoint, epochs })
}
