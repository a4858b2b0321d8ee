use super::*;
use crate::autodiff::grad_check;

fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        body_embed: 6,
        type_embed: 4,
        text_embed: 6,
        max_name_len: 5,
        max_body_len: 24,
        max_summary_len: 8,
    }
}

fn tiny_vocab(extra: &[&str]) -> Vocab {
    Vocab::build(extra.iter().copied(), extra.len() + corpus::RESERVED.len() + 1).unwrap()
}

fn tiny_model(seed: u64) -> (ModelParams, Vocab, Vocab) {
    let body_vocab = tiny_vocab(&["assign", "simplename", "call", "alpha", "beta", "gamma"]);
    let sum_vocab = tiny_vocab(&["alpha", "beta", "gamma", "delta", "make", "thing"]);
    let mp = ModelParams::init(&tiny_cfg(), body_vocab.len(), sum_vocab.len(), seed).unwrap();
    (mp, body_vocab, sum_vocab)
}

fn zero_params(mp: &mut ModelParams) {
    for id in mp.set.ids().collect::<Vec<_>>() {
        mp.set.get_mut(id).values.iter_mut().for_each(|v| *v = 0.0);
    }
}

fn set_values(mp: &mut ModelParams, name: &str, value: f64) {
    let id = mp.set.id_of(name).unwrap();
    mp.set.get_mut(id).values.iter_mut().for_each(|v| *v = value);
}

fn prep_for(
    mp: &ModelParams,
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    body: &[(&str, u8)],
    name: &[&str],
    summary: &[&str],
) -> PreparedSample {
    let sample = Sample {
        id: "t".into(),
        body_tokens: body.iter().map(|(t, _)| t.to_string()).collect(),
        body_types: body.iter().map(|&(_, ty)| ty).collect(),
        name_tokens: name.iter().map(|s| s.to_string()).collect(),
        summary_tokens: summary.iter().map(|s| s.to_string()).collect(),
        informativeness: 0.5,
    };
    prepare_sample(&sample, body_vocab, sum_vocab, &mp.cfg, false, false).unwrap()
}

// ─── gru_step ────────────────────────────────────────────────────────────

#[test]
fn gru_step_zero_weights_halves_state() {
    let (mut mp, _, _) = tiny_model(1);
    zero_params(&mut mp);
    let mut fw = Fwd::new();
    let h_prev = fw.tape.leaf(vec![8], (0..8).map(|i| i as f64).collect()).unwrap();
    let x = fw.tape.leaf(vec![6], vec![0.3; 6]).unwrap();
    let h = gru_step(&mut fw, &mp.set, &mp.name_gru, x, h_prev).unwrap();
    // z = σ(0) = 0.5, candidate = tanh(0) = 0, h = 0.5·h_prev
    for (i, &v) in fw.tape.values(h).iter().enumerate() {
        assert!((v - 0.5 * i as f64).abs() < 1e-12);
    }

    let mut fw = Fwd::new();
    let h_prev = fw.tape.zeros(vec![8]);
    let x = fw.tape.leaf(vec![6], vec![1.0; 6]).unwrap();
    let h = gru_step(&mut fw, &mp.set, &mp.name_gru, x, h_prev).unwrap();
    assert!(fw.tape.values(h).iter().all(|&v| v == 0.0));
}

/// Straight-line re-implementation of the gate equations, no tape.
fn gru_oracle(wz: &[f64], wr: &[f64], wh: &[f64], h: &[f64], x: &[f64]) -> Vec<f64> {
    let hd = h.len();
    let width = hd + x.len();
    let cat: Vec<f64> = h.iter().chain(x).copied().collect();
    let mv = |w: &[f64], v: &[f64]| -> Vec<f64> {
        (0..hd)
            .map(|i| (0..width).map(|j| w[i * width + j] * v[j]).sum::<f64>())
            .collect()
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z: Vec<f64> = mv(wz, &cat).into_iter().map(sig).collect();
    let r: Vec<f64> = mv(wr, &cat).into_iter().map(sig).collect();
    let rh_cat: Vec<f64> = r
        .iter()
        .zip(h)
        .map(|(ri, hi)| ri * hi)
        .chain(x.iter().copied())
        .collect();
    let cand: Vec<f64> = mv(wh, &rh_cat).into_iter().map(f64::tanh).collect();
    (0..hd)
        .map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i])
        .collect()
}

#[test]
fn gru_step_matches_straight_line_oracle_and_gradients() {
    let (mut mp, _, _) = tiny_model(2);
    let h_vals: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.4).collect();
    let x_vals: Vec<f64> = (0..6).map(|i| 0.2 - 0.07 * i as f64).collect();

    let mut fw = Fwd::new();
    let h_prev = fw.tape.leaf(vec![8], h_vals.clone()).unwrap();
    let x = fw.tape.leaf(vec![6], x_vals.clone()).unwrap();
    let h = gru_step(&mut fw, &mp.set, &mp.name_gru, x, h_prev).unwrap();

    let wz = mp.set.get(mp.name_gru.wz).values.clone();
    let wr = mp.set.get(mp.name_gru.wr).values.clone();
    let wh = mp.set.get(mp.name_gru.wh).values.clone();
    let want = gru_oracle(&wz, &wr, &wh, &h_vals, &x_vals);
    for (got, want) in fw.tape.values(h).iter().zip(&want) {
        assert!((got - want).abs() < 1e-12);
    }

    // gradient of ‖h‖² w.r.t. the GRU weights
    let report = grad_check(
        &mut mp.set,
        |fw, set| {
            let gru = GruParams {
                wz: set.id_of("gru_name.wz").unwrap(),
                wr: set.id_of("gru_name.wr").unwrap(),
                wh: set.id_of("gru_name.wh").unwrap(),
            };
            let h_prev = fw.tape.leaf(vec![8], h_vals.clone())?;
            let x = fw.tape.leaf(vec![6], x_vals.clone())?;
            let h = gru_step(fw, set, &gru, x, h_prev)?;
            let sq = fw.tape.mul(h, h)?;
            Ok(fw.tape.sum(sq))
        },
        1e-5,
        32,
        7,
    )
    .unwrap();
    assert!(report.max_rel_err() < 1e-5, "err {}", report.max_rel_err());
}

// ─── encode_body ─────────────────────────────────────────────────────────

#[test]
fn encode_body_base_case_and_unrolling() {
    let (mp, _, _) = tiny_model(3);
    let ids = [5usize, 6, 7];
    let types = [0usize, 2, 1];

    // length-1 equals a single gru_step from zero state
    let mut fw = Fwd::new();
    let enc = encode_body(&mut fw, &mp, &ids[..1], &types[..1]).unwrap();
    let single = fw.tape.values(enc.last).to_vec();

    let mut fw2 = Fwd::new();
    let e_b = fw2.p(&mp.set, mp.e_body);
    let e_t = fw2.p(&mp.set, mp.e_type);
    let te = fw2.tape.row(e_b, ids[0]).unwrap();
    let ty = fw2.tape.row(e_t, types[0]).unwrap();
    let x = fw2.tape.concat(&[te, ty]).unwrap();
    let h0 = fw2.tape.zeros(vec![mp.cfg.hidden]);
    let h1 = gru_step(&mut fw2, &mp.set, &mp.body_gru, x, h0).unwrap();
    assert_eq!(single, fw2.tape.values(h1));

    // length-3 equals the manual 3-fold composition
    let mut fw = Fwd::new();
    let enc = encode_body(&mut fw, &mp, &ids, &types).unwrap();
    assert_eq!(enc.hs.len(), 3);
    let mut fw2 = Fwd::new();
    let e_b = fw2.p(&mp.set, mp.e_body);
    let e_t = fw2.p(&mp.set, mp.e_type);
    let mut h = fw2.tape.zeros(vec![mp.cfg.hidden]);
    for i in 0..3 {
        let te = fw2.tape.row(e_b, ids[i]).unwrap();
        let ty = fw2.tape.row(e_t, types[i]).unwrap();
        let x = fw2.tape.concat(&[te, ty]).unwrap();
        h = gru_step(&mut fw2, &mp.set, &mp.body_gru, x, h).unwrap();
    }
    assert_eq!(fw.tape.values(enc.last), fw2.tape.values(h));
}

#[test]
fn encode_body_excludes_padding_and_rejects_empty() {
    let (mp, _, _) = tiny_model(4);
    let mut fw = Fwd::new();
    let padded = encode_body(&mut fw, &mp, &[5, 6, corpus::PAD], &[0, 1, 0]).unwrap();
    let mut fw2 = Fwd::new();
    let plain = encode_body(&mut fw2, &mp, &[5, 6], &[0, 1]).unwrap();
    assert_eq!(fw.tape.values(padded.last), fw2.tape.values(plain.last));
    assert_eq!(padded.hs.len(), 2);

    let mut fw3 = Fwd::new();
    assert!(matches!(
        encode_body(&mut fw3, &mp, &[corpus::PAD, corpus::PAD], &[0, 0]),
        Err(CoreError::Contract(_))
    ));
}

// ─── attention ───────────────────────────────────────────────────────────

fn states_from_rows(fw: &mut Fwd, rows: &[Vec<f64>]) -> EncoderStates {
    let hs: Vec<Var> = rows
        .iter()
        .map(|r| fw.tape.leaf(vec![r.len()], r.clone()).unwrap())
        .collect();
    let keys = fw.tape.stack_rows(&hs).unwrap();
    EncoderStates { last: *hs.last().unwrap(), hs, keys }
}

#[test]
fn attention_uniform_over_identical_keys_and_single_key() {
    let (mp, _, _) = tiny_model(5);
    let mut fw = Fwd::new();
    let w = fw.p(&mp.set, mp.w_bi);
    let row = vec![0.3, -0.1, 0.5, 0.2, 0.0, -0.7, 0.4, 0.9];
    let enc = states_from_rows(&mut fw, &[row.clone(), row.clone(), row.clone()]);
    let q = fw.tape.leaf(vec![8], vec![0.1; 8]).unwrap();
    let (ctx, weights) = attention(&mut fw, w, q, &enc).unwrap();
    for &v in fw.tape.values(weights) {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
    for (c, r) in fw.tape.values(ctx).iter().zip(&row) {
        assert!((c - r).abs() < 1e-12);
    }

    let enc1 = states_from_rows(&mut fw, &[row.clone()]);
    let (ctx, weights) = attention(&mut fw, w, q, &enc1).unwrap();
    assert_eq!(fw.tape.values(weights), &[1.0]);
    assert_eq!(fw.tape.values(ctx), row.as_slice());
}

#[test]
fn attention_matches_brute_force() {
    let (mp, _, _) = tiny_model(6);
    let mut fw = Fwd::new();
    let w_var = fw.p(&mp.set, mp.w_bi);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|r| (0..8).map(|j| ((r * 8 + j) as f64 * 0.37).sin() * 0.5).collect())
        .collect();
    let q_vals: Vec<f64> = (0..8).map(|j| (j as f64 * 0.73).cos() * 0.3).collect();
    let enc = states_from_rows(&mut fw, &rows);
    let q = fw.tape.leaf(vec![8], q_vals.clone()).unwrap();
    let (ctx, weights) = attention(&mut fw, w_var, q, &enc).unwrap();

    // brute force: wᵢ = softmax(q·W·kᵢ); ctx = Σ wᵢ kᵢ
    let w = &mp.set.get(mp.w_bi).values;
    let h = 8;
    let scores: Vec<f64> = rows
        .iter()
        .map(|k| {
            let mut s = 0.0;
            for a in 0..h {
                for b in 0..h {
                    s += q_vals[a] * w[a * h + b] * k[b];
                }
            }
            s
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let want_w: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut want_ctx = vec![0.0; h];
    for (wi, k) in want_w.iter().zip(&rows) {
        for j in 0..h {
            want_ctx[j] += wi * k[j];
        }
    }
    for (got, want) in fw.tape.values(weights).iter().zip(&want_w) {
        assert!((got - want).abs() < 1e-9);
    }
    for (got, want) in fw.tape.values(ctx).iter().zip(&want_ctx) {
        assert!((got - want).abs() < 1e-9);
    }
}

// ─── decode_name ─────────────────────────────────────────────────────────

#[test]
fn decode_name_zero_weights_is_uniform() {
    let (mut mp, _, _) = tiny_model(7);
    zero_params(&mut mp);
    let mut fw = Fwd::new();
    let body = encode_body(&mut fw, &mp, &[5, 6], &[0, 1]).unwrap();
    let dec = decode_name(&mut fw, &mp, &body, Some(&[BOS, 5, 6, EOS])).unwrap();
    let v = mp.sum_vocab_size as f64;
    for &dist in &dec.dist_vars {
        for &p in fw.tape.values(dist) {
            assert!((p - 1.0 / v).abs() < 1e-12);
        }
    }
}

#[test]
fn decode_name_is_causal_in_targets() {
    let (mp, _, _) = tiny_model(8);
    let targets_a = [BOS, 5, 6, 7, EOS];
    let targets_b = [BOS, 5, 6, 8, EOS]; // changed position 3

    let mut fa = Fwd::new();
    let body_a = encode_body(&mut fa, &mp, &[5, 6, 7], &[0, 2, 1]).unwrap();
    let dec_a = decode_name(&mut fa, &mp, &body_a, Some(&targets_a)).unwrap();

    let mut fb = Fwd::new();
    let body_b = encode_body(&mut fb, &mp, &[5, 6, 7], &[0, 2, 1]).unwrap();
    let dec_b = decode_name(&mut fb, &mp, &body_b, Some(&targets_b)).unwrap();

    // distributions predicting positions 1..=3 condition only on targets
    // before them, so the first three steps are identical
    for step in 0..3 {
        assert_eq!(
            fa.tape.values(dec_a.dist_vars[step]),
            fb.tape.values(dec_b.dist_vars[step]),
            "step {step} should not see the change at position 3"
        );
    }
    assert_ne!(
        fa.tape.values(dec_a.dist_vars[3]),
        fb.tape.values(dec_b.dist_vars[3]),
    );
}

// ─── encode_name / sharing ───────────────────────────────────────────────

#[test]
fn name_encoder_and_decoder_share_parameters() {
    let (mut mp, _, _) = tiny_model(9);
    assert_eq!(mp.name_gru.wz, mp.set.id_of("gru_name.wz").unwrap());

    let run = |mp: &ModelParams| -> (Vec<f64>, Vec<f64>) {
        let mut fw = Fwd::new();
        let body = encode_body(&mut fw, mp, &[5, 6], &[0, 1]).unwrap();
        let enc = encode_name(&mut fw, mp, &[5, 6]).unwrap();
        let dec = decode_name(&mut fw, mp, &body, Some(&[BOS, 5, EOS])).unwrap();
        (
            fw.tape.values(enc.last).to_vec(),
            fw.tape.values(dec.dist_vars[0]).to_vec(),
        )
    };
    let (enc_before, dec_before) = run(&mp);
    let id = mp.name_gru.wz;
    mp.set.get_mut(id).values[3] += 0.25;
    let (enc_after, dec_after) = run(&mp);
    assert_ne!(enc_before, enc_after, "encoder must see the perturbation");
    assert_ne!(dec_before, dec_after, "decoder must see the perturbation");
}

#[test]
fn encode_name_base_case_and_unrolling() {
    let (mp, _, _) = tiny_model(10);
    let mut fw = Fwd::new();
    let enc = encode_name(&mut fw, &mp, &[5]).unwrap();
    let mut fw2 = Fwd::new();
    let e_text = fw2.p(&mp.set, mp.e_text);
    let x = fw2.tape.row(e_text, 5).unwrap();
    let h0 = fw2.tape.zeros(vec![mp.cfg.hidden]);
    let h1 = gru_step(&mut fw2, &mp.set, &mp.name_gru, x, h0).unwrap();
    assert_eq!(fw.tape.values(enc.last), fw2.tape.values(h1));

    let mut fw = Fwd::new();
    let enc3 = encode_name(&mut fw, &mp, &[5, 6, 7]).unwrap();
    let mut fw2 = Fwd::new();
    let e_text = fw2.p(&mp.set, mp.e_text);
    let mut h = fw2.tape.zeros(vec![mp.cfg.hidden]);
    for id in [5, 6, 7] {
        let x = fw2.tape.row(e_text, id).unwrap();
        h = gru_step(&mut fw2, &mp.set, &mp.name_gru, x, h).unwrap();
    }
    assert_eq!(fw.tape.values(enc3.last), fw2.tape.values(h));

    let mut fw3 = Fwd::new();
    assert!(encode_name(&mut fw3, &mp, &[]).is_err());
}

// ─── score_name / fuse_names ─────────────────────────────────────────────

#[test]
fn score_name_zero_weights_is_half_and_bounded() {
    let (mut mp, _, _) = tiny_model(11);
    set_values(&mut mp, "scorer.wp", 0.0);
    let mut fw = Fwd::new();
    let body = encode_body(&mut fw, &mp, &[5, 6], &[0, 1]).unwrap();
    let name = encode_name(&mut fw, &mp, &[5]).unwrap();
    let s = score_name(&mut fw, &mp, &body, &name).unwrap();
    assert_eq!(fw.tape.scalar_value(s), 0.5);

    let (mp2, _, _) = tiny_model(12);
    let mut fw = Fwd::new();
    let body = encode_body(&mut fw, &mp2, &[5, 6, 7], &[0, 2, 1]).unwrap();
    let name = encode_name(&mut fw, &mp2, &[5, 7]).unwrap();
    let s = score_name(&mut fw, &mp2, &body, &name).unwrap();
    let v = fw.tape.scalar_value(s);
    assert!(v > 0.0 && v < 1.0);

    // matches the closed form σ(W_p·[h_b; h_n])
    let wp = &mp2.set.get(mp2.w_p).values;
    let joint: Vec<f64> = fw
        .tape
        .values(body.last)
        .iter()
        .chain(fw.tape.values(name.last))
        .copied()
        .collect();
    let lin: f64 = wp.iter().zip(&joint).map(|(w, x)| w * x).sum();
    let want = 1.0 / (1.0 + (-lin).exp());
    assert!((v - want).abs() < 1e-12);
}

#[test]
fn fuse_names_symmetry_saturation_and_brute_force() {
    let mut fw = Fwd::new();
    let c_n = fw.tape.leaf(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let c_gn = fw.tape.leaf(vec![4], vec![-1.0, 0.0, 1.0, 2.0]).unwrap();

    // equal scores → mean of the contexts
    let s1 = fw.tape.scalar(0.7);
    let s2 = fw.tape.scalar(0.7);
    let (fused, weights) = fuse_names(&mut fw, c_n, c_gn, s1, s2).unwrap();
    assert_eq!(fw.tape.values(weights), &[0.5, 0.5]);
    assert_eq!(fw.tape.values(fused), &[0.0, 1.0, 2.0, 3.0]);

    // saturation: wⁿ = wᵍⁿ + 20 → output ≈ cⁿ
    let s1 = fw.tape.scalar(20.3);
    let s2 = fw.tape.scalar(0.3);
    let (fused, weights) = fuse_names(&mut fw, c_n, c_gn, s1, s2).unwrap();
    let w = fw.tape.values(weights).to_vec();
    assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
    for (got, want) in fw.tape.values(fused).iter().zip([1.0, 2.0, 3.0, 4.0]) {
        assert!((got - want).abs() < 1e-6);
    }

    // random instance equals brute force
    let s1v = 0.62;
    let s2v = 0.31;
    let s1 = fw.tape.scalar(s1v);
    let s2 = fw.tape.scalar(s2v);
    let (fused, _) = fuse_names(&mut fw, c_n, c_gn, s1, s2).unwrap();
    let e1 = (s1v - s1v.max(s2v)).exp();
    let e2 = (s2v - s1v.max(s2v)).exp();
    let w1 = e1 / (e1 + e2);
    let w2 = e2 / (e1 + e2);
    let want: Vec<f64> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .zip([-1.0, 0.0, 1.0, 2.0])
        .map(|(a, b)| w1 * a + w2 * b)
        .collect();
    for (got, want) in fw.tape.values(fused).iter().zip(&want) {
        assert!((got - want).abs() < 1e-12);
    }
}

// ─── decode_summary ──────────────────────────────────────────────────────

fn full_forward(
    mp: &ModelParams,
    body_vocab: &Vocab,
    sum_vocab: &Vocab,
    teacher: bool,
) -> (Fwd, SampleForward) {
    let prep = prep_for(
        mp,
        body_vocab,
        sum_vocab,
        &[("Assign", 0), ("SimpleName", 2), ("alpha", 6), ("Assign", 1)],
        &["alpha", "beta"],
        &["make", "thing", "alpha"],
    );
    let gen = greedy_name_ids(mp, &prep).unwrap();
    let mut fw = Fwd::new();
    let out = forward_sample(
        &mut fw,
        mp,
        &prep,
        Ablation::Full,
        Some(&gen),
        sum_vocab,
        teacher,
    )
    .unwrap();
    (fw, out)
}

#[test]
fn summary_distributions_are_normalized_and_fusion_sums_to_one() {
    let (mp, body_vocab, sum_vocab) = tiny_model(13);
    let (fw, out) = full_forward(&mp, &body_vocab, &sum_vocab, true);
    assert!(!out.summary.dist_vars.is_empty());
    for &d in &out.summary.dist_vars {
        let vals = fw.tape.values(d);
        let total: f64 = vals.iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "sum {total}");
        assert!(vals.iter().all(|&p| p >= 0.0));
    }
    let (w_n, w_gn) = out.fusion_weights.unwrap();
    assert!((w_n + w_gn - 1.0).abs() < 1e-12);
}

#[test]
fn gate_saturation_reduces_to_generation_distribution() {
    let (mut mp, body_vocab, sum_vocab) = tiny_model(14);
    set_values(&mut mp, "gate.wf", 0.0);
    set_values(&mut mp, "gate.bf", 20.0);
    let (fw, out) = full_forward(&mp, &body_vocab, &sum_vocab, true);
    // γ≈1: mass beyond the vocabulary (copy-only region) vanishes and the
    // in-vocab slice is exactly p_cos
    for (&d, gamma) in out.summary.dist_vars.iter().zip(&out.summary.gamma) {
        assert!(*gamma > 1.0 - 1e-8);
        let vals = fw.tape.values(d);
        let inside: f64 = vals[..mp.sum_vocab_size].iter().sum();
        assert!((inside - 1.0).abs() < 1e-6);
    }
}

#[test]
fn copy_only_gate_with_single_source_token_is_delta() {
    let (mut mp, body_vocab, sum_vocab) = tiny_model(15);
    set_values(&mut mp, "gate.wf", 0.0);
    set_values(&mut mp, "gate.bf", -30.0);
    // body, human name, and generated name all reduce to the same token
    let prep = prep_for(
        &mp,
        &body_vocab,
        &sum_vocab,
        &[("alpha", 6)],
        &["alpha"],
        &["alpha"],
    );
    let alpha_id = sum_vocab.id("alpha");
    let mut fw = Fwd::new();
    let out = forward_sample(
        &mut fw,
        &mp,
        &prep,
        Ablation::Full,
        Some(&[alpha_id]),
        &sum_vocab,
        true,
    )
    .unwrap();
    for &d in &out.summary.dist_vars {
        let vals = fw.tape.values(d);
        assert!((vals[alpha_id] - 1.0).abs() < 1e-9, "p(alpha) = {}", vals[alpha_id]);
    }
}

#[test]
fn summary_mixture_matches_brute_force() {
    let (mp, body_vocab, sum_vocab) = tiny_model(16);
    let (fw, out) = full_forward(&mp, &body_vocab, &sum_vocab, true);
    let (w_n, w_gn) = out.fusion_weights.unwrap();
    let ext = out.copy.ext_size();
    let v = mp.sum_vocab_size;

    // rebuild each step's final distribution from its parts
    for (step, &d) in out.summary.dist_vars.iter().enumerate() {
        let vals = fw.tape.values(d);
        let gamma = out.summary.gamma[step];
        let attn = &out.summary.step_attention[step];

        // p_cos is recoverable from the in-vocab region minus copy mass
        let mut copy = vec![0.0; ext];
        for (i, &id) in out.copy.body_ids.iter().enumerate() {
            copy[id] += attn.body[i];
        }
        for (i, &id) in out.copy.name_ids.iter().enumerate() {
            copy[id] += attn.name[i];
        }
        for (i, &id) in out.copy.gen_ids.iter().enumerate() {
            copy[id] += attn.gen[i];
        }
        // outside the vocabulary the mixture is purely copy mass
        for j in v..ext {
            let want = (1.0 - gamma) / 3.0 * copy[j];
            assert!((vals[j] - want).abs() < 1e-9);
        }
        let total: f64 = vals.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        // γ·Σp_cos + (1−γ)/3·Σcopies = γ + (1−γ) — the mixture is closed
        let copy_total: f64 = copy.iter().sum();
        assert!((copy_total - 3.0).abs() < 1e-6);
    }
    let _ = (w_n, w_gn);
}

#[test]
fn greedy_summary_is_deterministic_and_bounded() {
    let (mp, body_vocab, sum_vocab) = tiny_model(17);
    let (_, a) = full_forward(&mp, &body_vocab, &sum_vocab, false);
    let (_, b) = full_forward(&mp, &body_vocab, &sum_vocab, false);
    assert_eq!(a.summary.token_ids, b.summary.token_ids);
    assert!(a.summary.token_ids.len() <= mp.cfg.max_summary_len);
}

#[test]
fn two_pass_requires_generated_name() {
    let (mp, body_vocab, sum_vocab) = tiny_model(18);
    let prep = prep_for(
        &mp,
        &body_vocab,
        &sum_vocab,
        &[("alpha", 6)],
        &["alpha"],
        &["alpha"],
    );
    let mut fw = Fwd::new();
    let err = forward_sample(&mut fw, &mp, &prep, Ablation::Full, None, &sum_vocab, true);
    assert!(matches!(err, Err(CoreError::Contract(_))));
}

#[test]
fn ablation_parsing() {
    assert_eq!("full".parse::<Ablation>().unwrap(), Ablation::Full);
    assert_eq!("no_mtl".parse::<Ablation>().unwrap(), Ablation::NoMtl);
    assert_eq!("no_two_pass".parse::<Ablation>().unwrap(), Ablation::NoTwoPass);
    assert_eq!("no_mnip".parse::<Ablation>().unwrap(), Ablation::NoMnip);
    assert!("nope".parse::<Ablation>().is_err());
}

#[test]
fn checkpoint_roundtrip_of_params_preserves_forward() {
    let (mp, body_vocab, sum_vocab) = tiny_model(19);
    let rebuilt = ModelParams::from_set(
        mp.set.clone(),
        mp.cfg.clone(),
        body_vocab.len(),
        sum_vocab.len(),
    )
    .unwrap();
    let (_, a) = full_forward(&mp, &body_vocab, &sum_vocab, false);
    let (_, b) = full_forward(&rebuilt, &body_vocab, &sum_vocab, false);
    assert_eq!(a.summary.token_ids, b.summary.token_ids);
}
