use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dmacos_bench::fixture;
use dmacos_core::ast::{parse_toy, to_asbt};
use dmacos_core::autodiff::Fwd;
use dmacos_core::eval::bleu4;
use dmacos_core::model::{self, Ablation};
use dmacos_core::training::{joint_loss, TrainConfig};

fn bench_autodiff(c: &mut Criterion) {
    let fx = fixture(8, 64);
    let prep = &fx.preps[0];

    c.bench_function("gru_encode_body", |b| {
        b.iter(|| {
            let mut fw = Fwd::new();
            let enc = model::encode_body(&mut fw, &fx.model, &prep.body_ids, &prep.body_type_ids)
                .unwrap();
            black_box(fw.tape.values(enc.last)[0]);
        })
    });

    c.bench_function("two_pass_forward", |b| {
        let gen = model::greedy_name_ids(&fx.model, prep).unwrap();
        b.iter(|| {
            let mut fw = Fwd::new();
            let out = model::forward_sample(
                &mut fw,
                &fx.model,
                prep,
                Ablation::Full,
                Some(&gen),
                &fx.sum_vocab,
                true,
            )
            .unwrap();
            black_box(out.summary.dist_vars.len());
        })
    });

    c.bench_function("joint_loss_forward_backward", |b| {
        let cfg = TrainConfig::default();
        let batch: Vec<_> = fx.preps[..4].to_vec();
        b.iter(|| {
            let mut set = fx.model.set.clone();
            let mut fw = Fwd::new();
            let (loss, _) =
                joint_loss(&mut fw, &fx.model, &batch, &cfg, &fx.sum_vocab, None).unwrap();
            fw.backprop(&mut set, loss).unwrap();
            black_box(fw.tape.scalar_value(loss));
        })
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let source = "def load_index(path) { index = read(path); table = merge(index, 1); check(table, index) }";
    c.bench_function("parse_and_flatten", |b| {
        b.iter(|| {
            let tree = parse_toy(black_box(source)).unwrap();
            black_box(to_asbt(&tree).tokens.len());
        })
    });

    let fx = fixture(64, 32);
    let refs: Vec<Vec<String>> = fx.samples.iter().map(|s| s.summary_tokens.clone()).collect();
    let mut cands = refs.clone();
    for cand in cands.iter_mut() {
        cand.pop();
    }
    c.bench_function("bleu4_corpus_64", |b| {
        b.iter(|| black_box(bleu4(&refs, &cands).unwrap()))
    });
}

criterion_group!(benches, bench_autodiff, bench_pipeline);
criterion_main!(benches);
