//! Shared fixtures for the benchmark targets.

use dmacos_core::corpus::{self, toy, Sample, Vocab};
use dmacos_core::model::{ModelConfig, ModelParams, PreparedSample};

pub struct Fixture {
    pub samples: Vec<Sample>,
    pub body_vocab: Vocab,
    pub sum_vocab: Vocab,
    pub model: ModelParams,
    pub preps: Vec<PreparedSample>,
}

pub fn fixture(n: usize, hidden: usize) -> Fixture {
    let raws = toy::generate(n, 1234);
    let samples: Vec<Sample> = raws
        .iter()
        .map(|r| corpus::build_sample(r).expect("toy corpus builds"))
        .collect();
    let body_vocab = Vocab::build(
        samples
            .iter()
            .flat_map(|s| s.body_tokens.iter().map(String::as_str)),
        2000,
    )
    .unwrap();
    let sum_vocab = Vocab::build(
        samples.iter().flat_map(|s| {
            s.summary_tokens
                .iter()
                .chain(s.name_tokens.iter())
                .map(String::as_str)
        }),
        2000,
    )
    .unwrap();
    let cfg = ModelConfig {
        hidden,
        body_embed: 32,
        type_embed: 8,
        text_embed: 32,
        max_name_len: 8,
        max_body_len: 100,
        max_summary_len: 13,
    };
    let model = ModelParams::init(&cfg, body_vocab.len(), sum_vocab.len(), 5).unwrap();
    let preps = samples
        .iter()
        .map(|s| {
            dmacos_core::model::prepare_sample(s, &body_vocab, &sum_vocab, &cfg, false, false)
                .unwrap()
        })
        .collect();
    Fixture {
        samples,
        body_vocab,
        sum_vocab,
        model,
        preps,
    }
}
