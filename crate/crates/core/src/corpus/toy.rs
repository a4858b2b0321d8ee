//! Built-in demonstration corpus.
//!
//! Generates small methods in the toy language with names, summaries, and
//! a spread of golden informativeness scores (full, partial, and zero
//! name/summary overlap), so training, evaluation, and the masked-name
//! experiment all have signal at desk scale.

use super::RawMethod;
use crate::rng::SeedSplitter;
use rand::seq::SliceRandom;
use rand::Rng;

const VERBS: [&str; 16] = [
    "load", "save", "open", "close", "read", "write", "parse", "format", "merge", "split",
    "push", "reset", "update", "clear", "copy", "count",
];

const NOUNS: [&str; 16] = [
    "index", "cache", "file", "buffer", "queue", "stack", "table", "config", "token", "stream",
    "record", "field", "node", "graph", "list", "state",
];

const SUFFIXES: [&str; 8] = [
    "from disk",
    "into memory",
    "for the session",
    "of the user",
    "in the pool",
    "at startup",
    "before exit",
    "per request",
];

const HELPERS: [&str; 8] = [
    "fetch", "store", "check", "emit", "wrap", "scan", "bind", "free",
];

/// Deterministically generates `n` toy methods. Roughly 5/8 have names
/// fully covered by their summary, 2/8 half covered, 1/8 uncovered.
pub fn generate(n: usize, seed: u64) -> Vec<RawMethod> {
    let mut rng = SeedSplitter::new(seed).stream("toygen");
    let mut combos: Vec<(usize, usize)> = (0..VERBS.len())
        .flat_map(|v| (0..NOUNS.len()).map(move |o| (v, o)))
        .collect();
    combos.shuffle(&mut rng);

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (vi, ni) = combos[i % combos.len()];
        let verb = VERBS[vi];
        let noun = NOUNS[ni];
        let name = format!("{verb}_{noun}");
        let suffix = SUFFIXES[rng.gen_range(0..SUFFIXES.len())];
        let h1 = HELPERS[rng.gen_range(0..HELPERS.len())];
        let h2 = HELPERS[rng.gen_range(0..HELPERS.len())];
        let param = NOUNS[(ni + 1) % NOUNS.len()];

        let source = match i % 3 {
            0 => format!(
                "def {name}({param}) {{ {noun} = {h1}({param}); {h2}({noun}) }}"
            ),
            1 => format!(
                "def {name}({param}) {{ {noun} = {h1}({param}, 1); {noun} = {h2}({noun}) }}"
            ),
            _ => format!(
                "def {name}() {{ {noun} = {h1}(0); {h2}({noun}, {noun}) }}"
            ),
        };

        let summary = match i % 8 {
            0..=4 => format!("{verb} the {noun} {suffix}"),
            5 | 6 => format!("{verb} the data {suffix}"),
            _ => format!("perform routine maintenance {suffix}"),
        };

        out.push(RawMethod {
            id: format!("toy-{i:04}"),
            ast: Some(crate::ast::parse_toy(&source).expect("generated source parses")),
            body_tokens: None,
            body_types: None,
            name,
            summary,
        });
    }
    out
}
