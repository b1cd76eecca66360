//! Sequential vs parallel execution of the three data-parallel stages.
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use procstate::abstraction::Lexicon;
use procstate::corpus::{load_procedures, CorpusFormat, LabeledProcedure, StateGrid};
use procstate::gat_ref::{layer_forward_with, random};
use procstate::metrics::{evaluate, Tier};
use procstate::par::Execution;
use procstate::parse_model::LogicalFormGraph;
use procstate::parse_model::{load_trips_dir, ParseIndex};
use procstate::pipeline::Predictor;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// The fixture corpus repeated `copies` times under fresh ids.
fn corpus(copies: usize) -> (Vec<LabeledProcedure>, ParseIndex<LogicalFormGraph>) {
    let base = load_procedures(&fixtures().join("corpus.jsonl"), CorpusFormat::Json).unwrap();
    let parses = load_trips_dir(
        &fixtures().join("parses"),
        base.iter().map(|lp| lp.procedure.id.as_str()),
    )
    .unwrap();
    let mut out = Vec::new();
    let mut index = ParseIndex::new();
    for k in 0..copies {
        for lp in &base {
            let mut lp = lp.clone();
            let id = format!("{}-{k}", lp.procedure.id);
            index.insert(id.clone(), parses[&lp.procedure.id].clone());
            lp.procedure.id = id.clone();
            lp.gold.procedure_id = id;
            out.push(lp);
        }
    }
    (out, index)
}

fn bench_predict(c: &mut Criterion) {
    let (corpus, parses) = corpus(200);
    let inputs: Vec<_> = corpus
        .iter()
        .map(|lp| (&lp.procedure, parses[&lp.procedure.id].as_slice()))
        .collect();
    let predictor = Predictor::default();
    let mut group = c.benchmark_group("predict_400_procedures");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| predictor.predict_all(black_box(&inputs), exec).unwrap())
        });
    }
    group.finish();
}

fn bench_layer(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("attention_layer");
    for n in [100, 1000] {
        let p = random::params(&mut rng, 8, 8, 4);
        let g = random::graph(&mut rng, n, 8, 4, 20.0 / n as f64);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &g, |b, g| {
                b.iter(|| layer_forward_with(black_box(g), &p, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let (corpus, parses) = corpus(200);
    let gold: Vec<StateGrid> = corpus.iter().map(|lp| lp.gold.clone()).collect();
    let lex = Lexicon::builtin();
    let mut group = c.benchmark_group("evaluate_all_tiers");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| evaluate(black_box(&gold), &corpus, Some(&parses), &lex, Tier::All, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_predict, bench_layer, bench_metrics);
criterion_main!(benches);
