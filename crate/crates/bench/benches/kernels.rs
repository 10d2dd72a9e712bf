use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mder::crf::{log_partition, viterbi};
use mder::miner::betweenness;
use mder::{CrfParams, Lexicon, MderConfig, MethodGraph, Tagger, Tensor, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = CrfParams::new_constrained();
    let mut group = c.benchmark_group("crf");
    for len in [50, 200] {
        let em = Tensor::from_fn(&[len, 5], |_| rng.gen_range(-2.0..2.0));
        group.bench_with_input(BenchmarkId::new("log_partition", len), &em, |b, em| {
            b.iter(|| log_partition(em, &params).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("viterbi", len), &em, |b, em| {
            b.iter(|| viterbi(em, &params).unwrap())
        });
    }
    group.finish();
}

fn graph(n: usize, seed: u64) -> MethodGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MethodGraph::new(2020);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.1) {
                g.add_edge(&format!("m{i}"), &format!("m{j}"), rng.gen_range(1..5));
            }
        }
    }
    g
}

fn centrality(c: &mut Criterion) {
    let mut group = c.benchmark_group("betweenness");
    for n in [50, 200] {
        let g = graph(n, n as u64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| b.iter(|| betweenness(g)));
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let text = "We evaluate LSTM and SVM on MNIST and report accuracy";
    let vocab = Vocabulary::from_chars(text.chars());
    let lexicon = Lexicon::new(vec!["LSTM", "SVM"], vec!["MNIST"], vec!["accuracy"]).unwrap();
    let chars: Vec<char> = text.chars().collect();
    let batch: Vec<&[char]> = vec![&chars; 8];
    let mut group = c.benchmark_group("predict");
    group.sample_size(10);
    for (name, config) in [("debug_small", MderConfig::debug_small()), ("full", MderConfig::full())] {
        let tagger = Tagger::new(config, vocab.clone(), lexicon.clone(), 0).unwrap();
        group.bench_function(name, |b| b.iter(|| tagger.predict(&batch).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, crf, centrality, forward);
criterion_main!(benches);
