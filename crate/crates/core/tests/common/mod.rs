//! Synthetic labeled corpora shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeSet;

use mder::{EntitySpan, EntityType, LabeledSentence, Lexicon};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Slot markers: `M` method, `D` dataset, `X` either (context does not say).
const CONTEXT_TEMPLATES: &[&str] = &[
    "we train {M} on {D} and report accuracy",
    "{M} outperforms {M} on the {D} benchmark",
    "results on {D} show that {M} converges faster",
    "the {D} dataset is used to evaluate {M}",
    "we compare {M} with {M}",
    "images from {D} are classified by {M}",
    "our model improves on {M} by two points",
    "we collect {D} and {D} for testing",
];

const AMBIGUOUS_TEMPLATES: &[&str] = &[
    "{X} is used in our experiments",
    "we also consider {X} in this work",
    "details on {X} are in the appendix",
];

pub const METHODS: &[&str] = &[
    "SVM", "KNN", "LSTM", "CRF", "BERT", "random forest", "GBDT", "naive Bayes", "CNN",
    "word2vec", "HMM", "LDA",
];

pub const DATASETS: &[&str] = &[
    "MNIST", "CIFAR-10", "ImageNet", "SQuAD", "CoNLL-2003", "Penn Treebank", "WordNet",
    "COCO", "IMDB",
];

/// Fills a template, drawing names uniformly from the pools.
pub fn render(
    rng: &mut ChaCha8Rng,
    template: &str,
    methods: &[String],
    datasets: &[String],
) -> LabeledSentence {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let slot = &rest[open + 1..open + 2];
        let kind = match slot {
            "M" => EntityType::Method,
            "D" => EntityType::Dataset,
            _ if rng.gen_bool(0.5) => EntityType::Method,
            _ => EntityType::Dataset,
        };
        let pool = match kind {
            EntityType::Method => methods,
            EntityType::Dataset => datasets,
        };
        let name = pool.choose(rng).expect("non-empty pool");
        let start = text.chars().count();
        text.push_str(name);
        spans.push(EntitySpan::new(kind, start, text.chars().count()));
        rest = &rest[open + 3..];
    }
    text.push_str(rest);
    LabeledSentence::from_spans(&text, &spans).expect("template renders valid spans")
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `n` sentences over the fixed name pools, context templates only.
pub fn small_corpus(n: usize, seed: u64) -> Vec<LabeledSentence> {
    let mut r = rng(seed);
    let (m, d) = (owned(METHODS), owned(DATASETS));
    (0..n)
        .map(|_| {
            let t = *CONTEXT_TEMPLATES.choose(&mut r).unwrap();
            render(&mut r, t, &m, &d)
        })
        .collect()
}

pub fn small_lexicon() -> Lexicon {
    Lexicon::new(
        METHODS[..6].to_vec(),
        DATASETS[..5].to_vec(),
        vec!["accuracy", "benchmark"],
    )
    .unwrap()
}

/// Type-neutral acronym-like names: the characters carry no hint of the type.
fn fresh_names(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    const LETTERS: &[u8] = b"ABCDEFGHIKLMNPRSTVWXZ";
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(3..=5);
        let mut s: String = (0..len)
            .map(|_| LETTERS[rng.gen_range(0..LETTERS.len())] as char)
            .collect();
        if rng.gen_bool(0.3) {
            s.push('-');
            s.push(char::from(b'0' + rng.gen_range(1..10u8)));
        }
        if taken.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

pub struct AblationData {
    pub train: Vec<LabeledSentence>,
    pub cv: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub lexicon: Lexicon,
}

/// Template corpus where CV and test sentences use names never seen in training,
/// one sentence in three comes from a template whose context does not reveal
/// the entity type, and the whitelists cover half of all planted names.
pub fn ablation_corpus(n_train: usize, n_cv: usize, n_test: usize, seed: u64) -> AblationData {
    let mut r = rng(seed);
    let mut taken = BTreeSet::new();
    let per_type = 40;
    let train_m = fresh_names(&mut r, per_type, &mut taken);
    let train_d = fresh_names(&mut r, per_type, &mut taken);
    let cv_m = fresh_names(&mut r, per_type, &mut taken);
    let cv_d = fresh_names(&mut r, per_type, &mut taken);
    let test_m = fresh_names(&mut r, per_type, &mut taken);
    let test_d = fresh_names(&mut r, per_type, &mut taken);
    let sentences = |r: &mut ChaCha8Rng, n: usize, m: &[String], d: &[String]| {
        (0..n)
            .map(|_| {
                let t = if r.gen_bool(1.0 / 3.0) {
                    AMBIGUOUS_TEMPLATES.choose(r).unwrap()
                } else {
                    CONTEXT_TEMPLATES.choose(r).unwrap()
                };
                render(r, t, m, d)
            })
            .collect::<Vec<_>>()
    };
    let train = sentences(&mut r, n_train, &train_m, &train_d);
    let cv = sentences(&mut r, n_cv, &cv_m, &cv_d);
    let test = sentences(&mut r, n_test, &test_m, &test_d);
    let half = |v: &[String]| v.iter().step_by(2).cloned().collect::<Vec<_>>();
    let methods: Vec<String> = [&train_m, &cv_m, &test_m].iter().flat_map(|v| half(v)).collect();
    let datasets: Vec<String> = [&train_d, &cv_d, &test_d].iter().flat_map(|v| half(v)).collect();
    let lexicon = Lexicon::new(methods, datasets, vec!["results".to_string()]).unwrap();
    AblationData {
        train,
        cv,
        test,
        lexicon,
    }
}
