mod common;

use std::collections::BTreeMap;

use common::oracle::{brute_betweenness, random_graph};
use mder::corpus::Document;
use mder::miner::{
    betweenness, betweenness_with, build_graphs, dot, edge_csv, filter_edges, graphml, parse_dot,
    predict_corpus, top_k, yearly_rankings, AliasTable, BetweennessOptions,
};
use mder::training::{train_with, TrainConfig};
use mder::{EntityType, MderConfig, MentionRecord, MethodGraph};
use proptest::prelude::*;

fn close(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>, tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|(k, v)| (v - b[k]).abs() <= tol * v.abs().max(1.0))
}

fn mention(doc: &str, year: i32, name: &str) -> MentionRecord {
    MentionRecord {
        doc_id: doc.into(),
        year,
        kind: EntityType::Method,
        surface: name.into(),
        canonical: name.into(),
        sentence: 0,
        start: 0,
        end: name.chars().count(),
    }
}

#[test]
fn brandes_matches_enumeration_on_random_graphs() {
    let mut rng = common::rng(21);
    for i in 0..60 {
        let g = random_graph(&mut rng, 3 + i % 6, 0.45, 4);
        for weighted in [false, true] {
            let fast = betweenness_with(&g, BetweennessOptions { weighted, normalized: false });
            let slow = brute_betweenness(&g, weighted);
            assert!(close(&fast, &slow, 1e-9), "graph {i} weighted={weighted}: {fast:?} vs {slow:?}");
        }
    }
}

#[test]
fn path_and_star() {
    let mut path = MethodGraph::new(2020);
    path.add_edge("a", "b", 1);
    path.add_edge("b", "c", 1);
    assert_eq!(betweenness(&path)["b"], 1.0);
    let mut star = MethodGraph::new(2020);
    for leaf in ["l1", "l2", "l3", "l4"] {
        star.add_edge("hub", leaf, 3);
    }
    let b = betweenness(&star);
    assert_eq!(b["hub"], 6.0);
    assert_eq!(b["l1"], 0.0);
    let n = betweenness_with(&star, BetweennessOptions { weighted: false, normalized: true });
    assert!((n["hub"] - 1.0).abs() < 1e-12);
}

#[test]
fn three_paper_example_with_strict_filter() {
    let mentions: Vec<MentionRecord> = [
        ("d1", vec!["svm", "knn"]),
        ("d2", vec!["svm", "knn", "lstm"]),
        ("d3", vec!["svm"]),
    ]
    .iter()
    .flat_map(|(d, names)| names.iter().map(move |n| mention(d, 2019, n)))
    .collect();
    let graphs = build_graphs(&mentions);
    let g = &graphs[&2019];
    assert_eq!(g.weight("svm", "knn"), Some(2));
    assert_eq!(g.weight("svm", "lstm"), Some(1));
    assert_eq!(g.weight("knn", "lstm"), Some(1));
    let kept = filter_edges(g, 1, false);
    assert_eq!(kept.edges().collect::<Vec<_>>(), vec![("knn", "svm", 2)]);
    assert_eq!(filter_edges(g, 2, false).edge_count(), 0);
    assert_eq!(filter_edges(g, 2, true).node_count(), 3);
}

#[test]
fn exports_are_deterministic_and_parse_back() {
    let mut rng = common::rng(4);
    let g = random_graph(&mut rng, 7, 0.5, 5);
    assert_eq!(dot(&g), dot(&g.clone()));
    assert_eq!(parse_dot(&dot(&g)).unwrap(), g);
    assert_eq!(graphml(&g), graphml(&g.clone()));
    let csv = edge_csv([&g]);
    assert_eq!(csv.lines().count(), g.edge_count() + 1);
}

#[test]
fn rankings_follow_scores_then_names() {
    let mut graphs = BTreeMap::new();
    let mut g = MethodGraph::new(2018);
    g.add_edge("b", "hub", 1);
    g.add_edge("a", "hub", 1);
    g.add_edge("c", "hub", 1);
    graphs.insert(2018, g);
    let r = yearly_rankings(&graphs, 2, BetweennessOptions::default());
    assert_eq!(r[0].entries, vec![("hub".to_string(), 3.0), ("a".to_string(), 0.0)]);
    let scores: BTreeMap<String, f64> = [("x".into(), 1.0), ("y".into(), 1.0)].into();
    assert_eq!(top_k(&scores, 5)[0].0, "x");
}

#[test]
fn trained_tagger_feeds_the_graph() {
    let mut rng = common::rng(2);
    let methods: Vec<String> = ["SVM", "KNN", "LSTM", "CNN"].map(String::from).to_vec();
    let datasets = vec!["MNIST".to_string()];
    let templates = ["We compare {M} and {M}", "{M} beats {M} here", "we apply {M} and {M}"];
    let train: Vec<_> = (0..48)
        .map(|i| common::render(&mut rng, templates[i % 3], &methods, &datasets))
        .collect();
    let config = TrainConfig {
        max_epochs: 80,
        patience: 80,
        target_f1: Some(1.0),
        seed: 1,
        ..TrainConfig::default()
    };
    let (tagger, _) = train_with(
        &MderConfig::debug_small(),
        &config,
        &train,
        &train,
        &common::small_lexicon(),
        |_| {},
    )
    .unwrap();
    let docs = vec![
        Document {
            id: "p1".into(),
            year: 2020,
            venue: "x".into(),
            sentences: vec!["We compare SVM and KNN".into()],
        },
        Document {
            id: "p2".into(),
            year: 2020,
            venue: "x".into(),
            sentences: vec!["We compare SVM and LSTM".into()],
        },
    ];
    let mut aliases = AliasTable::new();
    aliases.insert("knn", "k-nn").unwrap();
    let mentions = predict_corpus(&tagger, &docs, Some(&aliases)).unwrap();
    let names: Vec<(&str, &str)> = mentions
        .iter()
        .map(|m| (m.doc_id.as_str(), m.canonical.as_str()))
        .collect();
    assert_eq!(names, [("p1", "svm"), ("p1", "k-nn"), ("p2", "svm"), ("p2", "lstm")]);
    assert!(mentions.iter().all(|m| m.kind == EntityType::Method));
    let g = &build_graphs(&mentions)[&2020];
    assert_eq!(g.weight("svm", "k-nn"), Some(1));
    assert_eq!(g.weight("k-nn", "lstm"), None);
    assert_eq!(betweenness(g)["svm"], 1.0);
}

fn relabel(g: &MethodGraph, perm: &[usize]) -> MethodGraph {
    let name = |s: &str| format!("m{}", perm[s[1..].parse::<usize>().unwrap()]);
    let mut out = MethodGraph::new(g.year);
    for n in g.nodes() {
        out.add_node(&name(n));
    }
    for (a, b, w) in g.edges() {
        out.add_edge(&name(a), &name(b), w);
    }
    out
}

proptest! {
    #[test]
    fn betweenness_is_permutation_invariant(seed in any::<u64>(), n in 2usize..9) {
        use rand::seq::SliceRandom;
        let mut rng = common::rng(seed);
        let g = random_graph(&mut rng, n, 0.5, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let h = relabel(&g, &perm);
        for weighted in [false, true] {
            let opts = BetweennessOptions { weighted, normalized: false };
            let a = betweenness_with(&g, opts);
            let b = betweenness_with(&h, opts);
            for (k, v) in &a {
                let moved = format!("m{}", perm[k[1..].parse::<usize>().unwrap()]);
                prop_assert!((v - b[&moved]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn brandes_matches_enumeration(seed in any::<u64>(), n in 1usize..8, p in 0.1f64..0.9) {
        let mut rng = common::rng(seed);
        let g = random_graph(&mut rng, n, p, 5);
        for weighted in [false, true] {
            let fast = betweenness_with(&g, BetweennessOptions { weighted, normalized: false });
            prop_assert!(close(&fast, &brute_betweenness(&g, weighted), 1e-9));
        }
    }
}
