use std::collections::{BTreeMap, BTreeSet};

use super::MentionRecord;
use crate::corpus::EntityType;

/// Undirected weighted method graph for one year. Edge keys are stored with
/// the lexicographically smaller endpoint first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MethodGraph {
    pub year: i32,
    nodes: BTreeSet<String>,
    edges: BTreeMap<(String, String), u32>,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl MethodGraph {
    pub fn new(year: i32) -> Self {
        Self {
            year,
            ..Self::default()
        }
    }

    pub fn add_node(&mut self, name: &str) {
        self.nodes.insert(name.to_string());
    }

    /// Adds `weight` to the edge between `a` and `b`, creating both nodes.
    /// Self-loops and zero weights are ignored.
    pub fn add_edge(&mut self, a: &str, b: &str, weight: u32) {
        if a == b || weight == 0 {
            return;
        }
        self.add_node(a);
        self.add_node(b);
        *self.edges.entry(key(a, b)).or_insert(0) += weight;
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<u32> {
        self.edges.get(&key(a, b)).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains(name)
    }

    /// Edges as `(smaller, larger, weight)` in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.edges.iter().map(|((a, b), &w)| (a.as_str(), b.as_str(), w))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Index of every node in sorted order, and the neighbor lists
    /// `(index, weight)` of each.
    pub fn adjacency(&self) -> (Vec<&str>, Vec<Vec<(usize, u32)>>) {
        let names: Vec<&str> = self.nodes().collect();
        let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); names.len()];
        for (a, b, w) in self.edges() {
            let (i, j) = (index[a], index[b]);
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        (names, adj)
    }
}

/// One graph per year over method mentions. Each paper contributes its set of
/// distinct canonical methods; every pair in that set gains weight 1.
pub fn build_graphs(mentions: &[MentionRecord]) -> BTreeMap<i32, MethodGraph> {
    let mut papers: BTreeMap<(i32, &str), BTreeSet<&str>> = BTreeMap::new();
    for m in mentions.iter().filter(|m| m.kind == EntityType::Method) {
        papers
            .entry((m.year, m.doc_id.as_str()))
            .or_default()
            .insert(m.canonical.as_str());
    }
    let mut graphs: BTreeMap<i32, MethodGraph> = BTreeMap::new();
    for ((year, _), methods) in papers {
        let g = graphs.entry(year).or_insert_with(|| MethodGraph::new(year));
        let methods: Vec<&str> = methods.into_iter().collect();
        for (i, a) in methods.iter().enumerate() {
            g.add_node(a);
            for b in &methods[i + 1..] {
                g.add_edge(a, b, 1);
            }
        }
    }
    graphs
}

/// Keeps edges with weight strictly greater than `min_exclusive`. Nodes left
/// without edges are dropped unless `keep_isolated`.
pub fn filter_edges(graph: &MethodGraph, min_exclusive: u32, keep_isolated: bool) -> MethodGraph {
    let mut out = MethodGraph::new(graph.year);
    if keep_isolated {
        out.nodes = graph.nodes.clone();
    }
    for (a, b, w) in graph.edges() {
        if w > min_exclusive {
            out.add_edge(a, b, w);
        }
    }
    out
}
