//! Exhaustive reference implementations used to check the fast algorithms.

use std::collections::BTreeMap;

use mder::crf::{CrfParams, NUM_TAGS};
use mder::MethodGraph;
use rand::Rng;

/// Every tag path of length `t`, in lexicographic order.
pub fn all_paths(t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..NUM_TAGS).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn score(emissions: &[[f64; NUM_TAGS]], path: &[usize], crf: &CrfParams) -> f64 {
    let trans = crf.effective_transitions();
    let start = crf.effective_start();
    let end = crf.effective_end();
    let mut s = start[path[0]] + end[path[path.len() - 1]];
    for (t, &y) in path.iter().enumerate() {
        s += emissions[t][y];
        if t > 0 {
            s += trans[path[t - 1]][y];
        }
    }
    s
}

pub struct CrfOracle {
    pub log_z: f64,
    /// First path (lexicographically) among those with the top score.
    pub best: Vec<usize>,
    pub best_score: f64,
    /// `[t][tag]` posterior marginals.
    pub marginals: Vec<[f64; NUM_TAGS]>,
}

pub fn brute_crf(emissions: &[[f64; NUM_TAGS]], crf: &CrfParams) -> CrfOracle {
    let paths = all_paths(emissions.len());
    let scores: Vec<f64> = paths.iter().map(|p| score(emissions, p, crf)).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let log_z = m + z.ln();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut marginals = vec![[0.0; NUM_TAGS]; emissions.len()];
    for (p, s) in paths.iter().zip(&scores) {
        let w = (s - log_z).exp();
        for (t, &y) in p.iter().enumerate() {
            marginals[t][y] += w;
        }
    }
    CrfOracle {
        log_z,
        best: paths[best].clone(),
        best_score: scores[best],
        marginals,
    }
}

/// Random graph on `n` nodes named `m0..`, each edge present with
/// probability `p` and weight in `1..=max_w`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, max_w: u32) -> MethodGraph {
    let mut g = MethodGraph::new(2020);
    for i in 0..n {
        g.add_node(&format!("m{i}"));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(&format!("m{i}"), &format!("m{j}"), rng.gen_range(1..=max_w));
            }
        }
    }
    g
}

/// Betweenness by listing every simple path between every unordered pair
/// and keeping the shortest ones. Edge length is 1, or 1/w when `weighted`.
pub fn brute_betweenness(graph: &MethodGraph, weighted: bool) -> BTreeMap<String, f64> {
    let (names, adj) = graph.adjacency();
    let n = names.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
            let mut stack = vec![s];
            let mut on = vec![false; n];
            on[s] = true;
            walk(&adj, t, weighted, 0.0, &mut stack, &mut on, &mut paths);
            if paths.is_empty() {
                continue;
            }
            let shortest = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let tol = 1e-9 * shortest.max(1.0);
            let best: Vec<&Vec<usize>> = paths
                .iter()
                .filter(|p| p.0 <= shortest + tol)
                .map(|p| &p.1)
                .collect();
            for p in &best {
                for &v in &p[1..p.len() - 1] {
                    cb[v] += 1.0 / best.len() as f64;
                }
            }
        }
    }
    names.iter().map(|s| s.to_string()).zip(cb).collect()
}

fn walk(
    adj: &[Vec<(usize, u32)>],
    target: usize,
    weighted: bool,
    length: f64,
    stack: &mut Vec<usize>,
    on: &mut [bool],
    out: &mut Vec<(f64, Vec<usize>)>,
) {
    let here = *stack.last().unwrap();
    if here == target {
        out.push((length, stack.clone()));
        return;
    }
    for &(next, w) in &adj[here] {
        if on[next] {
            continue;
        }
        let step = if weighted { 1.0 / w as f64 } else { 1.0 };
        on[next] = true;
        stack.push(next);
        walk(adj, target, weighted, length + step, stack, on, out);
        stack.pop();
        on[next] = false;
    }
}
