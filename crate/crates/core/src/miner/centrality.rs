use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use super::MethodGraph;

/// Variants of betweenness. The default counts unweighted shortest paths and
/// does not normalize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BetweennessOptions {
    /// Shortest paths by total distance, where an edge of weight `w` has
    /// length `1 / w`.
    pub weighted: bool,
    /// Divide by the number of node pairs excluding the node, `C(n-1, 2)`.
    pub normalized: bool,
}

/// Unweighted, unnormalized betweenness of every node.
pub fn betweenness(graph: &MethodGraph) -> BTreeMap<String, f64> {
    betweenness_with(graph, BetweennessOptions::default())
}

/// Brandes' algorithm: one shortest-path search per source, then dependencies
/// accumulated in reverse order of distance. Each unordered pair is counted
/// once.
pub fn betweenness_with(graph: &MethodGraph, opts: BetweennessOptions) -> BTreeMap<String, f64> {
    let (names, adj) = graph.adjacency();
    let n = names.len();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let (order, preds, sigma) = if opts.weighted {
            dijkstra(&adj, s)
        } else {
            bfs(&adj, s)
        };
        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    let scale = if opts.normalized && n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.5
    };
    names
        .into_iter()
        .zip(cb)
        .map(|(name, c)| (name.to_string(), c * scale))
        .collect()
}

type Search = (Vec<usize>, Vec<Vec<usize>>, Vec<f64>);

fn bfs(adj: &[Vec<(usize, u32)>], s: usize) -> Search {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut preds = vec![Vec::new(); n];
    let mut sigma = vec![0.0; n];
    let mut dist = vec![usize::MAX; n];
    sigma[s] = 1.0;
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(w, _) in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }
    (order, preds, sigma)
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on distance, then node index
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn same_length(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn dijkstra(adj: &[Vec<(usize, u32)>], s: usize) -> Search {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut preds = vec![Vec::new(); n];
    let mut sigma = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    sigma[s] = 1.0;
    dist[s] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, s)]);
    while let Some(Entry(d, v)) = heap.pop() {
        if done[v] || d > dist[v] {
            continue;
        }
        done[v] = true;
        order.push(v);
        for &(w, weight) in &adj[v] {
            let nd = d + 1.0 / f64::from(weight);
            if done[w] {
                continue;
            }
            if dist[w].is_infinite() || (nd < dist[w] && !same_length(nd, dist[w])) {
                dist[w] = nd;
                sigma[w] = sigma[v];
                preds[w] = vec![v];
                heap.push(Entry(nd, w));
            } else if same_length(nd, dist[w]) {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }
    (order, preds, sigma)
}

/// At most `k` entries, highest score first, ties by name.
pub fn top_k(scores: &BTreeMap<String, f64>, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = scores.iter().map(|(n, &s)| (n.clone(), s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Top-ranked methods of one year.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub year: i32,
    pub entries: Vec<(String, f64)>,
}

pub fn yearly_rankings(
    graphs: &BTreeMap<i32, MethodGraph>,
    k: usize,
    opts: BetweennessOptions,
) -> Vec<Ranking> {
    graphs
        .iter()
        .map(|(&year, g)| Ranking {
            year,
            entries: top_k(&betweenness_with(g, opts), k),
        })
        .collect()
}
