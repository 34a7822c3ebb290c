//! Undirected graphs, timestamped snapshots, streams, and merged temporal graphs.
//!
//! Everything here is immutable after construction. Node ids are dense
//! `0..n` and the node universe is fixed for the life of a stream; a node
//! that does not appear in a snapshot simply has no incident edges there.

use crate::error::{input, Result};
use std::collections::BTreeMap;

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl StaticGraph {
    /// Builds a graph from arbitrary pairs. Duplicates (in either orientation)
    /// collapse and self-loops are dropped.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        for &(u, v) in pairs {
            if u >= n || v >= n {
                return input(format!("edge ({u}, {v}) references a node outside 0..{n}"));
            }
        }
        let mut edges: Vec<(usize, usize)> = pairs
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical_edges(n, edges))
    }

    /// `edges` must already be sorted, deduplicated, `u < v`.
    fn from_canonical_edges(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self { n, edges, adj }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_canonical_edges(n, Vec::new())
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    /// Nodes with at least one incident edge.
    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| !self.adj[u].is_empty())
    }

    /// Neighbors of `u` that close at least one triangle with `u`.
    pub fn triangle_neighbors(&self, u: usize) -> Vec<usize> {
        let nu = &self.adj[u];
        nu.iter()
            .copied()
            .filter(|&v| sorted_intersect(nu, &self.adj[v]))
            .collect()
    }

    /// The graph obtained by renaming node `u` to `perm[u]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return input("permutation length differs from node count");
        }
        let pairs: Vec<_> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Self::new(self.n, &pairs)
    }
}

fn sorted_intersect(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Timestamped edge `(u, v, t)`.
pub type TemporalEdge = (usize, usize, f64);

/// Edges observed during one time span.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub span_index: usize,
    pub edges: Vec<TemporalEdge>,
}

impl Snapshot {
    pub fn new(span_index: usize, edges: Vec<TemporalEdge>) -> Self {
        Self { span_index, edges }
    }

    pub fn max_time(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.2).reduce(f64::max)
    }

    pub fn min_time(&self) -> Option<f64> {
        self.edges.iter().map(|e| e.2).reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraphStream {
    n: usize,
    snapshots: Vec<Snapshot>,
}

impl TemporalGraphStream {
    /// Validates node ranges, finite non-negative timestamps, strictly
    /// increasing span indices and non-overlapping time ranges.
    pub fn new(n: usize, snapshots: Vec<Snapshot>) -> Result<Self> {
        let mut prev: Option<(usize, f64)> = None;
        for s in &snapshots {
            for &(u, v, t) in &s.edges {
                if u >= n || v >= n {
                    return input(format!("span {}: edge ({u}, {v}) outside 0..{n}", s.span_index));
                }
                if !t.is_finite() || t < 0.0 {
                    return input(format!("span {}: invalid timestamp {t}", s.span_index));
                }
            }
            if let Some((idx, last)) = prev {
                if s.span_index <= idx {
                    return input(format!("span indices not strictly increasing at {}", s.span_index));
                }
                if s.min_time().is_some_and(|t| t < last) {
                    return input(format!("span {} overlaps the previous span in time", s.span_index));
                }
            }
            let last = s.max_time().unwrap_or(prev.map_or(0.0, |p| p.1));
            prev = Some((s.span_index, last));
        }
        Ok(Self { n, snapshots })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    fn position(&self, span_index: usize) -> Result<usize> {
        self.snapshots
            .binary_search_by_key(&span_index, |s| s.span_index)
            .or_else(|_| input(format!("no snapshot with span index {span_index}")))
    }

    /// Union of snapshots with span indices in `i..=j`.
    pub fn merge_snapshots(&self, i: usize, j: usize) -> Result<MergedGraph> {
        if i > j {
            return input(format!("merge range reversed: {i} > {j}"));
        }
        let (a, b) = (self.position(i)?, self.position(j)?);
        MergedGraph::from_snapshots(self.n, &self.snapshots[a..=b])
    }
}

/// Union of snapshots; each pair keeps its most recent timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedGraph {
    graph: StaticGraph,
    // aligned with graph.neighbors(u)
    times: Vec<Vec<f64>>,
}

impl MergedGraph {
    pub fn from_snapshots<'a>(n: usize, snapshots: impl IntoIterator<Item = &'a Snapshot>) -> Result<Self> {
        let mut latest: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for s in snapshots {
            for &(u, v, t) in &s.edges {
                if u >= n || v >= n {
                    return input(format!("edge ({u}, {v}) outside 0..{n}"));
                }
                if u == v {
                    continue;
                }
                let key = (u.min(v), u.max(v));
                latest.entry(key).and_modify(|x| *x = x.max(t)).or_insert(t);
            }
        }
        Ok(Self::from_latest(n, latest))
    }

    fn from_latest(n: usize, latest: BTreeMap<(usize, usize), f64>) -> Self {
        let edges: Vec<_> = latest.keys().copied().collect();
        let graph = StaticGraph::from_canonical_edges(n, edges);
        let times = (0..n)
            .map(|u| {
                graph
                    .neighbors(u)
                    .iter()
                    .map(|&v| latest[&(u.min(v), u.max(v))])
                    .collect()
            })
            .collect();
        Self { graph, times }
    }

    /// Folds one more snapshot into this merged graph.
    pub fn merge_with(&self, snapshot: &Snapshot) -> Result<Self> {
        let n = self.graph.node_count();
        let mut latest: BTreeMap<(usize, usize), f64> = self
            .graph
            .edges()
            .iter()
            .map(|&(u, v)| ((u, v), self.last_time(u, v).expect("edge present")))
            .collect();
        for &(u, v, t) in &snapshot.edges {
            if u >= n || v >= n {
                return input(format!("edge ({u}, {v}) outside 0..{n}"));
            }
            if u == v {
                continue;
            }
            latest.entry((u.min(v), u.max(v))).and_modify(|x| *x = x.max(t)).or_insert(t);
        }
        Ok(Self::from_latest(n, latest))
    }

    pub fn graph(&self) -> &StaticGraph {
        &self.graph
    }

    /// Timestamps aligned with `graph().neighbors(u)`.
    pub fn neighbor_times(&self, u: usize) -> &[f64] {
        &self.times[u]
    }

    pub fn last_time(&self, u: usize, v: usize) -> Option<f64> {
        let pos = self.graph.neighbors(u).binary_search(&v).ok()?;
        Some(self.times[u][pos])
    }

    /// Most recent interaction of `v` with any neighbor; `None` when isolated.
    pub fn latest_interaction(&self, v: usize) -> Option<f64> {
        self.times[v].iter().copied().reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pairs(n: usize, m: usize, seed: u64) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
    }

    #[test]
    fn build_dedups_and_drops_self_loops() {
        let g = StaticGraph::new(3, &[(0, 1), (1, 0), (1, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(StaticGraph::new(2, &[]).unwrap().edge_count(), 0);
    }

    #[test]
    fn build_rejects_out_of_range() {
        assert!(StaticGraph::new(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn adjacency_symmetric_against_dense_matrix() {
        let g = StaticGraph::new(5, &random_pairs(5, 10, 7)).unwrap();
        let mut dense = [[0u8; 5]; 5];
        for u in 0..5 {
            for &v in g.neighbors(u) {
                dense[u][v] = 1;
            }
        }
        for u in 0..5 {
            assert_eq!(dense[u][u], 0);
            for v in 0..5 {
                assert_eq!(dense[u][v], dense[v][u]);
            }
        }
    }

    #[test]
    fn triangle_neighbors_small_cases() {
        let tri = StaticGraph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.triangle_neighbors(0), vec![1, 2]);
        let path = StaticGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(path.triangle_neighbors(1).is_empty());
    }

    #[test]
    fn merge_keeps_latest_timestamp() {
        let s1 = Snapshot::new(1, vec![(0, 1, 5.0)]);
        let s2 = Snapshot::new(2, vec![(1, 0, 9.0), (1, 2, 10.0)]);
        let stream = TemporalGraphStream::new(3, vec![s1.clone(), s2]).unwrap();
        let m = stream.merge_snapshots(1, 2).unwrap();
        assert_eq!(m.last_time(0, 1), Some(9.0));
        assert_eq!(m.last_time(1, 0), Some(9.0));
        let single = stream.merge_snapshots(1, 1).unwrap();
        assert_eq!(single.graph().edges(), &[(0, 1)]);
        assert_eq!(single.last_time(0, 1), Some(5.0));
        assert!(stream.merge_snapshots(2, 1).is_err());
    }

    #[test]
    fn latest_interaction_is_max_over_incident_edges() {
        let s = Snapshot::new(0, vec![(0, 1, 3.0), (0, 2, 7.0), (0, 3, 2.0), (4, 5, 0.0)]);
        let m = MergedGraph::from_snapshots(7, [&s]).unwrap();
        assert_eq!(m.latest_interaction(0), Some(7.0));
        assert_eq!(m.latest_interaction(4), Some(0.0));
        assert_eq!(m.latest_interaction(6), None);
    }

    #[test]
    fn stream_rejects_unordered_spans() {
        let a = Snapshot::new(2, vec![(0, 1, 1.0)]);
        let b = Snapshot::new(1, vec![(0, 1, 2.0)]);
        assert!(TemporalGraphStream::new(2, vec![a.clone(), b]).is_err());
        let late = Snapshot::new(3, vec![(0, 1, 0.5)]);
        assert!(TemporalGraphStream::new(2, vec![a, late]).is_err());
    }
}
