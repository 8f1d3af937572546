//! Undirected simple graphs on dense node ids `0..n`, bijections between
//! node sets, and the label machinery the isomorphism protocols are built on.

mod labels;
mod oracle;
mod text;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labels::{
    c_label, is_beta_separating, is_label_consistent, label_class, label_classes, labels,
    sample_max_consistent, sample_max_consistent_keyed, LabelString, NodeSeq,
};
pub(crate) use labels::class_matching;
pub use oracle::{
    brute_iso, find_isomorphism, hamming_distance, min_bijection_distance, BRUTE_FORCE_CAP,
    BACKTRACK_CAP,
};
pub use text::{parse_edge_line, read_graph, write_graph};

pub type NodeId = usize;

/// Bitset adjacency plus sorted neighbor lists.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    nbrs: Vec<Vec<NodeId>>,
    m: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Graph {
            n,
            words,
            rows: vec![0; n * words],
            nbrs: vec![Vec::new(); n],
            m: 0,
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                g.insert(u, v);
            }
        }
        g
    }

    pub fn path(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 1..n {
            g.insert(u - 1, u);
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Graph::path(n);
        if n > 2 {
            g.insert(0, n - 1);
        }
        g
    }

    pub fn star(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for v in 1..n {
            g.insert(0, v);
        }
        g
    }

    /// Builds a graph from an edge list, rejecting self-loops and repeats.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut g = Graph::empty(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n && v < self.n && self.rows[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.nbrs[v]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.nbrs[v].len()
    }

    pub(crate) fn row(&self, v: NodeId) -> &[u64] {
        &self.rows[v * self.words..(v + 1) * self.words]
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: v, n: self.n })
        }
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::Input(format!("self-loop at node {u}")));
        }
        if self.has_edge(u, v) {
            return Err(Error::Input(format!("duplicate edge {{{u}, {v}}}")));
        }
        self.insert(u, v);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if !self.has_edge(u, v) {
            return Err(Error::Input(format!("no edge {{{u}, {v}}} to remove")));
        }
        self.flip(u, v);
        self.flip(v, u);
        self.nbrs[u].retain(|&w| w != v);
        self.nbrs[v].retain(|&w| w != u);
        self.m -= 1;
        Ok(())
    }

    fn insert(&mut self, u: NodeId, v: NodeId) {
        self.flip(u, v);
        self.flip(v, u);
        let pos = self.nbrs[u].partition_point(|&w| w < v);
        self.nbrs[u].insert(pos, v);
        let pos = self.nbrs[v].partition_point(|&w| w < u);
        self.nbrs[v].insert(pos, u);
        self.m += 1;
    }

    fn flip(&mut self, u: NodeId, v: NodeId) {
        self.rows[u * self.words + v / 64] ^= 1 << (v % 64);
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.nbrs[u]
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// `f(G)`: the graph on the codomain with edges `{f(u), f(v)}`.
    pub fn relabel(&self, f: &Bijection) -> Graph {
        assert_eq!(f.len(), self.n, "bijection size must match graph");
        let mut out = Graph::empty(self.n);
        for (u, v) in self.edges() {
            out.insert(f.apply(u), f.apply(v));
        }
        out
    }

    /// Hop distances from `src`; `usize::MAX` marks unreachable nodes.
    pub fn bfs_distances(&self, src: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &w in &self.nbrs[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    pub fn eccentricity(&self, v: NodeId) -> Option<usize> {
        let d = self.bfs_distances(v);
        d.iter().copied().try_fold(0, |acc, x| {
            (x != usize::MAX).then_some(acc.max(x))
        })
    }

    /// Diameter, or `None` for a disconnected graph.
    pub fn diameter(&self) -> Option<usize> {
        (0..self.n).try_fold(0, |acc, v| self.eccentricity(v).map(|e| acc.max(e)))
    }

    /// Vertex-disjoint union; nodes of `other` are shifted by `self.n()`.
    pub fn disjoint_union(&self, other: &Graph) -> Graph {
        let mut g = Graph::empty(self.n + other.n);
        for (u, v) in self.edges() {
            g.insert(u, v);
        }
        for (u, v) in other.edges() {
            g.insert(u + self.n, v + self.n);
        }
        g
    }

    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut d: Vec<usize> = (0..self.n).map(|v| self.degree(v)).collect();
        d.sort_unstable();
        d
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

/// A total one-to-one map `0..n -> 0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bijection(Vec<NodeId>);

impl Bijection {
    pub fn new(map: Vec<NodeId>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &x in &map {
            if x >= n {
                return Err(Error::NodeOutOfRange { node: x, n });
            }
            if std::mem::replace(&mut seen[x], true) {
                return Err(Error::Input(format!("{x} is hit twice; not a bijection")));
            }
        }
        Ok(Bijection(map))
    }

    pub fn identity(n: usize) -> Self {
        Bijection((0..n).collect())
    }

    #[inline]
    pub fn apply(&self, v: NodeId) -> NodeId {
        self.0[v]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }

    pub fn inverse(&self) -> Bijection {
        let mut inv = vec![0; self.0.len()];
        for (v, &x) in self.0.iter().enumerate() {
            inv[x] = v;
        }
        Bijection(inv)
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Bijection) -> Bijection {
        Bijection(other.0.iter().map(|&v| self.0[v]).collect())
    }

    /// Number of points where the two maps disagree.
    pub fn disagreements(&self, other: &Bijection) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// Advances `perm` to the next permutation in lexicographic order.
/// Returns `false` (leaving `perm` sorted ascending) after the last one.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        perm.reverse();
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
