//! Instance generators: isomorphic pairs, pairs certified far by an edge
//! count gap, the set-equality gadget and the spliced path family.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{hamming_distance, Bijection, Graph, NodeId};
use crate::rng::{keyed_rng, StreamRng, TAG_NET};

const MAX_RESAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// `gk = pi(gu)`.
    Isomorphism { pi: Vec<NodeId> },
    /// Every bijection leaves at least `2 |gu_edges - gk_edges|` differing
    /// matrix entries.
    EdgeGap { gu_edges: usize, gk_edges: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifiedPair {
    #[serde(skip)]
    pub gu: Graph,
    #[serde(skip)]
    pub gk: Graph,
    pub certificate: Certificate,
}

impl CertifiedPair {
    /// Lower bound on `min_f hamming_distance(f(gu), gk)` the certificate
    /// proves, after checking it against the graphs.
    pub fn verify(&self) -> Result<usize> {
        match &self.certificate {
            Certificate::Isomorphism { pi } => {
                let pi = Bijection::new(pi.clone())?;
                if hamming_distance(&self.gu.relabel(&pi), &self.gk)? == 0 {
                    Ok(0)
                } else {
                    Err(Error::Contract("isomorphism certificate does not map gu onto gk".into()))
                }
            }
            Certificate::EdgeGap { gu_edges, gk_edges } => {
                if *gu_edges != self.gu.edge_count() || *gk_edges != self.gk.edge_count() {
                    return Err(Error::Contract("edge counts disagree with the certificate".into()));
                }
                Ok(2 * gu_edges.abs_diff(*gk_edges))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }
}

fn gen_rng(seed: u64, what: u64) -> StreamRng {
    keyed_rng(seed, &[TAG_NET, what])
}

/// `G(n, p)` resampled until connected.
pub fn gnp_connected(n: usize, p: f64, rng: &mut StreamRng) -> Result<Graph> {
    use rand::Rng;
    for _ in 0..MAX_RESAMPLES {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    g.add_edge(u, v)?;
                }
            }
        }
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Input(format!("G({n}, {p}) never came out connected")))
}

/// Uniform graph with exactly `m` edges, resampled until connected.
pub fn gnm_connected(n: usize, m: usize, rng: &mut StreamRng) -> Result<Graph> {
    let pairs = n * n.saturating_sub(1) / 2;
    if m > pairs || (n > 1 && m + 1 < n) {
        return Err(Error::Input(format!("no connected graph on {n} nodes has {m} edges")));
    }
    let all: Vec<(NodeId, NodeId)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    for _ in 0..MAX_RESAMPLES {
        let edges: Vec<_> = index::sample(rng, pairs, m).into_iter().map(|i| all[i]).collect();
        let g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Input(format!("G({n}, m = {m}) never came out connected")))
}

pub fn uniform_bijection(n: usize, rng: &mut StreamRng) -> Bijection {
    let mut perm: Vec<NodeId> = (0..n).collect();
    perm.shuffle(rng);
    Bijection::new(perm).expect("a shuffle is a permutation")
}

pub fn gen_isomorphic_pair(n: usize, edge_prob: f64, seed: u64) -> Result<CertifiedPair> {
    if n < 2 {
        return Err(Error::Input("need at least 2 nodes".into()));
    }
    let mut rng = gen_rng(seed, 1);
    let gu = gnp_connected(n, edge_prob, &mut rng)?;
    let pi = uniform_bijection(n, &mut rng);
    Ok(CertifiedPair {
        gk: gu.relabel(&pi),
        gu,
        certificate: Certificate::Isomorphism {
            pi: pi.as_slice().to_vec(),
        },
    })
}

/// Smallest edge gap that certifies `eps`-far: `2 gap > eps n^2`.
pub fn far_gap(n: usize, eps: f64) -> usize {
    (eps * (n * n) as f64 / 2.0).floor() as usize + 1
}

/// Two connected graphs around half density whose edge counts differ by
/// [`far_gap`].
pub fn gen_far_pair(n: usize, eps: f64, seed: u64) -> Result<CertifiedPair> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let gap = far_gap(n, eps);
    let mu = (pairs + gap).div_ceil(2);
    if mu > pairs || mu < gap + n.saturating_sub(1) {
        return Err(Error::Input(format!("eps = {eps} is too large for n = {n}")));
    }
    let mut rng = gen_rng(seed, 2);
    let gu = gnm_connected(n, mu, &mut rng)?;
    let gk = gnm_connected(n, mu - gap, &mut rng)?;
    Ok(CertifiedPair {
        certificate: Certificate::EdgeGap {
            gu_edges: gu.edge_count(),
            gk_edges: gk.edge_count(),
        },
        gu,
        gk,
    })
}

/// A `k x k` bit matrix, a subset of `[k] x [k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitMatrix {
    k: usize,
    bits: Vec<bool>,
}

impl BitMatrix {
    pub fn zeros(k: usize) -> Self {
        BitMatrix { k, bits: vec![false; k * k] }
    }

    /// Row-major bits of `code`, bit `i * k + j` at entry `(i, j)`.
    pub fn from_code(k: usize, code: u64) -> Self {
        let bits = (0..k * k).map(|b| code >> b & 1 == 1).collect();
        BitMatrix { k, bits }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, bit: bool) {
        self.bits[i * self.k + j] = bit;
    }
}

/// Positions of the named nodes of one side of the gadget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GadgetSide {
    pub hub: NodeId,
    pub mid: NodeId,
    pub far: NodeId,
    pub first: Vec<NodeId>,
    pub second: Vec<NodeId>,
    pub first_tail: NodeId,
    pub second_tail: NodeId,
    pub hub_tails: Vec<NodeId>,
}

fn gadget_side(g: &mut Graph, offset: usize, k: usize, m: &BitMatrix, hub_tails: usize) -> Result<GadgetSide> {
    let first: Vec<NodeId> = (0..k).map(|i| offset + 3 + i).collect();
    let second: Vec<NodeId> = (0..k).map(|i| offset + 3 + k + i).collect();
    let side = GadgetSide {
        hub: offset,
        mid: offset + 1,
        far: offset + 2,
        first_tail: offset + 3 + 2 * k,
        second_tail: offset + 4 + 2 * k,
        hub_tails: (0..hub_tails).map(|i| offset + 5 + 2 * k + i).collect(),
        first,
        second,
    };
    for path in [&side.first, &side.second] {
        for w in path.windows(2) {
            g.add_edge(w[0], w[1])?;
        }
    }
    for &a in &side.first {
        g.add_edge(side.hub, a)?;
    }
    for &b in &side.second {
        g.add_edge(side.far, b)?;
    }
    g.add_edge(side.hub, side.mid)?;
    g.add_edge(side.far, side.mid)?;
    for &t in &side.hub_tails {
        g.add_edge(side.hub, t)?;
    }
    g.add_edge(side.first[0], side.first_tail)?;
    g.add_edge(side.second[0], side.second_tail)?;
    for i in 0..k {
        for j in 0..k {
            if m.get(i, j) {
                g.add_edge(side.first[i], side.second[j])?;
            }
        }
    }
    Ok(side)
}

/// `G_{x,y}`: Alice's side encodes `x` with two tails on its hub, Bob's
/// encodes `y` with three, joined hub to hub. `4k + 15` nodes.
pub fn decision_gadget(x: &BitMatrix, y: &BitMatrix) -> Result<Graph> {
    let k = x.k();
    if k == 0 || y.k() != k {
        return Err(Error::Input("gadget inputs must be nonempty and the same size".into()));
    }
    let alice = 2 * k + 7;
    let mut g = Graph::empty(alice + 2 * k + 8);
    let a = gadget_side(&mut g, 0, k, x, 2)?;
    let b = gadget_side(&mut g, alice, k, y, 3)?;
    g.add_edge(a.hub, b.hub)?;
    Ok(g)
}

/// `(G_{x,y}, G_{x,x})`.
pub fn gen_decision_lb(x: &BitMatrix, y: &BitMatrix) -> Result<(Graph, Graph)> {
    Ok((decision_gadget(x, y)?, decision_gadget(x, x)?))
}

fn leaves_around(g: &Graph, v: NodeId) -> usize {
    g.neighbors(v).iter().filter(|&&w| g.degree(w) == 1).count()
}

fn decode_side(g: &Graph, hub: NodeId, other_hub: NodeId) -> Option<(Vec<NodeId>, Vec<NodeId>)> {
    let adjacent_to_hub = |w: NodeId| g.has_edge(hub, w);
    let mid = g.neighbors(hub).iter().copied().find(|&w| {
        w != other_hub
            && g.degree(w) == 2
            && g.neighbors(w)
                .iter()
                .any(|&x| x != hub && !adjacent_to_hub(x) && g.degree(x) >= 2)
    })?;
    let far = *g.neighbors(mid).iter().find(|&&x| x != hub)?;
    let first: BTreeSet<NodeId> = g
        .neighbors(hub)
        .iter()
        .copied()
        .filter(|&w| w != mid && w != other_hub && g.degree(w) > 1)
        .collect();
    let second: BTreeSet<NodeId> = g.neighbors(far).iter().copied().filter(|&w| w != mid).collect();
    let walk = |set: &BTreeSet<NodeId>| -> Option<Vec<NodeId>> {
        let start = set.iter().copied().find(|&w| leaves_around(g, w) == 1)?;
        let mut path = vec![start];
        while path.len() < set.len() {
            let last = *path.last()?;
            let next = g
                .neighbors(last)
                .iter()
                .copied()
                .find(|&w| set.contains(&w) && !path.contains(&w))?;
            path.push(next);
        }
        Some(path)
    };
    Some((walk(&first)?, walk(&second)?))
}

/// Recovers `(x, y)` from an arbitrarily relabelled `G_{x,y}` using only its
/// structure: hubs by their 2 and 3 pendant neighbors, then the degree-2
/// middle node, the two node sets and the path starts marked by tails.
pub fn decode_decision_lb(g: &Graph) -> Option<(BitMatrix, BitMatrix)> {
    let hubs: Vec<(usize, NodeId)> = (0..g.n())
        .map(|v| (leaves_around(g, v), v))
        .filter(|&(c, _)| c >= 2)
        .collect();
    let u = hubs.iter().find(|&&(c, _)| c == 2)?.1;
    let v = hubs.iter().find(|&&(c, _)| c == 3)?.1;
    let mut out = Vec::new();
    for (hub, other) in [(u, v), (v, u)] {
        let (first, second) = decode_side(g, hub, other)?;
        let k = first.len();
        if second.len() != k {
            return None;
        }
        let mut m = BitMatrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.set(i, j, g.has_edge(first[i], second[j]));
            }
        }
        out.push(m);
    }
    let y = out.pop()?;
    let x = out.pop()?;
    Some((x, y))
}

/// `G_{i,j}`: `left` and `right` joined by a path of `d` nodes whose ends
/// are node 0 of each. Nodes `0..n` are `left`, `n..2n` are `right`, and
/// the path interior follows. `2n + d - 2` nodes.
pub fn splice(left: &Graph, right: &Graph, d: usize) -> Result<Graph> {
    let n = left.n();
    if right.n() != n || n == 0 {
        return Err(Error::Input("both sides need the same positive node count".into()));
    }
    if d < 2 {
        return Err(Error::Input(format!("path length {d} below 2")));
    }
    let mut full = Graph::empty(2 * n + d - 2);
    for (a, b) in left.disjoint_union(right).edges() {
        full.add_edge(a, b)?;
    }
    let path: Vec<NodeId> = std::iter::once(0)
        .chain(2 * n..2 * n + d - 2)
        .chain(std::iter::once(n))
        .collect();
    for w in path.windows(2) {
        full.add_edge(w[0], w[1])?;
    }
    Ok(full)
}

/// `G_{i,j}` from the pair `(g1, g2)`, `i, j` in `{1, 2}`.
pub fn gen_testing_lb(i: u8, j: u8, d: usize, g1: &Graph, g2: &Graph) -> Result<Graph> {
    let pick = |x: u8| match x {
        1 => Ok(g1),
        2 => Ok(g2),
        _ => Err(Error::Input(format!("side index {x} is not 1 or 2"))),
    };
    splice(pick(i)?, pick(j)?, d)
}

/// Default sides: connected `G(n, m1)` and `G(n, m2)` with `m1` near
/// `0.6` of all pairs and `m1 = round((1 + eps) m2)`.
pub fn default_lb_sides(n: usize, eps: f64, seed: u64) -> Result<(Graph, Graph)> {
    let pairs = n * n.saturating_sub(1) / 2;
    let m2 = (0.6 * pairs as f64 / (1.0 + eps)).round() as usize;
    let m1 = ((1.0 + eps) * m2 as f64).round() as usize;
    let mut rng = gen_rng(seed, 3);
    Ok((gnm_connected(n, m1, &mut rng)?, gnm_connected(n, m2, &mut rng)?))
}

/// Which label block a side draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum LabelSet {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Orientation {
    Ascending,
    Descending,
}

/// A graph with a fixed unique label per node and a fixed port order per
/// node (`ports[v][p]` is the neighbor behind port `p + 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub labels: Vec<u64>,
    pub ports: Vec<Vec<NodeId>>,
}

/// `G_{i,j}(S1, S2, o)`: labels `A = 1..=n`, `B = n+1..=2n` on the sides
/// (node `t` of a side gets the `t`-th label of its block) and
/// `L = 2n+1..=2n+d-2` on the path interior in orientation `o`. Interior
/// path nodes alternate which side port 1 faces, so both ends attach
/// through port 1; a side's own ports come first in neighbor order, the
/// path port last.
#[allow(clippy::too_many_arguments)]
pub fn gen_testing_lb_labeled(
    i: u8,
    j: u8,
    sets: (LabelSet, LabelSet),
    d: usize,
    o: Orientation,
    g1: &Graph,
    g2: &Graph,
) -> Result<LabeledGraph> {
    if d % 2 == 1 {
        return Err(Error::Input(format!("path length {d} must be even")));
    }
    if sets.0 == sets.1 {
        return Err(Error::Input("the two sides need different label blocks".into()));
    }
    let graph = gen_testing_lb(i, j, d, g1, g2)?;
    let n = g1.n();
    let base = |s: LabelSet| match s {
        LabelSet::A => 1,
        LabelSet::B => n as u64 + 1,
    };
    let mut labels = vec![0u64; graph.n()];
    for t in 0..n {
        labels[t] = base(sets.0) + t as u64;
        labels[n + t] = base(sets.1) + t as u64;
    }
    let interior = d - 2;
    for m in 0..interior {
        let rank = match o {
            Orientation::Ascending => m,
            Orientation::Descending => interior - 1 - m,
        };
        labels[2 * n + m] = 2 * n as u64 + 1 + rank as u64;
    }
    // path p_1..p_d as node ids
    let path: Vec<NodeId> = std::iter::once(0)
        .chain(2 * n..2 * n + interior)
        .chain(std::iter::once(n))
        .collect();
    let mut ports: Vec<Vec<NodeId>> = vec![Vec::new(); graph.n()];
    for v in 0..2 * n {
        let side_nbrs = graph.neighbors(v).iter().copied().filter(|&w| w < 2 * n);
        let (lo, hi) = if v < n { (0, n) } else { (n, 2 * n) };
        ports[v] = side_nbrs.filter(|&w| w >= lo && w < hi).collect();
    }
    ports[path[0]].push(path[1]);
    ports[path[d - 1]].push(path[d - 2]);
    for m in 1..d - 1 {
        // p_{m+1} in one-based terms
        let (toward_start, toward_end) = (path[m - 1], path[m + 1]);
        ports[path[m]] = if (m + 1) % 2 == 0 {
            vec![toward_start, toward_end]
        } else {
            vec![toward_end, toward_start]
        };
    }
    Ok(LabeledGraph { graph, labels, ports })
}

/// What a node can know after `r` rounds: every node within distance `r`
/// with its label, distance and degree, and every edge with an endpoint
/// closer than `r` as `(label, port, label, port)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct View {
    pub center: u64,
    pub nodes: Vec<(u64, usize, usize)>,
    pub edges: Vec<(u64, usize, u64, usize)>,
}

pub fn view(g: &LabeledGraph, v: NodeId, r: usize) -> View {
    let dist = g.graph.bfs_distances(v);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for w in 0..g.graph.n() {
        if dist[w] > r {
            continue;
        }
        nodes.push((g.labels[w], dist[w], g.ports[w].len()));
        if dist[w] < r {
            for (p, &x) in g.ports[w].iter().enumerate() {
                let back = g.ports[x].iter().position(|&y| y == w).expect("ports are symmetric");
                edges.push((g.labels[w], p + 1, g.labels[x], back + 1));
            }
        }
    }
    nodes.sort_unstable();
    edges.sort_unstable();
    View {
        center: g.labels[v],
        nodes,
        edges,
    }
}

/// The six members of the labeled family: four isomorphic to the known
/// graph `G_{1,2}` and one of each far kind per orientation.
pub struct LabeledFamily {
    pub yes: Vec<LabeledGraph>,
    pub no: Vec<LabeledGraph>,
}

pub fn labeled_family(d: usize, g1: &Graph, g2: &Graph) -> Result<LabeledFamily> {
    use LabelSet::{A, B};
    let orients = [Orientation::Ascending, Orientation::Descending];
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for o in orients {
        yes.push(gen_testing_lb_labeled(1, 2, (A, B), d, o, g1, g2)?);
        yes.push(gen_testing_lb_labeled(1, 2, (B, A), d, o, g1, g2)?);
        no.push(gen_testing_lb_labeled(1, 1, (A, B), d, o, g1, g2)?);
        no.push(gen_testing_lb_labeled(2, 2, (A, B), d, o, g1, g2)?);
    }
    Ok(LabeledFamily { yes, no })
}

/// Nodes of the far members whose `r`-hop view appears nowhere in the
/// isomorphic members, as `(member index, node)`.
pub fn unmatched_views(family: &LabeledFamily, r: usize) -> Vec<(usize, NodeId)> {
    let seen: BTreeSet<View> = family
        .yes
        .iter()
        .flat_map(|g| (0..g.graph.n()).map(move |v| view(g, v, r)))
        .collect();
    family
        .no
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| (0..g.graph.n()).map(move |v| (gi, v)))
        .filter(|&(gi, v)| !seen.contains(&view(&family.no[gi], v, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{brute_iso, find_isomorphism, min_bijection_distance};

    #[test]
    fn isomorphic_pairs_verify() {
        for seed in 0..10 {
            let pair = gen_isomorphic_pair(8, 0.5, seed).unwrap();
            assert_eq!(pair.verify().unwrap(), 0);
            assert!(brute_iso(&pair.gu, &pair.gk).unwrap().is_some());
            assert!(pair.gu.is_connected());
        }
        let full = gen_isomorphic_pair(5, 1.0, 3).unwrap();
        assert_eq!(full.gu, Graph::complete(5));
        assert_eq!(full.gk, Graph::complete(5));
    }

    #[test]
    fn far_pairs_verify() {
        assert_eq!(far_gap(10, 0.3), 16);
        let pair = gen_far_pair(10, 0.3, 1).unwrap();
        assert_eq!(pair.verify().unwrap(), 32);
        assert_eq!(pair.gu.edge_count() - pair.gk.edge_count(), 16);
        for seed in 0..3 {
            let pair = gen_far_pair(7, 0.3, seed).unwrap();
            let bound = pair.verify().unwrap();
            let exact = min_bijection_distance(&pair.gu, &pair.gk).unwrap();
            assert!(exact >= bound);
            assert!(exact as f64 > 0.3 * 49.0);
            let mut rng = gen_rng(seed, 9);
            let moved = CertifiedPair {
                gk: pair.gk.relabel(&uniform_bijection(7, &mut rng)),
                ..pair.clone()
            };
            assert_eq!(moved.verify().unwrap(), bound);
        }
        assert!(gen_far_pair(4, 0.9, 0).is_err());
    }

    #[test]
    fn gadget_size_and_iff() {
        let x = BitMatrix::from_code(3, 0b101_010_011);
        assert_eq!(decision_gadget(&x, &x).unwrap().n(), 27);
        let (gu, gk) = gen_decision_lb(&BitMatrix::from_code(2, 5), &BitMatrix::from_code(2, 6)).unwrap();
        assert_eq!(gu.n(), 23);
        assert!(find_isomorphism(&gu, &gk).unwrap().is_none());
        let (gu, gk) = gen_decision_lb(&BitMatrix::from_code(2, 5), &BitMatrix::from_code(2, 5)).unwrap();
        assert!(find_isomorphism(&gu, &gk).unwrap().is_some());
    }

    #[test]
    fn gadget_decodes_after_relabelling() {
        let mut rng = gen_rng(0, 7);
        for k in 1..=3usize {
            let codes = 1u64 << (k * k);
            for cx in 0..codes {
                // all pairs for small k, a spread of y otherwise
                let ys: Vec<u64> = if k < 3 { (0..codes).collect() } else { vec![cx, (cx * 37 + 11) % codes] };
                for cy in ys {
                    let (x, y) = (BitMatrix::from_code(k, cx), BitMatrix::from_code(k, cy));
                    let g = decision_gadget(&x, &y).unwrap();
                    let hidden = g.relabel(&uniform_bijection(g.n(), &mut rng));
                    assert_eq!(decode_decision_lb(&hidden), Some((x, y)));
                }
            }
        }
    }

    #[test]
    fn spliced_family() {
        let (g1, g2) = default_lb_sides(4, 0.3, 0).unwrap();
        assert_eq!(g1.edge_count(), ((1.3 * g2.edge_count() as f64).round()) as usize);
        for d in [2, 3, 6] {
            let g = gen_testing_lb(1, 2, d, &g1, &g2).unwrap();
            assert_eq!(g.n(), 2 * 4 + d - 2);
            assert!(g.is_connected());
        }
        let a = gen_testing_lb(1, 2, 3, &g1, &g2).unwrap();
        let b = gen_testing_lb(2, 1, 3, &g1, &g2).unwrap();
        assert!(brute_iso(&a, &b).unwrap().is_some());
        let g11 = gen_testing_lb(1, 1, 3, &g1, &g2).unwrap();
        let g22 = gen_testing_lb(2, 2, 3, &g1, &g2).unwrap();
        let gap = g11.edge_count() - g22.edge_count();
        assert_eq!(gap, 2 * (g1.edge_count() - g2.edge_count()));
        assert!(gen_testing_lb(3, 1, 3, &g1, &g2).is_err());
    }

    #[test]
    fn labeled_members() {
        let (g1, g2) = default_lb_sides(6, 0.3, 0).unwrap();
        let fam = labeled_family(6, &g1, &g2).unwrap();
        let (asc, desc) = (&fam.no[0], &fam.no[2]);
        assert_eq!(asc.graph, desc.graph);
        let differ: Vec<_> = (0..asc.labels.len()).filter(|&v| asc.labels[v] != desc.labels[v]).collect();
        assert!(differ.iter().all(|&v| v >= 12));
        for g in fam.yes.iter().chain(&fam.no) {
            let mut ls = g.labels.clone();
            ls.sort_unstable();
            assert_eq!(ls, (1..=16).collect::<Vec<u64>>());
            for (v, ps) in g.ports.iter().enumerate() {
                let mut a = ps.clone();
                a.sort_unstable();
                assert_eq!(a, g.graph.neighbors(v));
            }
        }
        // both path ends attach through port 1 of their interior neighbor
        let g = &fam.yes[0];
        assert_eq!(g.ports[12][0], 0);
        assert_eq!(g.ports[15][0], 6);
        assert!(gen_testing_lb_labeled(1, 2, (LabelSet::A, LabelSet::B), 5, Orientation::Ascending, &g1, &g2).is_err());
    }

    #[test]
    fn far_members_look_locally_like_yes_members() {
        let (g1, g2) = default_lb_sides(6, 0.3, 0).unwrap();
        let fam = labeled_family(6, &g1, &g2).unwrap();
        assert!(unmatched_views(&fam, 2).is_empty());
        // with a wide enough view the far members stand out
        assert!(!unmatched_views(&fam, 5).is_empty());
    }
}
