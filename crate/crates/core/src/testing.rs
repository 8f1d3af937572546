//! Two-sided property tester for isomorphism with a known graph held at one
//! node. The network samples anchors `C` and pairs `A`; the root then tries
//! every anchor image `P` in the known graph.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use crate::decision::{ACCEPT, REJECT};
use crate::error::{Error, Result};
use crate::graph::{labels, Graph, LabelString, NodeId, NodeSeq};
use crate::protocols::{
    broadcast_values, build_bfs, collect_labels, count_zero_label, elect_random_nodes, exchange_labels,
    id_bits, label_class_sizes, local_label, pipelined_collect, BfsTree,
};
use crate::rng::{keyed_rng, TAG_MATCH, TAG_SAMPLE};
use crate::sim::{width_for, BitString, Network, NetworkConfig, Transcript};

pub const C_S: f64 = 8.0;
pub const C_T: f64 = 8.0;

/// `ceil(c_s ln n / eps)`, before clamping to `n`.
pub fn full_s(n: usize, eps: f64) -> usize {
    (C_S * (n as f64).ln() / eps).ceil().max(1.0) as usize
}

/// `ceil(c_t s ln n / eps)`.
pub fn full_t(n: usize, s: usize, eps: f64) -> usize {
    (C_T * s as f64 * (n as f64).ln() / eps).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestParams {
    pub eps: f64,
    pub s: usize,
    pub t: usize,
    pub desk_override: bool,
    pub root: NodeId,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("eps must lie in (0, 1), got {eps}")))
    }
}

impl TestParams {
    /// `s` and `t` from the formulas; `s` is capped at `n` since anchors are
    /// distinct nodes.
    pub fn full(n: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let s = full_s(n, eps).min(n);
        Ok(TestParams {
            eps,
            s,
            t: full_t(n, s, eps),
            desk_override: false,
            root: 0,
        })
    }

    /// Small `s` for tractable enumeration; `t` defaults to the formula.
    pub fn desk(n: usize, eps: f64, s: usize, t: Option<usize>) -> Result<Self> {
        check_eps(eps)?;
        if s == 0 || s > n {
            return Err(Error::Input(format!("s = {s} outside 1..={n}")));
        }
        let t = t.unwrap_or_else(|| full_t(n, s, eps));
        if t == 0 {
            return Err(Error::Input("t must be positive".into()));
        }
        Ok(TestParams {
            eps,
            s,
            t,
            desk_override: true,
            root: 0,
        })
    }

    pub fn with_root(mut self, root: NodeId) -> Self {
        self.root = root;
        self
    }

    /// Largest mismatch count that still accepts: `(3 eps / 2) t`.
    pub fn threshold(&self) -> f64 {
        1.5 * self.eps * self.t as f64
    }
}

/// Sampled pairs, their adjacency bits in the network and the labels of
/// every node they touch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeSample {
    pub pairs: Vec<(NodeId, NodeId)>,
    pub answers: Vec<bool>,
    pub labels: BTreeMap<NodeId, LabelString>,
}

impl EdgeSample {
    /// `I`: endpoints of the sampled pairs.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.pairs.iter().flat_map(|&(i, j)| [i, j]).collect()
    }

    /// The same sample read straight off `g`.
    pub fn local(g: &Graph, c: &NodeSeq, pairs: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let all = labels(g, c)?;
        let answers = pairs.iter().map(|&(i, j)| g.has_edge(i, j)).collect();
        let labels = pairs
            .iter()
            .flat_map(|&(i, j)| [i, j])
            .map(|v| (v, all[v].clone()))
            .collect();
        Ok(EdgeSample { pairs, answers, labels })
    }
}

/// `t` pairs uniform over `V x V`, diagonal included.
pub fn draw_pairs<R: Rng + ?Sized>(n: usize, t: usize, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    (0..t).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
}

/// Everything the root holds once the network phases are over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootKnowledge {
    pub c: NodeSeq,
    /// Labels of `c_1..c_s` in the network.
    pub c_labels: Vec<LabelString>,
    /// `|S_C(l)|` in the network for every label that must be compared.
    pub class_sizes: BTreeMap<LabelString, usize>,
    pub sample: EdgeSample,
    /// Labels compared in the class-size step even if no sampled node has
    /// them.
    pub extra_labels: Vec<LabelString>,
}

impl RootKnowledge {
    /// Computed centrally from the network graph.
    pub fn local(gu: &Graph, c: &NodeSeq, pairs: Vec<(NodeId, NodeId)>, zero_check: bool) -> Result<Self> {
        let all = labels(gu, c)?;
        let sample = EdgeSample::local(gu, c, pairs)?;
        let zero = LabelString::zeros(c.len());
        let extra_labels = if zero_check { vec![zero] } else { Vec::new() };
        let mut class_sizes = BTreeMap::new();
        for l in sample.labels.values().chain(&extra_labels) {
            class_sizes
                .entry(l.clone())
                .or_insert_with(|| all.iter().filter(|x| *x == l).count());
        }
        Ok(RootKnowledge {
            c_labels: c.as_slice().iter().map(|&v| all[v].clone()).collect(),
            c: c.clone(),
            class_sizes,
            sample,
            extra_labels,
        })
    }
}

/// Result of trying one anchor image `P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Check {
    /// Some `c_i` and `p_i` carry different labels.
    LabelMismatch,
    /// Some compared label has classes of different sizes.
    ClassSize,
    /// `f` was drawn; `f` is its restriction to the sampled nodes.
    Scored {
        mismatches: usize,
        pass: bool,
        f: BTreeMap<NodeId, NodeId>,
    },
}

impl Check {
    pub fn passed(&self) -> bool {
        matches!(self, Check::Scored { pass: true, .. })
    }
}

/// One candidate `P`: label check on the anchors, class-size check on the
/// sampled labels, then a lazily drawn maximally consistent `f` scored on
/// the sampled pairs.
pub fn sequence_check<R: Rng + ?Sized>(
    gk: &Graph,
    know: &RootKnowledge,
    p: &NodeSeq,
    threshold: f64,
    rng: &mut R,
) -> Result<Check> {
    let s = know.c.len();
    if p.len() != s || know.c_labels.len() != s {
        return Err(Error::SizeMismatch { left: p.len(), right: s });
    }
    let k_labels = labels(gk, p)?;
    if (0..s).any(|i| know.c_labels[i] != k_labels[p.get(i)]) {
        return Ok(Check::LabelMismatch);
    }
    let mut k_classes: BTreeMap<&LabelString, Vec<NodeId>> = BTreeMap::new();
    for (u, l) in k_labels.iter().enumerate() {
        k_classes.entry(l).or_default().push(u);
    }
    let class_len = |l: &LabelString| k_classes.get(l).map_or(0, Vec::len);
    for l in know.sample.labels.values().chain(&know.extra_labels) {
        let Some(&size) = know.class_sizes.get(l) else {
            return Err(Error::Contract(format!("no class size for label {l}")));
        };
        if size != class_len(l) {
            return Ok(Check::ClassSize);
        }
    }
    let mut used = vec![false; gk.n()];
    let mut f: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for (i, &ci) in know.c.as_slice().iter().enumerate() {
        used[p.get(i)] = true;
        f.insert(ci, p.get(i));
    }
    for (&v, l) in &know.sample.labels {
        if f.contains_key(&v) {
            continue;
        }
        let free: Vec<NodeId> = k_classes[l].iter().copied().filter(|&u| !used[u]).collect();
        if free.is_empty() {
            return Err(Error::Contract(format!("label class {l} ran out of images")));
        }
        let u = free[rng.gen_range(0..free.len())];
        used[u] = true;
        f.insert(v, u);
    }
    let mismatches = know
        .sample
        .pairs
        .iter()
        .zip(&know.sample.answers)
        .filter(|&(&(i, j), &e)| i != j && e != gk.has_edge(f[&i], f[&j]))
        .count();
    Ok(Check::Scored {
        mismatches,
        pass: mismatches as f64 <= threshold,
        f,
    })
}

/// Ordered `s`-tuples of distinct nodes of `0..n` in lexicographic order.
/// With anchor labels given, only tuples whose induced adjacency agrees
/// with the labels are produced, pruning on every prefix.
pub struct Sequences<'a> {
    n: usize,
    s: usize,
    filter: Option<(&'a Graph, &'a [LabelString])>,
    stack: Vec<NodeId>,
    next: Vec<NodeId>,
    used: Vec<bool>,
    done: bool,
}

impl<'a> Sequences<'a> {
    fn fits(&self, d: usize, u: NodeId) -> bool {
        let Some((g, ls)) = self.filter else {
            return true;
        };
        !ls[d].get(d)
            && self
                .stack
                .iter()
                .enumerate()
                .all(|(j, &w)| ls[d].get(j) == g.has_edge(u, w) && ls[j].get(d) == g.has_edge(u, w))
    }
}

impl Iterator for Sequences<'_> {
    type Item = Vec<NodeId>;

    fn next(&mut self) -> Option<Vec<NodeId>> {
        loop {
            if self.done {
                return None;
            }
            let d = self.stack.len();
            if d == self.s {
                let out = self.stack.clone();
                match self.stack.pop() {
                    Some(last) => self.used[last] = false,
                    None => self.done = true,
                }
                return Some(out);
            }
            let mut u = self.next[d];
            while u < self.n && (self.used[u] || !self.fits(d, u)) {
                u += 1;
            }
            if u < self.n {
                self.next[d] = u + 1;
                self.stack.push(u);
                self.used[u] = true;
                if d + 1 < self.s {
                    self.next[d + 1] = 0;
                }
            } else if let Some(last) = self.stack.pop() {
                self.next[d] = 0;
                self.used[last] = false;
            } else {
                self.done = true;
            }
        }
    }
}

/// Every ordered `s`-tuple of distinct nodes of `gk`.
pub fn enumerate_sequences(gk: &Graph, s: usize) -> Result<Sequences<'static>> {
    sequences(gk.n(), s, None)
}

/// The tuples whose anchor labels can match `c_labels`.
pub fn enumerate_sequences_pruned<'a>(gk: &'a Graph, c_labels: &'a [LabelString]) -> Result<Sequences<'a>> {
    if c_labels.iter().any(|l| l.len() != c_labels.len()) {
        return Err(Error::Input("anchor labels must have one bit per anchor".into()));
    }
    sequences(gk.n(), c_labels.len(), Some((gk, c_labels)))
}

fn sequences<'a>(n: usize, s: usize, filter: Option<(&'a Graph, &'a [LabelString])>) -> Result<Sequences<'a>> {
    if s > n {
        return Err(Error::Input(format!("cannot pick {s} distinct nodes out of {n}")));
    }
    Ok(Sequences {
        n,
        s,
        filter,
        stack: Vec::with_capacity(s),
        next: vec![0; s + 1],
        used: vec![false; n],
        done: false,
    })
}

/// The stream `f` is drawn from when `P` is tried.
pub fn match_rng(seed: u64, p: &[NodeId]) -> crate::rng::StreamRng {
    let key: Vec<u64> = std::iter::once(TAG_MATCH).chain(p.iter().map(|&x| x as u64)).collect();
    keyed_rng(seed, &key)
}

/// The first accepted `P` and its `f`, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootSearch {
    pub accepted: Option<(NodeSeq, BTreeMap<NodeId, NodeId>)>,
    pub tried: usize,
}

/// Tries candidates in lexicographic order and stops at the first pass.
pub fn root_search(gk: &Graph, know: &RootKnowledge, threshold: f64, seed: u64, prune: bool) -> Result<RootSearch> {
    let n = gk.n();
    let seqs = if prune {
        enumerate_sequences_pruned(gk, &know.c_labels)?
    } else {
        enumerate_sequences(gk, know.c.len())?
    };
    let mut tried = 0;
    for p in seqs {
        tried += 1;
        let mut rng = match_rng(seed, &p);
        let p = NodeSeq::new(p, n)?;
        if let Check::Scored { pass: true, f, .. } = sequence_check(gk, know, &p, threshold, &mut rng)? {
            return Ok(RootSearch {
                accepted: Some((p, f)),
                tried,
            });
        }
    }
    Ok(RootSearch { accepted: None, tried })
}

/// State shared with the approximate-isomorphism protocol, which runs the
/// same phases and continues on the network.
pub(crate) struct TesterRun {
    pub tree: BfsTree,
    pub neighbor_labels: Vec<Vec<LabelString>>,
    pub know: RootKnowledge,
    pub zero_count: usize,
    pub search: RootSearch,
    pub restarts: usize,
}

pub(crate) fn tester_phases(
    net: &mut Network<'_>,
    gk: &Graph,
    params: &TestParams,
    zero_check: bool,
) -> Result<TesterRun> {
    let n = net.n();
    if gk.n() != n {
        return Err(Error::SizeMismatch { left: n, right: gk.n() });
    }
    if params.root >= n {
        return Err(Error::NodeOutOfRange { node: params.root, n });
    }
    let seed = net.config().seed;
    let idw = id_bits(n);
    let tree = build_bfs(net, params.root)?;

    let election = elect_random_nodes(net, &tree, params.s, None)?;
    let ids: Vec<u64> = election.seq.iter().map(|&v| v as u64).collect();
    let heard = broadcast_values(net, &tree, &ids, idw)?;
    debug_assert!(heard.iter().all(|h| *h == ids));
    let c = NodeSeq::new(election.seq.clone(), n)?;
    let neighbor_labels = exchange_labels(net, &c)?;
    let own: Vec<LabelString> = (0..n).map(|v| local_label(net.ports(v), &c)).collect();

    let pairs = draw_pairs(n, params.t, &mut keyed_rng(seed, &[TAG_SAMPLE, params.root as u64]));
    let flat: Vec<u64> = pairs.iter().flat_map(|&(i, j)| [i as u64, j as u64]).collect();
    broadcast_values(net, &tree, &flat, idw)?;

    let kw = width_for(params.t.saturating_sub(1) as u64);
    let items: Vec<Vec<BitString>> = (0..n)
        .map(|v| {
            pairs
                .iter()
                .enumerate()
                .filter(|(_, &(i, _))| i == v)
                .map(|(k, &(_, j))| {
                    let mut it = BitString::from_uint(k as u64, kw);
                    it.push_bit(net.ports(v).contains(&j));
                    it
                })
                .collect()
        })
        .collect();
    let mut answers = vec![None; params.t];
    for it in pipelined_collect(net, &tree, items, kw + 1)? {
        let mut r = it.reader();
        let k = r.read_uint(kw).expect("index") as usize;
        answers[k] = r.read_bit();
    }
    let answers = answers
        .into_iter()
        .map(|a| a.ok_or_else(|| Error::Abort("a sampled pair went unanswered".into())))
        .collect::<Result<Vec<bool>>>()?;

    let mut in_i = vec![false; n];
    for &(i, j) in &pairs {
        in_i[i] = true;
        in_i[j] = true;
    }
    let flagged: Vec<bool> = (0..n).map(|v| in_i[v] || c.position(v).is_some()).collect();
    let collected = collect_labels(net, &tree, &c, &flagged)?;
    let queries: Vec<bool> = (0..n).map(|v| in_i[v] && !own[v].is_zero()).collect();
    let sizes = label_class_sizes(net, &tree, &c, &neighbor_labels, &queries)?;
    let zero_count = count_zero_label(net, &tree, &own)?;

    let mut class_sizes = BTreeMap::new();
    for (rep, size) in sizes {
        let l = collected
            .get(&rep)
            .ok_or_else(|| Error::Abort(format!("no label collected for node {rep}")))?;
        class_sizes.insert(l.clone(), size);
    }
    let zero = LabelString::zeros(c.len());
    class_sizes.insert(zero.clone(), zero_count);
    let sample = EdgeSample {
        labels: in_i
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(v, _)| (v, collected[&v].clone()))
            .collect(),
        pairs,
        answers,
    };
    let know = RootKnowledge {
        c_labels: c.as_slice().iter().map(|v| collected[v].clone()).collect(),
        c,
        class_sizes,
        sample,
        extra_labels: if zero_check { vec![zero] } else { Vec::new() },
    };
    let search = root_search(gk, &know, params.threshold(), seed, true)?;
    Ok(TesterRun {
        tree,
        neighbor_labels,
        know,
        zero_count,
        search,
        restarts: election.restarts,
    })
}

#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub accept: bool,
    pub params: TestParams,
    pub c: NodeSeq,
    pub p: Option<NodeSeq>,
    pub sample: EdgeSample,
    /// Distinct labels among the sampled nodes.
    pub sampled_labels: usize,
    pub sequences_tried: usize,
    pub election_restarts: usize,
    pub depth: usize,
    pub transcript: Transcript,
}

impl TestOutcome {
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "verdict": if self.accept { ACCEPT } else { REJECT },
            "rounds": self.transcript.rounds,
            "bits": self.transcript.total_bits,
            "s": self.params.s,
            "t": self.params.t,
            "sequences_tried": self.sequences_tried,
        })
        .to_string()
    }
}

/// The tester end to end; every node outputs the root's verdict.
pub fn run_tester(topology: &Graph, gk: &Graph, params: &TestParams, cfg: NetworkConfig) -> Result<TestOutcome> {
    let mut net = Network::new(topology, cfg)?;
    let run = tester_phases(&mut net, gk, params, false)?;
    let accept = run.search.accepted.is_some();
    broadcast_values(&mut net, &run.tree, &[accept as u64], 1)?;
    for v in 0..topology.n() {
        net.set_output(v, if accept { ACCEPT } else { REJECT });
    }
    let sampled_labels = run.know.sample.labels.values().collect::<BTreeSet<_>>().len();
    Ok(TestOutcome {
        accept,
        params: params.clone(),
        p: run.search.accepted.map(|(p, _)| p),
        c: run.know.c,
        sample: run.know.sample,
        sampled_labels,
        sequences_tried: run.search.tried,
        election_restarts: run.restarts,
        depth: run.tree.depth(),
        transcript: net.into_transcript(),
    })
}

#[cfg(test)]
mod tests;
