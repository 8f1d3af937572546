//! Tree-based building blocks run on a [`Network`]: BFS, pipelined
//! broadcast and collection, convergecast, random node election, label
//! exchange, label-class counting and interval numbering.
//!
//! Each driver builds one program per node from that node's own inputs,
//! runs a single phase and reads back the per-node results.

mod programs;

use std::collections::BTreeMap;

use programs::{Bfs, ClassSize, Converge, Elect, Exchange, Split, Stream, Up};

use crate::error::{Error, Result};
use crate::graph::{LabelString, NodeId, NodeSeq};
use crate::sim::{fragment, reassemble, width_for, BitString, Network};

/// Header bits in front of every label fragment.
pub const FRAGMENT_HEADER: usize = 8;

/// What one node knows about the BFS tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub layer: usize,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BfsTree {
    pub root: NodeId,
    pub nodes: Vec<TreeNode>,
}

impl BfsTree {
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|t| t.layer).max().unwrap_or(0)
    }

    pub fn node(&self, v: NodeId) -> &TreeNode {
        &self.nodes[v]
    }

    pub fn parent_id(&self, net: &Network<'_>, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent.map(|p| net.ports(v)[p])
    }
}

/// Layout of a message carrying up to `cap` fixed-width items, behind an
/// optional one-bit flag and an item count.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Packing {
    pub width: usize,
    pub count_bits: usize,
    pub cap: usize,
    pub flag: bool,
}

impl Packing {
    pub(crate) fn new(bandwidth: usize, width: usize, flag: bool) -> Result<Self> {
        if width == 0 {
            return Err(Error::Input("items must be at least one bit wide".into()));
        }
        if bandwidth == usize::MAX {
            return Ok(Packing {
                width,
                count_bits: 32,
                cap: u32::MAX as usize,
                flag,
            });
        }
        let count_bits = width_for(bandwidth as u64);
        let room = bandwidth.saturating_sub(count_bits + flag as usize);
        let cap = room / width;
        if cap == 0 {
            return Err(Error::Input(format!(
                "a {width}-bit item does not fit a {bandwidth}-bit message"
            )));
        }
        Ok(Packing {
            width,
            count_bits,
            cap,
            flag,
        })
    }

    pub(crate) fn encode(&self, flag: bool, items: &[BitString]) -> BitString {
        debug_assert!(items.len() <= self.cap);
        let mut m = BitString::new();
        if self.flag {
            m.push_bit(flag);
        }
        m.push_uint(items.len() as u64, self.count_bits);
        for it in items {
            debug_assert_eq!(it.len(), self.width);
            m.extend_from(it);
        }
        m
    }

    pub(crate) fn decode(&self, msg: &BitString) -> (bool, Vec<BitString>) {
        let mut r = msg.reader();
        let flag = self.flag && r.read_bit().unwrap_or(false);
        let count = r.read_uint(self.count_bits).unwrap_or(0) as usize;
        let items = (0..count)
            .map_while(|_| r.read_bits(self.width))
            .collect();
        (flag, items)
    }
}

pub(crate) fn id_bits(n: usize) -> usize {
    width_for(n.saturating_sub(1) as u64)
}

fn check_len(what: &str, got: usize, n: usize) -> Result<()> {
    if got == n {
        Ok(())
    } else {
        Err(Error::Input(format!("{what}: expected {n} per-node entries, got {got}")))
    }
}

/// BFS tree from `root`: every node learns its parent port, layer and children.
pub fn build_bfs(net: &mut Network<'_>, root: NodeId) -> Result<BfsTree> {
    let n = net.n();
    if root >= n {
        return Err(Error::NodeOutOfRange { node: root, n });
    }
    let bits = width_for(n as u64);
    let mut progs: Vec<Bfs> = (0..n).map(|v| Bfs::new(v == root, bits)).collect();
    net.run_phase("bfs", &mut progs)?;
    let nodes = progs
        .into_iter()
        .map(|p| p.node.expect("every node joins once the phase ends"))
        .collect();
    Ok(BfsTree { root, nodes })
}

/// Streams `payload` from the root to every node. Its length is public, so
/// messages carry payload bits only. Returns the bits each node holds.
pub fn broadcast(net: &mut Network<'_>, tree: &BfsTree, payload: &BitString) -> Result<Vec<BitString>> {
    let len = payload.len();
    let mut progs: Vec<Stream> = (0..net.n())
        .map(|v| {
            let own = (v == tree.root).then(|| payload.clone());
            Stream::new(tree.nodes[v].clone(), len, own)
        })
        .collect();
    net.run_phase("broadcast", &mut progs)?;
    Ok(progs.into_iter().map(|p| p.received).collect())
}

/// [`broadcast`] of `width`-bit integers.
pub fn broadcast_values(
    net: &mut Network<'_>,
    tree: &BfsTree,
    values: &[u64],
    width: usize,
) -> Result<Vec<Vec<u64>>> {
    if width == 0 || width > 64 {
        return Err(Error::Input(format!("value width {width} outside 1..=64")));
    }
    let mut payload = BitString::new();
    for &v in values {
        if width < 64 && v >> width != 0 {
            return Err(Error::Input(format!("{v} does not fit {width} bits")));
        }
        payload.push_uint(v, width);
    }
    let held = broadcast(net, tree, &payload)?;
    Ok(held
        .into_iter()
        .map(|b| {
            let mut r = b.reader();
            (0..values.len()).map(|_| r.read_uint(width).unwrap()).collect()
        })
        .collect())
}

/// Gathers every node's `width`-bit items at the root by pipelining.
pub fn pipelined_collect(
    net: &mut Network<'_>,
    tree: &BfsTree,
    items: Vec<Vec<BitString>>,
    width: usize,
) -> Result<Vec<BitString>> {
    check_len("pipelined_collect", items.len(), net.n())?;
    if items.iter().flatten().any(|i| i.len() != width) {
        return Err(Error::Input(format!("every item must be {width} bits")));
    }
    let pack = Packing::new(net.bandwidth(), width, true)?;
    let mut progs: Vec<Up> = items
        .into_iter()
        .enumerate()
        .map(|(v, own)| Up::new(tree.nodes[v].clone(), pack, own))
        .collect();
    net.run_phase("collect", &mut progs)?;
    Ok(std::mem::take(&mut progs[tree.root].collected))
}

/// Result of a vector convergecast.
#[derive(Clone, Debug)]
pub struct Convergecast {
    /// Coordinate-wise totals at the root.
    pub totals: Vec<u64>,
    /// `per_child[v][i]`: the partial sums node `v` received from its `i`-th child.
    pub per_child: Vec<Vec<Vec<u64>>>,
}

/// Coordinate-wise sums of equal-length vectors, pipelined up the tree.
/// With `moduli`, coordinate `t` is reduced modulo `moduli[t]` at every hop.
pub fn convergecast(
    net: &mut Network<'_>,
    tree: &BfsTree,
    values: Vec<Vec<u64>>,
    width: usize,
    moduli: Option<&[u64]>,
) -> Result<Convergecast> {
    let n = net.n();
    check_len("convergecast", values.len(), n)?;
    let k = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != k) || moduli.is_some_and(|m| m.len() != k) {
        return Err(Error::Input("convergecast vectors must share one length".into()));
    }
    let pack = Packing::new(net.bandwidth(), width, false)?;
    let mut progs: Vec<Converge> = values
        .into_iter()
        .enumerate()
        .map(|(v, mut own)| {
            if let Some(m) = moduli {
                own.iter_mut().zip(m).for_each(|(x, p)| *x %= p);
            }
            Converge::new(tree.nodes[v].clone(), pack, own, moduli.map(<[u64]>::to_vec))
        })
        .collect();
    net.run_phase("convergecast", &mut progs)?;
    let totals = progs[tree.root].acc.clone();
    Ok(Convergecast {
        totals,
        per_child: progs.into_iter().map(|p| p.from_children).collect(),
    })
}

/// Sum of one value per node at the root, optionally modulo `modulus`.
/// Partial sums travel with enough bits for `n * max(values)`.
pub fn convergecast_sum(
    net: &mut Network<'_>,
    tree: &BfsTree,
    values: &[u64],
    modulus: Option<u64>,
) -> Result<u64> {
    let n = net.n();
    check_len("convergecast_sum", values.len(), n)?;
    let width = match modulus {
        Some(0) => return Err(Error::Input("modulus must be positive".into())),
        Some(p) => width_for(p - 1),
        None => {
            let max = values.iter().copied().max().unwrap_or(0);
            width_for(max.saturating_mul(n as u64))
        }
    };
    let moduli = modulus.map(|p| vec![p]);
    let vals = values.iter().map(|&x| vec![x]).collect();
    let out = convergecast(net, tree, vals, width, moduli.as_deref())?;
    Ok(out.totals[0])
}

/// Outcome of [`elect_random_nodes`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Election {
    /// Elected ids, highest draw first.
    pub seq: Vec<NodeId>,
    /// Number of reruns caused by tied draws.
    pub restarts: usize,
    /// Range exponent used: draws are uniform in `[0, n^(c+2))`.
    pub c: u32,
}

/// Largest `c <= 2` whose `(number, id)` item fits one message.
pub fn election_exponent(n: usize, bandwidth: usize) -> Option<u32> {
    (0..=2u32).rev().find(|&c| {
        let Some(range) = (n as u64).checked_pow(c + 2) else {
            return false;
        };
        let width = width_for(range.saturating_sub(1)) + id_bits(n);
        Packing::new(bandwidth, width, true).is_ok()
    })
}

const MAX_ELECTION_RESTARTS: usize = 64;

/// Each node draws a number in `[n^(c+2)]`; the root learns the ids of the
/// `s` highest draws. A tie among the top draws reruns the phase.
pub fn elect_random_nodes(
    net: &mut Network<'_>,
    tree: &BfsTree,
    s: usize,
    c: Option<u32>,
) -> Result<Election> {
    let n = net.n();
    if s > n {
        return Err(Error::Input(format!("cannot elect {s} of {n} nodes")));
    }
    let c = match c {
        Some(c) => c,
        None => election_exponent(n, net.bandwidth()).ok_or_else(|| {
            Error::Input(format!("bandwidth {} too small for election", net.bandwidth()))
        })?,
    };
    let range = (n as u64)
        .checked_pow(c + 2)
        .ok_or_else(|| Error::Input(format!("n^{} overflows", c + 2)))?;
    let num_bits = width_for(range.saturating_sub(1));
    let idw = id_bits(n);
    let pack = Packing::new(net.bandwidth(), num_bits + idw, true)?;
    let keep = (s + 1).min(n);
    for restarts in 0..MAX_ELECTION_RESTARTS {
        let mut progs: Vec<Elect> = (0..n)
            .map(|v| Elect::new(tree.nodes[v].clone(), pack, range, num_bits, idw, keep))
            .collect();
        net.run_phase("election", &mut progs)?;
        let top: Vec<_> = progs[tree.root].known.iter().take(keep).copied().collect();
        let tied = top.windows(2).any(|w| w[0].0 == w[1].0);
        if !tied {
            return Ok(Election {
                seq: top.iter().take(s).map(|&(_, id)| id).collect(),
                restarts,
                c,
            });
        }
    }
    Err(Error::Abort(format!(
        "election tied {MAX_ELECTION_RESTARTS} times in a row"
    )))
}

/// Each node computes its C-label from its neighbor ids and sends it,
/// fragmented, to every neighbor. Returns `labels[v][port]`.
pub fn exchange_labels(net: &mut Network<'_>, c: &NodeSeq) -> Result<Vec<Vec<LabelString>>> {
    let n = net.n();
    let s = c.len();
    let b = net.bandwidth();
    if b <= FRAGMENT_HEADER {
        return Err(Error::Input("bandwidth too small for label fragments".into()));
    }
    let mut progs: Vec<Exchange> = (0..n)
        .map(|v| {
            let label = local_label(net.ports(v), c);
            Exchange::new(fragment(&label_bits(&label), b, FRAGMENT_HEADER), net.ports(v).len())
        })
        .collect();
    net.run_phase("label-exchange", &mut progs)?;
    Ok(progs
        .into_iter()
        .map(|p| {
            p.got
                .iter()
                .map(|frags| bits_label(&reassemble(frags, FRAGMENT_HEADER), s))
                .collect()
        })
        .collect())
}

/// A node's C-label from its own neighbor list.
pub fn local_label(neighbors: &[NodeId], c: &NodeSeq) -> LabelString {
    let mut l = LabelString::zeros(c.len());
    for (i, ci) in c.as_slice().iter().enumerate() {
        if neighbors.contains(ci) {
            l.set(i, true);
        }
    }
    l
}

pub(crate) fn label_bits(l: &LabelString) -> BitString {
    let mut b = BitString::new();
    for i in 0..l.len() {
        b.push_bit(l.get(i));
    }
    b
}

pub(crate) fn bits_label(b: &BitString, s: usize) -> LabelString {
    let mut l = LabelString::zeros(s);
    for i in 0..s.min(b.len()) {
        l.set(i, b.get(i));
    }
    l
}

/// `|S_C(0...0)|` at the root, by a layered sum.
pub fn count_zero_label(net: &mut Network<'_>, tree: &BfsTree, labels: &[LabelString]) -> Result<usize> {
    check_len("count_zero_label", labels.len(), net.n())?;
    let flags: Vec<u64> = labels.iter().map(|l| l.is_zero() as u64).collect();
    let n = net.n() as u64;
    let width = width_for(n);
    let vals = flags.into_iter().map(|x| vec![x]).collect();
    let out = convergecast(net, tree, vals, width, None)?;
    Ok(out.totals[0] as usize)
}

/// Sizes of the label classes of every querying node's label, counted by
/// the coordinator `c_msb(label)` and collected at the root. Returns
/// `(representative, size)` pairs; the representative is the smallest
/// querying node that carries the label.
pub fn label_class_sizes(
    net: &mut Network<'_>,
    tree: &BfsTree,
    c: &NodeSeq,
    neighbor_labels: &[Vec<LabelString>],
    queries: &[bool],
) -> Result<Vec<(NodeId, usize)>> {
    let n = net.n();
    check_len("label_class_sizes", queries.len(), n)?;
    check_len("label_class_sizes", neighbor_labels.len(), n)?;
    let idw = id_bits(n);
    let cw = width_for(n as u64);
    let pack = Packing::new(net.bandwidth(), idw + cw, true)?;
    let mut progs = Vec::with_capacity(n);
    for v in 0..n {
        let coordinator_port = if queries[v] {
            let own = local_label(net.ports(v), c);
            let Some(i) = own.msb() else {
                return Err(Error::Contract(format!(
                    "node {v} has the all-zero label; use count_zero_label"
                )));
            };
            net.ports(v).iter().position(|&w| w == c.get(i - 1))
        } else {
            None
        };
        let up = Up::new(tree.nodes[v].clone(), pack, Vec::new());
        progs.push(ClassSize::new(
            coordinator_port,
            neighbor_labels[v].clone(),
            idw,
            cw,
            up,
        ));
    }
    net.run_phase("class-size", &mut progs)?;
    let mut out: Vec<(NodeId, usize)> = progs[tree.root]
        .up
        .collected
        .iter()
        .map(|b| {
            let mut r = b.reader();
            let rep = r.read_uint(idw).unwrap() as NodeId;
            (rep, r.read_uint(cw).unwrap() as usize)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Gathers the labels of the flagged nodes at the root, each split into
/// `(id, part, chunk)` items so that long labels fit the bandwidth.
pub fn collect_labels(
    net: &mut Network<'_>,
    tree: &BfsTree,
    c: &NodeSeq,
    flagged: &[bool],
) -> Result<BTreeMap<NodeId, LabelString>> {
    let n = net.n();
    check_len("collect_labels", flagged.len(), n)?;
    let s = c.len();
    let idw = id_bits(n);
    let b = net.bandwidth();
    // grow the chunk until it fits next to the id and part index
    let mut chunk = s.max(1);
    let pack = loop {
        let parts = s.div_ceil(chunk).max(1);
        let width = idw + width_for(parts as u64 - 1) + chunk;
        match Packing::new(b, width, true) {
            Ok(p) => break p,
            Err(_) if chunk > 1 => chunk = chunk.div_ceil(2),
            Err(e) => return Err(e),
        }
    };
    let parts = s.div_ceil(chunk).max(1);
    let pw = width_for(parts as u64 - 1);
    let items: Vec<Vec<BitString>> = (0..n)
        .map(|v| {
            if !flagged[v] {
                return Vec::new();
            }
            let bits = label_bits(&local_label(net.ports(v), c));
            (0..parts)
                .map(|k| {
                    let mut it = BitString::from_uint(v as u64, idw);
                    it.push_uint(k as u64, pw);
                    for i in k * chunk..(k + 1) * chunk {
                        it.push_bit(i < s && bits.get(i));
                    }
                    it
                })
                .collect()
        })
        .collect();
    let got = pipelined_collect(net, tree, items, pack.width)?;
    let mut out: BTreeMap<NodeId, LabelString> = BTreeMap::new();
    for it in got {
        let mut r = it.reader();
        let v = r.read_uint(idw).unwrap() as NodeId;
        let k = r.read_uint(pw).unwrap() as usize;
        let label = out.entry(v).or_insert_with(|| LabelString::zeros(s));
        for i in k * chunk..(k + 1) * chunk {
            let bit = r.read_bit().unwrap();
            if i < s {
                label.set(i, bit);
            }
        }
    }
    Ok(out)
}

/// Every member learns a distinct index in `1..=|members|`: subtree counts
/// are summed upward, then the root splits the interval downward.
pub fn assign_unique_numbers(
    net: &mut Network<'_>,
    tree: &BfsTree,
    members: &[bool],
) -> Result<Vec<Option<usize>>> {
    Ok(number_nodes(net, tree, members, false)?.0)
}

/// [`assign_unique_numbers`] where each node also learns its neighbors'
/// indices, `heard[v][port]`, in the same downward pass.
pub fn assign_and_share_numbers(
    net: &mut Network<'_>,
    tree: &BfsTree,
    members: &[bool],
) -> Result<(Vec<Option<usize>>, Vec<Vec<Option<usize>>>)> {
    number_nodes(net, tree, members, true)
}

type Numbering = (Vec<Option<usize>>, Vec<Vec<Option<usize>>>);

fn number_nodes(net: &mut Network<'_>, tree: &BfsTree, members: &[bool], share: bool) -> Result<Numbering> {
    let n = net.n();
    check_len("assign_unique_numbers", members.len(), n)?;
    let width = width_for(n as u64 + 1);
    let vals = members.iter().map(|&m| vec![m as u64]).collect();
    let counts = convergecast(net, tree, vals, width, None)?;
    let mut progs: Vec<Split> = (0..n)
        .map(|v| {
            let child_counts = counts.per_child[v].iter().map(|c| c[0]).collect();
            let share = share.then(|| net.ports(v).len());
            Split::new(tree.nodes[v].clone(), members[v], child_counts, width, share)
        })
        .collect();
    net.run_phase("numbering", &mut progs)?;
    let index = progs.iter().map(|p| p.index.map(|i| i as usize)).collect();
    let heard = progs
        .iter()
        .map(|p| {
            p.heard
                .iter()
                .map(|h| h.and_then(|x| (x > 0).then_some(x as usize)))
                .collect()
        })
        .collect();
    Ok((index, heard))
}
