use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Bijection, Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, TAG_CLASS};

/// An ordered sequence of anchor nodes `(c_1, ..., c_s)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSeq(Vec<NodeId>);

impl NodeSeq {
    /// Distinct nodes, all below `n`.
    pub fn new(nodes: Vec<NodeId>, n: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for &v in &nodes {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n });
            }
            if !seen.insert(v) {
                return Err(Error::Input(format!("node {v} repeated in sequence")));
            }
        }
        Ok(NodeSeq(nodes))
    }

    /// A sequence drawn with replacement. Labels are still well defined;
    /// only the separation oracle uses these.
    pub fn with_repeats(nodes: Vec<NodeId>, n: usize) -> Result<Self> {
        if let Some(&v) = nodes.iter().find(|&&v| v >= n) {
            return Err(Error::NodeOutOfRange { node: v, n });
        }
        Ok(NodeSeq(nodes))
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

    pub fn get(&self, i: usize) -> NodeId {
        self.0[i]
    }

    /// `f(C)`.
    pub fn map(&self, f: &Bijection) -> NodeSeq {
        NodeSeq(self.0.iter().map(|&v| f.apply(v)).collect())
    }

    /// Index of `v` in the sequence, if present.
    pub fn position(&self, v: NodeId) -> Option<usize> {
        self.0.iter().position(|&c| c == v)
    }
}

/// The C-label of a node: bit `i` (stored 0-indexed) is set iff the node
/// is adjacent to `c_{i+1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelString {
    len: usize,
    words: Vec<u64>,
}

impl LabelString {
    pub fn zeros(len: usize) -> Self {
        LabelString {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut l = LabelString::zeros(len);
        for i in 0..len {
            l.set(i, true);
        }
        l
    }

    /// Parses `"0110"`; the first character is bit 0 (`c_1`).
    pub fn from_bits(bits: &str) -> Result<Self> {
        let mut l = LabelString::zeros(bits.len());
        for (i, ch) in bits.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => l.set(i, true),
                _ => return Err(Error::Input(format!("bad label character {ch:?}"))),
            }
        }
        Ok(l)
    }

    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(len.div_ceil(64), 0);
        if len % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        LabelString { len, words }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "label bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Largest 1-indexed `i` with bit `i` set; `None` for the all-zero label.
    pub fn msb(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(k, &w)| k * 64 + (63 - w.leading_zeros() as usize) + 1)
    }

    pub(crate) fn key(&self) -> Vec<u64> {
        let mut k = Vec::with_capacity(self.words.len() + 2);
        k.push(TAG_CLASS);
        k.push(self.len as u64);
        k.extend_from_slice(&self.words);
        k
    }
}

impl fmt::Display for LabelString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for LabelString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LabelString({self})")
    }
}

fn label_unchecked(g: &Graph, c: &[NodeId], v: NodeId) -> LabelString {
    let mut l = LabelString::zeros(c.len());
    for (i, &ci) in c.iter().enumerate() {
        if g.has_edge(v, ci) {
            l.set(i, true);
        }
    }
    l
}

fn check_seq(g: &Graph, c: &NodeSeq) -> Result<()> {
    c.as_slice().iter().try_for_each(|&v| g.check_node(v))
}

pub fn c_label(g: &Graph, c: &NodeSeq, v: NodeId) -> Result<LabelString> {
    g.check_node(v)?;
    check_seq(g, c)?;
    Ok(label_unchecked(g, c.as_slice(), v))
}

/// Labels of every node, indexed by node id.
pub fn labels(g: &Graph, c: &NodeSeq) -> Result<Vec<LabelString>> {
    check_seq(g, c)?;
    Ok((0..g.n())
        .map(|v| label_unchecked(g, c.as_slice(), v))
        .collect())
}

/// `S^G_C(x)`, ascending.
pub fn label_class(g: &Graph, c: &NodeSeq, x: &LabelString) -> Result<Vec<NodeId>> {
    if x.len() != c.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: c.len(),
        });
    }
    check_seq(g, c)?;
    Ok((0..g.n())
        .filter(|&v| &label_unchecked(g, c.as_slice(), v) == x)
        .collect())
}

/// All nonempty label classes; together they partition the node set.
pub fn label_classes(g: &Graph, c: &NodeSeq) -> Result<BTreeMap<LabelString, Vec<NodeId>>> {
    let mut classes: BTreeMap<LabelString, Vec<NodeId>> = BTreeMap::new();
    for (v, l) in labels(g, c)?.into_iter().enumerate() {
        classes.entry(l).or_default().push(v);
    }
    Ok(classes)
}

/// Brute force over all pairs: every pair whose neighborhoods differ in at
/// least `beta * n` nodes must carry different labels.
pub fn is_beta_separating(g: &Graph, c: &NodeSeq, beta: f64) -> Result<bool> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Input(format!("beta must lie in (0, 1], got {beta}")));
    }
    let ls = labels(g, c)?;
    let threshold = beta * g.n() as f64 - 1e-9;
    for u in 0..g.n() {
        for v in u + 1..g.n() {
            if ls[u] != ls[v] {
                continue;
            }
            let diff: u32 = g
                .row(u)
                .iter()
                .zip(g.row(v))
                .map(|(a, b)| (a ^ b).count_ones())
                .sum();
            if diff as f64 >= threshold {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `f` maps `cg` onto `ch` pointwise and preserves every node's label.
pub fn is_label_consistent(
    f: &Bijection,
    g: &Graph,
    h: &Graph,
    cg: &NodeSeq,
    ch: &NodeSeq,
) -> Result<bool> {
    if g.n() != h.n() {
        return Err(Error::SizeMismatch {
            left: g.n(),
            right: h.n(),
        });
    }
    if f.len() != g.n() {
        return Err(Error::SizeMismatch {
            left: f.len(),
            right: g.n(),
        });
    }
    if cg.len() != ch.len() {
        return Err(Error::SizeMismatch {
            left: cg.len(),
            right: ch.len(),
        });
    }
    check_seq(g, cg)?;
    check_seq(h, ch)?;
    if cg
        .as_slice()
        .iter()
        .zip(ch.as_slice())
        .any(|(&a, &b)| f.apply(a) != b)
    {
        return Ok(false);
    }
    Ok((0..g.n()).all(|v| {
        label_unchecked(g, cg.as_slice(), v) == label_unchecked(h, ch.as_slice(), f.apply(v))
    }))
}

/// Matches `domain` onto `codomain` (equal lengths) by a uniform shuffle of
/// the codomain, drawn from a stream keyed by `(class_seed, label)`.
/// Two callers sharing the class seed produce the same matching for a class.
pub(crate) fn class_matching(
    domain: &[NodeId],
    codomain: &[NodeId],
    class_seed: u64,
    label: &LabelString,
) -> Vec<(NodeId, NodeId)> {
    debug_assert_eq!(domain.len(), codomain.len());
    let mut targets = codomain.to_vec();
    targets.shuffle(&mut keyed_rng(class_seed, &label.key()));
    domain.iter().copied().zip(targets).collect()
}

/// Draws `f` uniformly from the maximally `(c, p)`-label-consistent
/// bijections `g -> h`.
pub fn sample_max_consistent<R: Rng + ?Sized>(
    g: &Graph,
    h: &Graph,
    c: &NodeSeq,
    p: &NodeSeq,
    rng: &mut R,
) -> Result<Bijection> {
    let class_seed = rng.gen();
    sample_max_consistent_keyed(g, h, c, p, class_seed, rng)
}

/// As [`sample_max_consistent`], with each equal-size class matched from a
/// stream keyed by `class_seed` and the residual drawn from `rng`.
pub fn sample_max_consistent_keyed<R: Rng + ?Sized>(
    g: &Graph,
    h: &Graph,
    c: &NodeSeq,
    p: &NodeSeq,
    class_seed: u64,
    rng: &mut R,
) -> Result<Bijection> {
    if g.n() != h.n() {
        return Err(Error::SizeMismatch {
            left: g.n(),
            right: h.n(),
        });
    }
    if c.len() != p.len() {
        return Err(Error::SizeMismatch {
            left: c.len(),
            right: p.len(),
        });
    }
    let lg = labels(g, c)?;
    let lh = labels(h, p)?;
    for (i, (&ci, &pi)) in c.as_slice().iter().zip(p.as_slice()).enumerate() {
        if lg[ci] != lh[pi] {
            return Err(Error::Precondition(format!(
                "anchor {} has label {} but its image has {}",
                i + 1,
                lg[ci],
                lh[pi]
            )));
        }
    }
    let mut gclasses: BTreeMap<&LabelString, Vec<NodeId>> = BTreeMap::new();
    for (v, l) in lg.iter().enumerate() {
        gclasses.entry(l).or_default().push(v);
    }
    let mut hclasses: BTreeMap<&LabelString, Vec<NodeId>> = BTreeMap::new();
    for (u, l) in lh.iter().enumerate() {
        hclasses.entry(l).or_default().push(u);
    }

    let n = g.n();
    let mut map = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (&ci, &pi) in c.as_slice().iter().zip(p.as_slice()) {
        map[ci] = pi;
        taken[pi] = true;
    }
    for (label, dom) in &gclasses {
        let Some(cod) = hclasses.get(label) else {
            continue;
        };
        if cod.len() != dom.len() {
            continue;
        }
        let dom: Vec<NodeId> = dom.iter().copied().filter(|&v| map[v] == usize::MAX).collect();
        let cod: Vec<NodeId> = cod.iter().copied().filter(|&u| !taken[u]).collect();
        for (v, u) in class_matching(&dom, &cod, class_seed, label) {
            map[v] = u;
            taken[u] = true;
        }
    }
    let rest_dom: Vec<NodeId> = (0..n).filter(|&v| map[v] == usize::MAX).collect();
    let mut rest_cod: Vec<NodeId> = (0..n).filter(|&u| !taken[u]).collect();
    rest_cod.shuffle(rng);
    for (v, u) in rest_dom.into_iter().zip(rest_cod) {
        map[v] = u;
    }
    Bijection::new(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_rng;
    use std::collections::HashMap;

    fn seq(v: &[NodeId], n: usize) -> NodeSeq {
        NodeSeq::new(v.to_vec(), n).unwrap()
    }

    #[test]
    fn label_of_universal_and_isolated_nodes() {
        let mut g = Graph::star(5);
        g.add_edge(1, 2).unwrap();
        let c = seq(&[1, 2, 3], 5);
        assert_eq!(c_label(&g, &c, 0).unwrap(), LabelString::ones(3));
        let e = Graph::empty(4);
        assert_eq!(c_label(&e, &seq(&[0, 1], 4), 3).unwrap(), LabelString::zeros(2));
    }

    #[test]
    fn labels_on_a_path() {
        let g = Graph::path(3);
        let c = seq(&[0, 2], 3);
        assert_eq!(c_label(&g, &c, 1).unwrap().to_string(), "11");
        assert_eq!(c_label(&g, &c, 0).unwrap().to_string(), "00");
        assert!(c_label(&g, &c, 3).is_err());
    }

    #[test]
    fn classes_of_k4_and_empty_graph() {
        let g = Graph::complete(4);
        let c = seq(&[0], 4);
        let one = LabelString::from_bits("1").unwrap();
        let zero = LabelString::from_bits("0").unwrap();
        assert_eq!(label_class(&g, &c, &one).unwrap(), vec![1, 2, 3]);
        assert_eq!(label_class(&g, &c, &zero).unwrap(), vec![0]);
        assert!(label_class(&g, &c, &LabelString::zeros(2)).is_err());
        let e = Graph::empty(5);
        let c = seq(&[1, 3], 5);
        assert_eq!(
            label_class(&e, &c, &LabelString::zeros(2)).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn msb_is_one_indexed() {
        assert_eq!(LabelString::from_bits("0110").unwrap().msb(), Some(3));
        assert_eq!(LabelString::from_bits("1").unwrap().msb(), Some(1));
        assert_eq!(LabelString::zeros(70).msb(), None);
        let mut l = LabelString::zeros(70);
        l.set(68, true);
        assert_eq!(l.msb(), Some(69));
    }

    #[test]
    fn separating_examples() {
        let g = Graph::from_edges(4, &[(2, 3)]).unwrap();
        assert!(is_beta_separating(&g, &seq(&[2], 4), 0.5).unwrap());
        // all nodes as anchors separate every distinct pair of rows
        let g = Graph::path(5);
        assert!(is_beta_separating(&g, &seq(&[0, 1, 2, 3, 4], 5), 0.01).unwrap());
        // no anchors: all labels equal
        assert!(!is_beta_separating(&g, &seq(&[], 5), 0.2).unwrap());
        assert!(is_beta_separating(&g, &seq(&[], 5), 1.5).is_err());
    }

    #[test]
    fn consistency_examples() {
        let g = Graph::path(3);
        let c = seq(&[0], 3);
        assert!(is_label_consistent(&Bijection::identity(3), &g, &g, &c, &c).unwrap());
        // labels w.r.t. (0): node 1 -> "1", node 2 -> "0"; swapping them breaks consistency
        let swap = Bijection::new(vec![0, 2, 1]).unwrap();
        assert!(!is_label_consistent(&swap, &g, &g, &c, &c).unwrap());
        // the reflection of the path is an isomorphism and maps C to pi(C)
        let pi = Bijection::new(vec![2, 1, 0]).unwrap();
        assert!(is_label_consistent(&pi, &g, &g, &c, &c.map(&pi)).unwrap());
    }

    #[test]
    fn singleton_classes_force_the_bijection() {
        let g = Graph::path(4);
        let c = seq(&[0, 3], 4);
        // labels: 0 -> 00, 1 -> 10, 2 -> 01, 3 -> 00 ... 0 and 3 share 00 but are anchors
        let mut rng = keyed_rng(1, &[]);
        let f = sample_max_consistent(&g, &g, &c, &c, &mut rng).unwrap();
        assert_eq!(f, Bijection::identity(4));
    }

    #[test]
    fn two_element_class_is_split_evenly() {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (2, 3)]).unwrap();
        let c = seq(&[0, 1], 4);
        // w.r.t. (0, 1): node 0 -> 01 and nodes 1, 2, 3 -> 10; anchor 1 is pinned,
        // leaving {2, 3} as the only class with free choices
        let classes = label_classes(&g, &c).unwrap();
        assert!(classes.values().any(|v| v == &vec![1, 2, 3]));
        let mut counts: HashMap<Bijection, usize> = HashMap::new();
        let mut rng = keyed_rng(9, &[]);
        for _ in 0..10_000 {
            let f = sample_max_consistent(&g, &g, &c, &c, &mut rng).unwrap();
            assert!(is_label_consistent(&f, &g, &g, &c, &c).unwrap());
            *counts.entry(f).or_default() += 1;
        }
        assert_eq!(counts.len(), 2);
        for &k in counts.values() {
            let freq = k as f64 / 10_000.0;
            assert!((freq - 0.5).abs() <= 0.05, "frequency {freq}");
        }
    }

    #[test]
    fn precondition_is_checked() {
        let g = Graph::path(3);
        let mut rng = keyed_rng(0, &[]);
        // node 0 is labelled 01 w.r.t. (0, 1) but 00 w.r.t. (0, 2)
        let r = sample_max_consistent(&g, &g, &seq(&[0, 1], 3), &seq(&[0, 2], 3), &mut rng);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
