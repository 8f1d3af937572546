//! Exact isomorphism decision by modular fingerprints of the adjacency
//! matrix. The matrix above the diagonal is read as an integer `s(M)` whose
//! bit `index(i, j)` is set when `{i, j}` is an edge; nodes send `s(M) mod p`
//! for random primes `p` up the BFS tree, and the root compares the result
//! against every relabelling of the known graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{next_permutation, Bijection, Graph, NodeId, BRUTE_FORCE_CAP};
use crate::protocols::{assign_and_share_numbers, broadcast_values, build_bfs, BfsTree, Packing, TreeNode};
use crate::rng::{keyed_rng, TAG_PRIMES};
use crate::sim::{width_for, BitString, Network, NetworkConfig, NodeCtx, NodeProgram, Status, Transcript};

/// The first `count` primes.
pub fn nth_primes(count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let c = count as f64;
    // p_k < k (ln k + ln ln k) for k >= 6
    let bound = if count < 6 { 15 } else { (c * (c.ln() + c.ln().ln())).ceil() as usize + 1 };
    let mut composite = vec![false; bound + 1];
    let mut out = Vec::with_capacity(count);
    for i in 2..=bound {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        if out.len() == count {
            break;
        }
        for j in (i * i..=bound).step_by(i) {
            composite[j] = true;
        }
    }
    out
}

/// Pairs `(i, j)`, `i < j`, ordered by `i` then `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeOrder {
    pub n: usize,
}

impl EdgeOrder {
    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of the unordered pair `{a, b}`, `a != b`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        debug_assert!(i != j && j < self.n);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn pair(&self, idx: usize) -> (usize, usize) {
        let mut i = 0;
        let mut start = 0;
        while start + (self.n - i - 1) <= idx {
            start += self.n - i - 1;
            i += 1;
        }
        (i, i + 1 + idx - start)
    }
}

pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let m128 = m as u128;
    let mut b = base as u128 % m128;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub primes: Vec<u64>,
    pub residues: Vec<u64>,
}

impl Fingerprint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fingerprint serializes")
    }
}

/// Residues of `s(M)` for `g` with node `v` numbered `numbering(v)`.
pub fn fingerprint_local(g: &Graph, numbering: &Bijection, primes: &[u64]) -> Result<Fingerprint> {
    if numbering.len() != g.n() {
        return Err(Error::SizeMismatch {
            left: numbering.len(),
            right: g.n(),
        });
    }
    let order = EdgeOrder { n: g.n() };
    let residues = primes
        .iter()
        .map(|&p| {
            g.edges().fold(0, |acc, (u, v)| {
                let idx = order.index(numbering.apply(u), numbering.apply(v));
                (acc + pow_mod(2, idx as u64, p)) % p
            })
        })
        .collect();
    Ok(Fingerprint {
        primes: primes.to_vec(),
        residues,
    })
}

/// `s(M)` itself, for checking the modular path.
pub fn fingerprint_exact(g: &Graph, numbering: &Bijection) -> num_bigint::BigUint {
    let order = EdgeOrder { n: g.n() };
    let mut s = num_bigint::BigUint::default();
    for (u, v) in g.edges() {
        s.set_bit(order.index(numbering.apply(u), numbering.apply(v)) as u64, true);
    }
    s
}

/// `k` primes drawn with replacement from the first `n^2`.
pub fn sample_primes<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<u64> {
    let pool = nth_primes((n * n).max(1));
    (0..k).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

/// Bits per prime (and per residue) for an `n`-node network: enough for the
/// `n^2`-th prime.
pub fn prime_width(n: usize) -> usize {
    width_for(*nth_primes((n * n).max(1)).last().expect("at least one prime"))
}

/// Whether some relabelling of `gk` reproduces every residue of `fp`.
pub fn decide_isomorphism(gk: &Graph, fp: &Fingerprint) -> Result<bool> {
    Ok(find_matching_permutation(gk, fp)?.is_some())
}

/// First permutation, in lexicographic order, under which `gk` has the
/// residues of `fp`.
pub fn find_matching_permutation(gk: &Graph, fp: &Fingerprint) -> Result<Option<Bijection>> {
    let n = gk.n();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    if fp.primes.len() != fp.residues.len() {
        return Err(Error::Input("fingerprint has unequal prime and residue counts".into()));
    }
    let order = EdgeOrder { n };
    let tables: Vec<Vec<u64>> = fp
        .primes
        .iter()
        .map(|&p| {
            let mut t = Vec::with_capacity(order.len());
            let mut x = 1 % p;
            for _ in 0..order.len() {
                t.push(x);
                x = x * 2 % p;
            }
            t
        })
        .collect();
    let edges: Vec<(NodeId, NodeId)> = gk.edges().collect();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let matches = tables.iter().zip(&fp.primes).zip(&fp.residues).all(|((table, &p), &r)| {
            let s = edges
                .iter()
                .fold(0, |acc, &(u, v)| (acc + table[order.index(perm[u], perm[v])]) % p);
            s == r
        });
        if matches {
            return Bijection::new(perm).map(Some);
        }
        if !next_permutation(&mut perm) {
            return Ok(None);
        }
    }
}

/// One node's part of the fingerprint phase: primes stream down the tree
/// while per-prime partial residues flow up.
struct FingerprintNode {
    node: TreeNode,
    n: usize,
    k: usize,
    width: usize,
    up: Packing,
    number: usize,
    neighbor_numbers: Vec<usize>,
    stream: BitString,
    forwarded: usize,
    primes: Vec<u64>,
    own: Vec<u64>,
    from_children: Vec<Vec<u64>>,
    sent: usize,
    totals: Vec<u64>,
}

impl FingerprintNode {
    fn residue_of_own_pairs(&self, p: u64) -> u64 {
        let order = EdgeOrder { n: self.n };
        self.neighbor_numbers
            .iter()
            .filter(|&&w| w > self.number)
            .fold(0, |acc, &w| (acc + pow_mod(2, order.index(self.number, w) as u64, p)) % p)
    }
}

impl NodeProgram for FingerprintNode {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            if Some(*port) == self.node.parent {
                self.stream.extend_from(msg);
            } else if let Some(ci) = self.node.children.iter().position(|c| c == port) {
                let mut r = msg.reader();
                while let Some(v) = r.read_uint(self.width) {
                    self.from_children[ci].push(v);
                }
            }
        }
        // newly complete primes
        let mut r = self.stream.reader();
        let mut all = Vec::with_capacity(self.k);
        while let Some(p) = r.read_uint(self.width) {
            all.push(p);
        }
        for &p in &all[self.primes.len()..] {
            self.own.push(self.residue_of_own_pairs(p));
            self.primes.push(p);
        }
        if !self.node.children.is_empty() && self.forwarded < self.stream.len() {
            let take = ctx.bandwidth().min(self.stream.len() - self.forwarded);
            let chunk = self.stream.slice(self.forwarded, take);
            for &c in &self.node.children {
                ctx.send(c, chunk.clone());
            }
            self.forwarded += take;
        }
        let ready = self
            .from_children
            .iter()
            .map(Vec::len)
            .chain([self.primes.len()])
            .min()
            .unwrap_or(0);
        while self.totals.len() < ready {
            let t = self.totals.len();
            let p = self.primes[t];
            let s = self.from_children.iter().fold(self.own[t], |acc, c| (acc + c[t]) % p);
            self.totals.push(s);
        }
        if let Some(parent) = self.node.parent {
            if self.sent < self.totals.len() {
                let take = self.up.cap.min(self.totals.len() - self.sent);
                let mut msg = BitString::new();
                for &x in &self.totals[self.sent..self.sent + take] {
                    msg.push_uint(x, self.width);
                }
                ctx.send(parent, msg);
                self.sent += take;
            }
        }
        let forwarded = self.node.children.is_empty() || self.forwarded == self.k * self.width;
        let reported = self.node.parent.is_none() || self.sent == self.k;
        if self.totals.len() == self.k && forwarded && reported {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// One round of every node telling its neighbors its number.
struct ShareNumber {
    number: usize,
    width: usize,
    heard: Vec<Option<usize>>,
}

impl NodeProgram for ShareNumber {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            self.heard[*port] = msg.reader().read_uint(self.width).map(|x| x as usize);
        }
        if ctx.round() == 1 {
            for p in 0..ctx.degree() {
                ctx.send(p, BitString::from_uint(self.number as u64, self.width));
            }
        }
        if self.heard.iter().all(Option::is_some) {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// The root's residues for `primes`, computed on the live network. Node
/// `v` is numbered `numbers[v]` and first tells its neighbors; the
/// lower-numbered endpoint of each edge contributes its term.
pub fn distributed_fingerprints(
    net: &mut Network<'_>,
    tree: &BfsTree,
    numbers: &[usize],
    primes: &[u64],
) -> Result<Fingerprint> {
    let n = net.n();
    if numbers.len() != n {
        return Err(Error::SizeMismatch {
            left: numbers.len(),
            right: n,
        });
    }
    let id_width = width_for(n.saturating_sub(1) as u64);
    let mut share: Vec<ShareNumber> = (0..n)
        .map(|v| ShareNumber {
            number: numbers[v],
            width: id_width,
            heard: vec![None; net.ports(v).len()],
        })
        .collect();
    net.run_phase("share-numbers", &mut share)?;
    let heard = share
        .into_iter()
        .map(|sh| sh.heard.into_iter().map(|x| x.expect("heard")).collect())
        .collect();
    fingerprint_phase(net, tree, numbers, heard, primes)
}

fn fingerprint_phase(
    net: &mut Network<'_>,
    tree: &BfsTree,
    numbers: &[usize],
    neighbor_numbers: Vec<Vec<usize>>,
    primes: &[u64],
) -> Result<Fingerprint> {
    let n = net.n();
    let width = prime_width(n);
    if let Some(&p) = primes.iter().find(|&&p| width_for(p) > width) {
        return Err(Error::Input(format!("prime {p} is wider than {width} bits")));
    }

    let up = Packing::new(net.bandwidth(), width, false)?;
    let up = Packing {
        cap: if net.bandwidth() == usize::MAX { usize::MAX } else { net.bandwidth() / width },
        ..up
    };
    let k = primes.len();
    let mut stream = BitString::new();
    for &p in primes {
        stream.push_uint(p, width);
    }
    let mut progs: Vec<FingerprintNode> = neighbor_numbers
        .into_iter()
        .enumerate()
        .map(|(v, heard)| {
            let node = tree.nodes[v].clone();
            let children = node.children.len();
            FingerprintNode {
                node,
                n,
                k,
                width,
                up,
                number: numbers[v],
                neighbor_numbers: heard,
                stream: if v == tree.root { stream.clone() } else { BitString::new() },
                forwarded: 0,
                primes: Vec::new(),
                own: Vec::new(),
                from_children: vec![Vec::new(); children],
                sent: 0,
                totals: Vec::new(),
            }
        })
        .collect();
    net.run_phase("fingerprint", &mut progs)?;
    Ok(Fingerprint {
        primes: primes.to_vec(),
        residues: progs[tree.root].totals.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct DecisionParams {
    /// Number of primes; `None` means `2n`.
    pub k: Option<usize>,
    /// Node holding the known graph.
    pub root: NodeId,
    /// Skip the root's permutation enumeration.
    pub rounds_only: bool,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            k: None,
            root: 0,
            rounds_only: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecisionOutcome {
    /// `None` in rounds-only mode.
    pub accept: Option<bool>,
    pub fingerprint: Fingerprint,
    /// Numbering the network assigned to itself, zero-based.
    pub numbering: Bijection,
    pub transcript: Transcript,
}

pub const ACCEPT: &str = "accept";
pub const REJECT: &str = "reject";
pub const SKIPPED: &str = "skipped";

/// BFS, numbering, fingerprinting and a verdict broadcast, end to end.
pub fn run_decision_protocol(
    topology: &Graph,
    gk: &Graph,
    cfg: NetworkConfig,
    params: &DecisionParams,
) -> Result<DecisionOutcome> {
    let n = topology.n();
    if gk.n() != n {
        return Err(Error::SizeMismatch { left: n, right: gk.n() });
    }
    if !params.rounds_only && n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let seed = cfg.seed;
    let mut net = Network::new(topology, cfg)?;
    let tree = build_bfs(&mut net, params.root)?;
    let (index, heard) = assign_and_share_numbers(&mut net, &tree, &vec![true; n])?;
    let zero_based = |x: Option<usize>| x.expect("every node is a member") - 1;
    let numbers: Vec<usize> = index.into_iter().map(zero_based).collect();
    let heard = heard
        .into_iter()
        .map(|h| h.into_iter().map(zero_based).collect())
        .collect();
    let k = params.k.unwrap_or(2 * n);
    let primes = sample_primes(n, k, &mut keyed_rng(seed, &[TAG_PRIMES, params.root as u64]));
    let fingerprint = fingerprint_phase(&mut net, &tree, &numbers, heard, &primes)?;
    let accept = if params.rounds_only {
        None
    } else {
        Some(decide_isomorphism(gk, &fingerprint)?)
    };
    broadcast_values(&mut net, &tree, &[accept.unwrap_or(false) as u64], 1)?;
    let verdict = match accept {
        Some(true) => ACCEPT,
        Some(false) => REJECT,
        None => SKIPPED,
    };
    for v in 0..n {
        net.set_output(v, verdict);
    }
    Ok(DecisionOutcome {
        accept,
        fingerprint,
        numbering: Bijection::new(numbers)?,
        transcript: net.into_transcript(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::build_bfs;
    use crate::rng::StreamRng;
    use rand::SeedableRng;

    fn is_prime(x: u64) -> bool {
        x >= 2 && (2..).take_while(|d| d * d <= x).all(|d| x % d != 0)
    }

    #[test]
    fn primes() {
        assert_eq!(nth_primes(5), vec![2, 3, 5, 7, 11]);
        assert_eq!(*nth_primes(25).last().unwrap(), 97);
        let ps = nth_primes(4096);
        assert_eq!(ps.len(), 4096);
        assert!(ps.windows(2).all(|w| w[0] < w[1]));
        assert!(ps.iter().all(|&p| is_prime(p)));
        assert_eq!(*ps.last().unwrap(), 38873);
        assert!(nth_primes(0).is_empty());
    }

    #[test]
    fn edge_order_is_a_bijection() {
        for n in 1..9 {
            let o = EdgeOrder { n };
            let mut seen = vec![false; o.len()];
            for i in 0..n {
                for j in i + 1..n {
                    let idx = o.index(i, j);
                    assert_eq!(o.index(j, i), idx);
                    assert_eq!(o.pair(idx), (i, j));
                    assert!(!std::mem::replace(&mut seen[idx], true));
                }
            }
            assert!(seen.into_iter().all(|x| x));
        }
        assert_eq!(EdgeOrder { n: 3 }.index(0, 1), 0);
        assert_eq!(EdgeOrder { n: 3 }.index(0, 2), 1);
        assert_eq!(EdgeOrder { n: 3 }.index(1, 2), 2);
    }

    #[test]
    fn local_examples() {
        let id = Bijection::identity(3);
        let fp = fingerprint_local(&Graph::empty(3), &id, &[5, 7]).unwrap();
        assert_eq!(fp.residues, vec![0, 0]);
        let fp = fingerprint_local(&Graph::complete(3), &id, &[5]).unwrap();
        assert_eq!(fp.residues, vec![2]);
        let mut g = Graph::path(6);
        let before = fingerprint_local(&g, &Bijection::identity(6), &[97, 101]).unwrap();
        g.add_edge(0, 5).unwrap();
        g.remove_edge(0, 5).unwrap();
        assert_eq!(fingerprint_local(&g, &Bijection::identity(6), &[97, 101]).unwrap(), before);
    }

    #[test]
    fn modular_path_agrees_with_big_integers() {
        let g = Graph::from_edges(8, &[(0, 7), (1, 3), (2, 6), (4, 5), (6, 7)]).unwrap();
        let f = Bijection::new(vec![3, 1, 4, 0, 7, 5, 2, 6]).unwrap();
        let primes = nth_primes(64);
        let exact = fingerprint_exact(&g, &f);
        let fp = fingerprint_local(&g, &f, &primes).unwrap();
        for (p, r) in primes.iter().zip(&fp.residues) {
            assert_eq!(&exact % *p, num_bigint::BigUint::from(*r));
        }
    }

    #[test]
    fn residue_collisions_are_exactly_the_dividing_primes() {
        use num_bigint::BigUint;
        let mut rng = StreamRng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.gen_range(3..=8);
            let mk = |rng: &mut StreamRng| {
                let mut g = Graph::empty(n);
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.gen_bool(0.5) {
                            g.add_edge(u, v).unwrap();
                        }
                    }
                }
                g
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let id = Bijection::identity(n);
            let (sa, sb) = (fingerprint_exact(&a, &id), fingerprint_exact(&b, &id));
            if sa == sb {
                continue;
            }
            let diff = if sa > sb { &sa - &sb } else { &sb - &sa };
            let primes = nth_primes(n * n);
            let fa = fingerprint_local(&a, &id, &primes).unwrap();
            let fb = fingerprint_local(&b, &id, &primes).unwrap();
            let collisions = (0..primes.len()).filter(|&t| fa.residues[t] == fb.residues[t]).count();
            let dividing = primes
                .iter()
                .filter(|&&p| &diff % p == BigUint::default())
                .count();
            assert_eq!(collisions, dividing);
        }
    }

    #[test]
    fn decide_examples() {
        let c4 = Graph::cycle(4);
        let primes = [13, 17, 19];
        let fp = fingerprint_local(&c4, &Bijection::identity(4), &primes).unwrap();
        assert!(decide_isomorphism(&c4, &fp).unwrap());
        let relabeled = c4.relabel(&Bijection::new(vec![2, 0, 3, 1]).unwrap());
        assert!(decide_isomorphism(&relabeled, &fp).unwrap());

        let k3 = fingerprint_local(&Graph::complete(3), &Bijection::identity(3), &[2, 3, 5]).unwrap();
        assert_eq!(k3.residues, vec![1, 1, 2]);
        assert!(!decide_isomorphism(&Graph::path(3), &k3).unwrap());
        assert!(decide_isomorphism(&Graph::empty(10), &k3).is_err());
    }

    #[test]
    fn distributed_matches_local() {
        let path = Graph::path(6);
        for (k, root) in [(1, 0), (0, 2), (20, 5)] {
            let mut net = Network::new(&path, NetworkConfig::congest(6, 3)).unwrap();
            let tree = build_bfs(&mut net, root).unwrap();
            let numbers: Vec<usize> = vec![4, 0, 5, 2, 1, 3];
            let primes = sample_primes(6, k, &mut StreamRng::seed_from_u64(k as u64));
            let before = net.transcript().rounds;
            let fp = distributed_fingerprints(&mut net, &tree, &numbers, &primes).unwrap();
            let numbering = Bijection::new(numbers).unwrap();
            assert_eq!(fp, fingerprint_local(&path, &numbering, &primes).unwrap());
            let rounds = net.transcript().rounds - before;
            assert!(rounds <= 2 * (tree.depth() + k) + 4, "{rounds} rounds at k={k}");
        }
    }

    #[test]
    fn end_to_end_small() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let h = g.relabel(&Bijection::new(vec![4, 2, 0, 3, 1]).unwrap());
        let out = run_decision_protocol(&g, &h, NetworkConfig::congest(5, 9), &DecisionParams::default()).unwrap();
        assert_eq!(out.accept, Some(true));
        assert_eq!(out.transcript.unanimous(), Some(ACCEPT));
        let mut far = h.clone();
        far.add_edge(0, 4).ok();
        far.remove_edge(2, 0).ok();
        if crate::graph::brute_iso(&g, &far).unwrap().is_none() {
            let out =
                run_decision_protocol(&g, &far, NetworkConfig::congest(5, 9), &DecisionParams::default()).unwrap();
            assert_eq!(out.transcript.unanimous(), Some(REJECT));
        }
    }
}
