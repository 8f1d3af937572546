//! Approximate isomorphism output: after the tester accepts with anchors
//! `C -> P`, every node learns its image `g(v)` in the known graph.
//!
//! Cluster `i` (1-indexed) holds the nodes whose label has msb `i`; anchor
//! `c_i` is adjacent to all of them and computes their images locally.
//! Nodes with the all-zero label are matched by unique numbering.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::decision::REJECT;
use crate::error::{Error, Result};
use crate::graph::{hamming_distance, labels, Bijection, Graph, LabelString, NodeId, NodeSeq};
use crate::graph::class_matching;
use crate::protocols::{assign_unique_numbers, broadcast, broadcast_values, id_bits, pipelined_collect, BfsTree};
use crate::rng::{keyed_rng, StreamRng, TAG_CLASS, TAG_CLUSTER};
use crate::sim::{width_for, BitString, NetworkConfig, Network, NodeCtx, NodeProgram, Status, Transcript};
use crate::testing::{tester_phases, TestParams};

/// `V_K` in ascending id, with `P` moved above everything in sequence order.
pub fn total_order(n: usize, p: &NodeSeq) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..n).filter(|&u| p.position(u).is_none()).collect();
    order.extend_from_slice(p.as_slice());
    order
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPlan {
    pub s: usize,
    /// `P`-labels of the known graph.
    pub k_labels: Vec<LabelString>,
    /// Index `i - 1` for cluster `i`.
    pub u_sizes: Vec<usize>,
    pub k_sizes: Vec<usize>,
    pub j: Vec<i64>,
    pub order: Vec<NodeId>,
    /// Reserved nodes, lowest order first.
    pub reserved: Vec<NodeId>,
    slice_start: Vec<usize>,
}

impl ClusterPlan {
    pub fn is_reserved(&self, u: NodeId) -> bool {
        self.reserved.contains(&u)
    }

    /// Known-graph nodes of cluster `i`, ascending id.
    pub fn k_cluster(&self, i: usize) -> Vec<NodeId> {
        (0..self.k_labels.len()).filter(|&u| self.k_labels[u].msb() == Some(i)).collect()
    }

    /// Reserved nodes handed to surplus cluster `i`; empty unless `j_i > 0`.
    pub fn slice(&self, i: usize) -> &[NodeId] {
        let j = self.j[i - 1];
        if j <= 0 {
            return &[];
        }
        let start = self.slice_start[i - 1];
        &self.reserved[start..start + j as usize]
    }

    /// The all-zero class of the known graph in the total order.
    pub fn zero_class(&self) -> Vec<NodeId> {
        self.order.iter().copied().filter(|&u| self.k_labels[u].is_zero()).collect()
    }
}

/// `j[i - 1] = |cluster i of G_U| - |cluster i of G_K|`.
pub fn build_cluster_plan(gk: &Graph, p: &NodeSeq, j: &[i64]) -> Result<ClusterPlan> {
    let s = p.len();
    if j.len() != s {
        return Err(Error::SizeMismatch { left: j.len(), right: s });
    }
    if j.iter().sum::<i64>() != 0 {
        return Err(Error::Abort(format!("cluster differences sum to {}", j.iter().sum::<i64>())));
    }
    let k_labels = labels(gk, p)?;
    let order = total_order(gk.n(), p);
    let mut k_sizes = vec![0; s];
    for l in &k_labels {
        if let Some(i) = l.msb() {
            k_sizes[i - 1] += 1;
        }
    }
    let mut u_sizes = Vec::with_capacity(s);
    for i in 0..s {
        let u = k_sizes[i] as i64 + j[i];
        if u < 0 {
            return Err(Error::Abort(format!("cluster {} would have {u} members", i + 1)));
        }
        u_sizes.push(u as usize);
    }
    let mut reserved = Vec::new();
    for i in 1..=s {
        let want = -j[i - 1];
        if want <= 0 {
            continue;
        }
        let picked: Vec<NodeId> = order
            .iter()
            .copied()
            .filter(|&u| k_labels[u].msb() == Some(i) && p.position(u).is_none())
            .take(want as usize)
            .collect();
        if picked.len() < want as usize {
            return Err(Error::Abort(format!("cluster {i} cannot reserve {want} nodes")));
        }
        reserved.extend(picked);
    }
    let rank: BTreeMap<NodeId, usize> = order.iter().enumerate().map(|(r, &u)| (u, r)).collect();
    reserved.sort_by_key(|u| rank[u]);
    let mut slice_start = Vec::with_capacity(s);
    let mut acc = 0;
    for &ji in j {
        slice_start.push(acc);
        if ji > 0 {
            acc += ji as usize;
        }
    }
    Ok(ClusterPlan {
        s,
        k_labels,
        u_sizes,
        k_sizes,
        j: j.to_vec(),
        order,
        reserved,
        slice_start,
    })
}

/// Images for the members of cluster `i`, as computed by its coordinator.
/// Equal-size classes follow the shared `class_seed`, so images agree with
/// a maximally consistent map drawn from the same seed except where that
/// map hits a reserved node. Everything else is shuffled with `rng`.
pub fn assign_g_cluster<R: Rng + ?Sized>(
    i: usize,
    plan: &ClusterPlan,
    c: &NodeSeq,
    p: &NodeSeq,
    members: &[(NodeId, LabelString)],
    class_seed: u64,
    rng: &mut R,
) -> Result<Vec<(NodeId, NodeId)>> {
    if i == 0 || i > plan.s {
        return Err(Error::Input(format!("no cluster {i} among {}", plan.s)));
    }
    let mut members = members.to_vec();
    members.sort_by_key(|(v, _)| *v);
    if let Some((v, l)) = members.iter().find(|(_, l)| l.msb() != Some(i)) {
        return Err(Error::Contract(format!("node {v} with label {l} is not in cluster {i}")));
    }
    if members.len() != plan.u_sizes[i - 1] {
        return Err(Error::Abort(format!(
            "cluster {i} has {} members, plan says {}",
            members.len(),
            plan.u_sizes[i - 1]
        )));
    }
    let cluster = plan.k_cluster(i);
    let mut dom: BTreeMap<&LabelString, Vec<NodeId>> = BTreeMap::new();
    for (v, l) in &members {
        dom.entry(l).or_default().push(*v);
    }
    let mut cod: BTreeMap<&LabelString, Vec<NodeId>> = BTreeMap::new();
    for &u in &cluster {
        cod.entry(&plan.k_labels[u]).or_default().push(u);
    }

    let mut image: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut taken = vec![false; plan.k_labels.len()];
    for (v, _) in &members {
        if let Some(a) = c.position(*v) {
            let u = p.get(a);
            if plan.k_labels[u].msb() != Some(i) || taken[u] {
                return Err(Error::Abort(format!("anchor {v} cannot map to {u}")));
            }
            image.insert(*v, u);
            taken[u] = true;
        }
    }
    for (label, d) in &dom {
        let Some(k) = cod.get(label) else { continue };
        if k.len() != d.len() {
            continue;
        }
        let d: Vec<NodeId> = d.iter().copied().filter(|v| c.position(*v).is_none()).collect();
        let k: Vec<NodeId> = k.iter().copied().filter(|&u| p.position(u).is_none()).collect();
        for (v, u) in class_matching(&d, &k, class_seed, label) {
            if !plan.is_reserved(u) {
                image.insert(v, u);
                taken[u] = true;
            }
        }
    }

    let mut rest: Vec<NodeId> = members.iter().map(|(v, _)| *v).filter(|v| !image.contains_key(v)).collect();
    let mut free: Vec<NodeId> = cluster.into_iter().filter(|&u| !taken[u] && !plan.is_reserved(u)).collect();
    let slice = plan.slice(i);
    if rest.len() != free.len() + slice.len() {
        return Err(Error::Abort(format!(
            "cluster {i}: {} unmatched members for {} free and {} reserved nodes",
            rest.len(),
            free.len(),
            slice.len()
        )));
    }
    free.shuffle(rng);
    rest.shuffle(rng);
    let targets = free.into_iter().chain(slice.iter().copied());
    image.extend(rest.into_iter().zip(targets));
    Ok(image.into_iter().collect())
}

/// Zero-label nodes take distinct indices and map to the zero class of the
/// known graph in the total order.
pub fn match_zero_class(
    net: &mut Network<'_>,
    tree: &BfsTree,
    is_zero: &[bool],
    y_prime: &[NodeId],
) -> Result<Vec<Option<NodeId>>> {
    let index = assign_unique_numbers(net, tree, is_zero)?;
    index
        .into_iter()
        .map(|j| match j {
            None => Ok(None),
            Some(j) => y_prime
                .get(j - 1)
                .copied()
                .map(Some)
                .ok_or_else(|| Error::Abort(format!("zero class index {j} beyond {}", y_prime.len()))),
        })
        .collect()
}

/// One round: each coordinator sends its members their images.
struct Deliver {
    out: Vec<(usize, NodeId)>,
    width: usize,
    expect: bool,
    got: Option<NodeId>,
}

impl NodeProgram for Deliver {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, u) in std::mem::take(&mut self.out) {
            ctx.send(port, BitString::from_uint(u as u64, self.width));
        }
        if let Some((_, msg)) = ctx.inbox().first() {
            self.got = msg.reader().read_uint(self.width).map(|u| u as usize);
        }
        if self.expect && self.got.is_none() {
            Status::Running
        } else {
            Status::Done
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApproxOutcome {
    pub params: TestParams,
    pub c: NodeSeq,
    pub p: Option<NodeSeq>,
    pub class_seed: u64,
    pub plan: Option<ClusterPlan>,
    /// `None` when the tester rejected.
    pub g: Option<Bijection>,
    /// Ordered-entry distance between `g(G_U)` and `G_K`.
    pub delta: Option<usize>,
    pub zero_count: usize,
    pub tester_rounds: usize,
    pub transcript: Transcript,
}

impl ApproxOutcome {
    /// `v,g(v)` rows.
    pub fn mapping_csv(&self) -> Option<String> {
        let g = self.g.as_ref()?;
        let mut s = String::from("v,g(v)\n");
        for (v, u) in g.as_slice().iter().enumerate() {
            s.push_str(&format!("{v},{u}\n"));
        }
        Some(s)
    }
}

pub fn run_approx_iso(topology: &Graph, gk: &Graph, params: &TestParams, cfg: NetworkConfig) -> Result<ApproxOutcome> {
    let n = topology.n();
    let seed = cfg.seed;
    let mut net = Network::new(topology, cfg)?;
    let run = tester_phases(&mut net, gk, params, true)?;
    let tester_rounds = net.transcript().rounds;
    let tree = run.tree;
    let c = run.know.c.clone();
    let class_seed: u64 = keyed_rng(seed, &[TAG_CLASS, params.root as u64]).gen();

    let Some((p, _)) = run.search.accepted else {
        broadcast_values(&mut net, &tree, &[0], 1)?;
        for v in 0..n {
            net.set_output(v, REJECT);
        }
        return Ok(ApproxOutcome {
            params: params.clone(),
            c,
            p: None,
            class_seed,
            plan: None,
            g: None,
            delta: None,
            zero_count: run.zero_count,
            tester_rounds,
            transcript: net.into_transcript(),
        });
    };

    let idw = id_bits(n);
    let mut payload = BitString::new();
    payload.push_bit(true);
    for &u in p.as_slice() {
        payload.push_uint(u as u64, idw);
    }
    payload.push_uint(class_seed, 64);
    broadcast(&mut net, &tree, &payload)?;

    let s = c.len();
    let k_labels = labels(gk, &p)?;
    let iw = width_for(s.saturating_sub(1) as u64);
    let jw = width_for(2 * n as u64);
    let mut items = vec![Vec::new(); n];
    for (i, &ci) in c.as_slice().iter().enumerate() {
        let members = run.neighbor_labels[ci].iter().filter(|l| l.msb() == Some(i + 1)).count();
        let known = k_labels.iter().filter(|l| l.msb() == Some(i + 1)).count();
        let mut it = BitString::from_uint(i as u64, iw);
        it.push_uint((members + n - known) as u64, jw);
        items[ci].push(it);
    }
    let mut shifted = vec![n as u64; s];
    for it in pipelined_collect(&mut net, &tree, items, iw + jw)? {
        let mut r = it.reader();
        let i = r.read_uint(iw).expect("cluster index") as usize;
        shifted[i] = r.read_uint(jw).expect("difference");
    }
    let heard = broadcast_values(&mut net, &tree, &shifted, jw)?;

    let mut plan = None;
    let mut image = vec![None; n];
    let mut out = vec![Vec::new(); n];
    for (i, &ci) in c.as_slice().iter().enumerate() {
        let j: Vec<i64> = heard[ci].iter().map(|&x| x as i64 - n as i64).collect();
        let local = build_cluster_plan(gk, &p, &j)?;
        let members: Vec<(NodeId, LabelString)> = net
            .ports(ci)
            .iter()
            .zip(&run.neighbor_labels[ci])
            .filter(|(_, l)| l.msb() == Some(i + 1))
            .map(|(&v, l)| (v, l.clone()))
            .collect();
        let mut rng: StreamRng = keyed_rng(seed, &[TAG_CLUSTER, ci as u64]);
        for (v, u) in assign_g_cluster(i + 1, &local, &c, &p, &members, class_seed, &mut rng)? {
            let port = net.ports(ci).iter().position(|&w| w == v).expect("member is a neighbor");
            out[ci].push((port, u));
            image[v] = Some(u);
        }
        match &plan {
            None => plan = Some(local),
            Some(prev) if *prev != local => return Err(Error::Abort("coordinators disagree on the plan".into())),
            Some(_) => {}
        }
    }
    let plan = match plan {
        Some(plan) => plan,
        None => build_cluster_plan(gk, &p, &[])?,
    };

    let zero_label: Vec<bool> = (0..n)
        .map(|v| net.ports(v).iter().all(|w| c.position(*w).is_none()))
        .collect();
    let mut progs: Vec<Deliver> = (0..n)
        .map(|v| Deliver {
            out: std::mem::take(&mut out[v]),
            width: idw,
            expect: !zero_label[v],
            got: None,
        })
        .collect();
    net.run_phase("deliver", &mut progs)?;
    for (v, prog) in progs.iter().enumerate() {
        if prog.got != image[v] {
            return Err(Error::Abort(format!("node {v} received {:?}", prog.got)));
        }
    }

    let zero = match_zero_class(&mut net, &tree, &zero_label, &plan.zero_class())?;
    let mut map = Vec::with_capacity(n);
    for v in 0..n {
        let u = image[v]
            .or(zero[v])
            .ok_or_else(|| Error::Abort(format!("node {v} has no image")))?;
        map.push(u);
    }
    let g = Bijection::new(map).map_err(|e| Error::Abort(format!("images collide: {e}")))?;
    for v in 0..n {
        net.set_output(v, g.apply(v).to_string());
    }
    let delta = hamming_distance(&topology.relabel(&g), gk)?;
    Ok(ApproxOutcome {
        params: params.clone(),
        c,
        p: Some(p),
        class_seed,
        plan: Some(plan),
        g: Some(g),
        delta: Some(delta),
        zero_count: run.zero_count,
        tester_rounds,
        transcript: net.into_transcript(),
    })
}

/// `|Y|`, `|R|` and the number of nodes in classes whose sizes differ
/// between the graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CouplingTerms {
    pub y: usize,
    pub r: usize,
    pub b: usize,
}

impl CouplingTerms {
    pub fn total(&self) -> usize {
        self.y + self.r + self.b
    }
}

pub fn coupling_terms(gu: &Graph, gk: &Graph, c: &NodeSeq, plan: &ClusterPlan) -> Result<CouplingTerms> {
    let lu = labels(gu, c)?;
    let mut sizes: BTreeMap<&LabelString, (usize, usize)> = BTreeMap::new();
    for l in &lu {
        sizes.entry(l).or_default().0 += 1;
    }
    for l in &plan.k_labels {
        sizes.entry(l).or_default().1 += 1;
    }
    if gk.n() != gu.n() {
        return Err(Error::SizeMismatch { left: gu.n(), right: gk.n() });
    }
    Ok(CouplingTerms {
        y: lu.iter().filter(|l| l.is_zero()).count(),
        r: plan.reserved.len(),
        b: sizes.values().filter(|(a, b)| a != b).map(|(a, _)| a).sum(),
    })
}
