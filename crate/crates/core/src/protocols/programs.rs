//! Node programs behind the drivers in the parent module. Each program sees
//! only its own [`TreeNode`], its inputs and the [`NodeCtx`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rand::Rng;

use super::{Packing, TreeNode};
use crate::graph::{LabelString, NodeId};
use crate::sim::{BitString, NodeCtx, NodeProgram, Status};

const JOIN: bool = false;
const ACK: bool = true;

pub(super) struct Bfs {
    is_root: bool,
    layer_bits: usize,
    pub(super) node: Option<TreeNode>,
    wait_until: usize,
}

impl Bfs {
    pub(super) fn new(is_root: bool, layer_bits: usize) -> Self {
        Bfs {
            is_root,
            layer_bits,
            node: None,
            wait_until: 0,
        }
    }
}

impl NodeProgram for Bfs {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        match &mut self.node {
            None if self.is_root => {
                // every neighbor of the root sits in layer 1 with the root as its only parent
                for p in 0..ctx.degree() {
                    ctx.send(p, join_msg(0, self.layer_bits));
                }
                self.node = Some(TreeNode {
                    parent: None,
                    layer: 0,
                    children: (0..ctx.degree()).collect(),
                });
                self.wait_until = ctx.round();
            }
            None => {
                let offer = ctx
                    .inbox()
                    .iter()
                    .filter_map(|(port, msg)| {
                        let mut r = msg.reader();
                        (r.read_bit() == Some(JOIN)).then(|| (ctx.neighbor(*port), *port, r.read_uint(self.layer_bits)))
                    })
                    .min();
                if let Some((_, parent, Some(layer))) = offer {
                    let layer = layer as usize + 1;
                    if layer >= 2 {
                        ctx.send(parent, BitString::from_uint(1, 1));
                    }
                    let others: Vec<usize> = (0..ctx.degree()).filter(|&p| p != parent).collect();
                    for &p in &others {
                        ctx.send(p, join_msg(layer as u64, self.layer_bits));
                    }
                    self.wait_until = if others.is_empty() { ctx.round() } else { ctx.round() + 2 };
                    self.node = Some(TreeNode {
                        parent: Some(parent),
                        layer,
                        children: Vec::new(),
                    });
                }
            }
            Some(node) => {
                for (port, msg) in ctx.inbox() {
                    if msg.reader().read_bit() == Some(ACK) {
                        node.children.push(*port);
                    }
                }
                node.children.sort_unstable();
            }
        }
        if self.node.is_some() && ctx.round() >= self.wait_until {
            Status::Done
        } else {
            Status::Running
        }
    }
}

fn join_msg(layer: u64, bits: usize) -> BitString {
    let mut m = BitString::new();
    m.push_bit(JOIN);
    m.push_uint(layer, bits);
    m
}

/// Pipelined broadcast of a bit string whose length every node knows.
/// Each node forwards up to a full message of bits per round.
pub(super) struct Stream {
    node: TreeNode,
    len: usize,
    pub(super) received: BitString,
    forwarded: usize,
}

impl Stream {
    pub(super) fn new(node: TreeNode, len: usize, payload: Option<BitString>) -> Self {
        Stream {
            node,
            len,
            received: payload.unwrap_or_default(),
            forwarded: 0,
        }
    }
}

impl NodeProgram for Stream {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            if Some(*port) == self.node.parent {
                self.received.extend_from(msg);
            }
        }
        let have = self.received.len();
        if !self.node.children.is_empty() && self.forwarded < have {
            let take = ctx.bandwidth().min(have - self.forwarded);
            let chunk = self.received.slice(self.forwarded, take);
            for &c in &self.node.children {
                ctx.send(c, chunk.clone());
            }
            self.forwarded += take;
        }
        let done = have == self.len && (self.node.children.is_empty() || self.forwarded == self.len);
        if done {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// Pipelined collection of fixed-width items at the root.
pub(super) struct Up {
    node: TreeNode,
    pack: Packing,
    pending: VecDeque<BitString>,
    pub(super) collected: Vec<BitString>,
    children_done: usize,
    sent_done: bool,
}

impl Up {
    pub(super) fn new(node: TreeNode, pack: Packing, items: Vec<BitString>) -> Self {
        let is_root = node.parent.is_none();
        Up {
            node,
            pack,
            pending: if is_root { VecDeque::new() } else { items.iter().cloned().collect() },
            collected: if is_root { items } else { Vec::new() },
            children_done: 0,
            sent_done: false,
        }
    }

    pub(super) fn push(&mut self, item: BitString) {
        if self.node.parent.is_none() {
            self.collected.push(item);
        } else {
            self.pending.push_back(item);
        }
    }

    pub(super) fn absorb(&mut self, port: usize, msg: &BitString) {
        if self.node.children.contains(&port) {
            let (done, items) = self.pack.decode(msg);
            for item in items {
                self.push(item);
            }
            self.children_done += done as usize;
        }
    }

    pub(super) fn act(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        let children_done = self.children_done == self.node.children.len();
        let Some(parent) = self.node.parent else {
            return if children_done { Status::Done } else { Status::Running };
        };
        if !self.sent_done && (!self.pending.is_empty() || children_done) {
            let take = self.pack.cap.min(self.pending.len());
            let batch: Vec<BitString> = self.pending.drain(..take).collect();
            let done = children_done && self.pending.is_empty();
            ctx.send(parent, self.pack.encode(done, &batch));
            self.sent_done = done;
        }
        if self.sent_done {
            Status::Done
        } else {
            Status::Running
        }
    }
}

impl NodeProgram for Up {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            self.absorb(*port, msg);
        }
        self.act(ctx)
    }
}

/// Pipelined coordinate-wise sum of a length-`k` vector, optionally reduced
/// modulo a per-coordinate modulus at every hop.
pub(super) struct Converge {
    node: TreeNode,
    pack: Packing,
    moduli: Option<Vec<u64>>,
    pub(super) acc: Vec<u64>,
    /// Values received from each child, in child order.
    pub(super) from_children: Vec<Vec<u64>>,
    sent: usize,
}

impl Converge {
    pub(super) fn new(node: TreeNode, pack: Packing, values: Vec<u64>, moduli: Option<Vec<u64>>) -> Self {
        let c = node.children.len();
        Converge {
            node,
            pack,
            moduli,
            acc: values,
            from_children: vec![Vec::new(); c],
            sent: 0,
        }
    }
}

impl NodeProgram for Converge {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            let Some(ci) = self.node.children.iter().position(|c| c == port) else {
                continue;
            };
            let (_, items) = self.pack.decode(msg);
            for item in items {
                let v = item.reader().read_uint(self.pack.width).expect("fixed width");
                let t = self.from_children[ci].len();
                self.acc[t] = match &self.moduli {
                    Some(m) => (self.acc[t] + v) % m[t],
                    None => self.acc[t] + v,
                };
                self.from_children[ci].push(v);
            }
        }
        let k = self.acc.len();
        let ready = self.from_children.iter().map(Vec::len).min().unwrap_or(k);
        match self.node.parent {
            None => {
                if ready == k {
                    return Status::Done;
                }
            }
            Some(parent) => {
                if self.sent < ready {
                    let take = self.pack.cap.min(ready - self.sent);
                    let batch: Vec<BitString> = self.acc[self.sent..self.sent + take]
                        .iter()
                        .map(|&v| BitString::from_uint(v, self.pack.width))
                        .collect();
                    ctx.send(parent, self.pack.encode(false, &batch));
                    self.sent += take;
                }
                if self.sent == k {
                    return Status::Done;
                }
            }
        }
        Status::Running
    }
}

/// Splits `[start, start + subtree size)` among a node and its children.
/// With `share`, every node also tells all its neighbors its own index
/// (0 for non-members) alongside the split.
pub(super) struct Split {
    node: TreeNode,
    member: bool,
    child_counts: Vec<u64>,
    width: usize,
    share: bool,
    start: Option<u64>,
    pub(super) index: Option<u64>,
    pub(super) heard: Vec<Option<u64>>,
    sent: bool,
}

impl Split {
    pub(super) fn new(
        node: TreeNode,
        member: bool,
        child_counts: Vec<u64>,
        width: usize,
        share: Option<usize>,
    ) -> Self {
        let start = node.parent.is_none().then_some(1);
        Split {
            node,
            member,
            child_counts,
            width,
            share: share.is_some(),
            start,
            index: None,
            heard: vec![None; share.unwrap_or(0)],
            sent: false,
        }
    }
}

impl NodeProgram for Split {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            let mut r = msg.reader();
            if Some(*port) == self.node.parent {
                self.start = r.read_uint(self.width);
            }
            if self.share {
                self.heard[*port] = r.read_uint(self.width);
            }
        }
        if let (Some(mut next), false) = (self.start, self.sent) {
            if self.member {
                self.index = Some(next);
                next += 1;
            }
            let own = self.index.unwrap_or(0);
            let mut to_children = vec![false; ctx.degree()];
            for (&port, &count) in self.node.children.iter().zip(&self.child_counts) {
                let mut m = BitString::from_uint(next, self.width);
                if self.share {
                    m.push_uint(own, self.width);
                }
                ctx.send(port, m);
                to_children[port] = true;
                next += count;
            }
            if self.share {
                for (p, &child) in to_children.iter().enumerate() {
                    if !child {
                        ctx.send(p, BitString::from_uint(own, self.width));
                    }
                }
            }
            self.sent = true;
        }
        if self.sent && self.heard.iter().all(Option::is_some) {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// Priority forwarding of `(number, id)` draws: every node passes up the
/// best `keep` draws it has heard of, highest number first.
pub(super) struct Elect {
    node: TreeNode,
    pack: Packing,
    range: u64,
    num_bits: usize,
    id_bits: usize,
    keep: usize,
    pub(super) known: BTreeSet<(Reverse<u64>, NodeId)>,
    sent: HashSet<(Reverse<u64>, NodeId)>,
    children_done: usize,
    sent_done: bool,
}

impl Elect {
    pub(super) fn new(node: TreeNode, pack: Packing, range: u64, num_bits: usize, id_bits: usize, keep: usize) -> Self {
        Elect {
            node,
            pack,
            range,
            num_bits,
            id_bits,
            keep,
            known: BTreeSet::new(),
            sent: HashSet::new(),
            children_done: 0,
            sent_done: false,
        }
    }
}

impl NodeProgram for Elect {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        if ctx.round() == 1 {
            let x = ctx.rng().gen_range(0..self.range);
            self.known.insert((Reverse(x), ctx.id()));
        }
        for (port, msg) in ctx.inbox() {
            if !self.node.children.contains(port) {
                continue;
            }
            let (done, items) = self.pack.decode(msg);
            for item in items {
                let mut r = item.reader();
                let x = r.read_uint(self.num_bits).expect("fixed width");
                let id = r.read_uint(self.id_bits).expect("fixed width") as NodeId;
                self.known.insert((Reverse(x), id));
            }
            self.children_done += done as usize;
        }
        let children_done = self.children_done == self.node.children.len();
        let Some(parent) = self.node.parent else {
            return if children_done { Status::Done } else { Status::Running };
        };
        if !self.sent_done {
            let unsent: Vec<(Reverse<u64>, NodeId)> = self
                .known
                .iter()
                .take(self.keep)
                .filter(|e| !self.sent.contains(e))
                .copied()
                .collect();
            let take = self.pack.cap.min(unsent.len());
            let batch: Vec<BitString> = unsent[..take]
                .iter()
                .map(|&(Reverse(x), id)| {
                    let mut b = BitString::from_uint(x, self.num_bits);
                    b.push_uint(id as u64, self.id_bits);
                    b
                })
                .collect();
            self.sent.extend(unsent[..take].iter().copied());
            let done = children_done && take == unsent.len();
            if take > 0 || done {
                ctx.send(parent, self.pack.encode(done, &batch));
                self.sent_done = done;
            }
        }
        if self.sent_done {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// Sends the node's label fragments to every neighbor and reassembles theirs.
pub(super) struct Exchange {
    frags: Vec<BitString>,
    expected: usize,
    pub(super) got: Vec<Vec<BitString>>,
    next: usize,
}

impl Exchange {
    pub(super) fn new(frags: Vec<BitString>, degree: usize) -> Self {
        Exchange {
            expected: frags.len(),
            frags,
            got: vec![Vec::new(); degree],
            next: 0,
        }
    }
}

impl NodeProgram for Exchange {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        for (port, msg) in ctx.inbox() {
            self.got[*port].push(msg.clone());
        }
        if let Some(f) = self.frags.get(self.next) {
            for p in 0..ctx.degree() {
                ctx.send(p, f.clone());
            }
            self.next += 1;
        }
        let complete = self.got.iter().all(|g| g.len() == self.expected);
        if self.next == self.frags.len() && complete {
            Status::Done
        } else {
            Status::Running
        }
    }
}

/// Round 1: querying nodes ping their coordinator. Round 2: coordinators
/// count their neighbors per queried label. Then the counts are collected.
pub(super) struct ClassSize {
    coordinator_port: Option<usize>,
    neighbor_labels: Vec<LabelString>,
    id_bits: usize,
    count_bits: usize,
    pub(super) up: Up,
}

impl ClassSize {
    pub(super) fn new(
        coordinator_port: Option<usize>,
        neighbor_labels: Vec<LabelString>,
        id_bits: usize,
        count_bits: usize,
        up: Up,
    ) -> Self {
        ClassSize {
            coordinator_port,
            neighbor_labels,
            id_bits,
            count_bits,
            up,
        }
    }
}

impl NodeProgram for ClassSize {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        match ctx.round() {
            1 => {
                if let Some(p) = self.coordinator_port {
                    ctx.send(p, BitString::from_uint(1, 1));
                }
                return Status::Running;
            }
            2 => {
                // label -> smallest querying neighbor id
                let mut asked: BTreeMap<&LabelString, NodeId> = BTreeMap::new();
                for (port, _) in ctx.inbox() {
                    let rep = ctx.neighbor(*port);
                    asked
                        .entry(&self.neighbor_labels[*port])
                        .and_modify(|r| *r = (*r).min(rep))
                        .or_insert(rep);
                }
                let items: Vec<BitString> = asked
                    .into_iter()
                    .map(|(label, rep)| {
                        let count = self.neighbor_labels.iter().filter(|l| *l == label).count();
                        let mut b = BitString::from_uint(rep as u64, self.id_bits);
                        b.push_uint(count as u64, self.count_bits);
                        b
                    })
                    .collect();
                for item in items {
                    self.up.push(item);
                }
            }
            _ => {
                for (port, msg) in ctx.inbox() {
                    self.up.absorb(*port, msg);
                }
            }
        }
        self.up.act(ctx)
    }
}
