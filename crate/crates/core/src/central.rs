//! Running a query-based centralized tester at the root of a BFS tree.
//! Adaptive testers get one query answered at a time; non-adaptive ones
//! declare every query up front and get all answers in one pipelined pass.

use rand::Rng;

use crate::decision::{ACCEPT, REJECT};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::protocols::{broadcast, broadcast_values, build_bfs, id_bits, pipelined_collect, BfsTree, TreeNode};
use crate::rng::{keyed_rng, StreamRng, TAG_QUERY};
use crate::sim::{width_for, BitString, Network, NetworkConfig, NodeCtx, NodeProgram, Status, Transcript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    Adjacency(NodeId, NodeId),
    /// The `i`-th neighbor of a node, neighbors taken in ascending id.
    Incidence(NodeId, usize),
    Degree(NodeId),
}

impl Query {
    /// The node that holds the answer.
    pub fn target(&self) -> NodeId {
        match *self {
            Query::Adjacency(u, _) | Query::Incidence(u, _) | Query::Degree(u) => u,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let (u, arg) = match *self {
            Query::Adjacency(u, v) => (u, Some(v)),
            Query::Incidence(u, _) | Query::Degree(u) => (u, None),
        };
        for w in std::iter::once(u).chain(arg) {
            if w >= n {
                return Err(Error::Input(format!("query {self:?} names node {w} of {n}")));
            }
        }
        if let Query::Incidence(_, i) = *self {
            if i >= n {
                return Err(Error::Input(format!("query {self:?} asks for port {i} of {n}")));
            }
        }
        Ok(())
    }

    fn encode(&self, idw: usize) -> BitString {
        let (kind, u, arg) = match *self {
            Query::Adjacency(u, v) => (0, u, v),
            Query::Incidence(u, i) => (1, u, i),
            Query::Degree(u) => (2, u, 0),
        };
        let mut b = BitString::from_uint(kind, 2);
        b.push_uint(u as u64, idw);
        b.push_uint(arg as u64, idw);
        b
    }

    fn decode(r: &mut crate::sim::BitReader<'_>, idw: usize) -> Option<Query> {
        let kind = r.read_uint(2)?;
        let u = r.read_uint(idw)? as usize;
        let arg = r.read_uint(idw)? as usize;
        match kind {
            0 => Some(Query::Adjacency(u, arg)),
            1 => Some(Query::Incidence(u, arg)),
            2 => Some(Query::Degree(u)),
            _ => None,
        }
    }

    /// Answer from the target's own neighbor list.
    fn answer_locally(&self, neighbors: &[NodeId]) -> Answer {
        match *self {
            Query::Adjacency(_, v) => Answer::Bit(neighbors.contains(&v)),
            Query::Incidence(_, i) => {
                let mut sorted = neighbors.to_vec();
                sorted.sort_unstable();
                Answer::Neighbor(sorted.get(i).copied())
            }
            Query::Degree(_) => Answer::Degree(neighbors.len()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Answer {
    Bit(bool),
    Neighbor(Option<NodeId>),
    Degree(usize),
}

impl Answer {
    fn value(&self) -> u64 {
        match *self {
            Answer::Bit(b) => b as u64,
            Answer::Neighbor(None) => 0,
            Answer::Neighbor(Some(v)) => v as u64 + 1,
            Answer::Degree(d) => d as u64,
        }
    }

    fn from_value(q: &Query, x: u64) -> Answer {
        match q {
            Query::Adjacency(..) => Answer::Bit(x != 0),
            Query::Incidence(..) => Answer::Neighbor(x.checked_sub(1).map(|v| v as usize)),
            Query::Degree(_) => Answer::Degree(x as usize),
        }
    }
}

fn answer_width(n: usize) -> usize {
    width_for(n as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Next {
    Ask(Query),
    Verdict(bool),
}

/// A centralized tester as a state machine: fed the answer to its last
/// query (`None` at the start), it asks the next query or decides.
pub trait QueryTester {
    fn next(&mut self, answer: Option<Answer>) -> Next;

    /// Every query the tester will ask, in order, if it is non-adaptive.
    fn schedule(&self) -> Option<Vec<Query>> {
        None
    }
}

impl<T: QueryTester + ?Sized> QueryTester for Box<T> {
    fn next(&mut self, answer: Option<Answer>) -> Next {
        (**self).next(answer)
    }

    fn schedule(&self) -> Option<Vec<Query>> {
        (**self).schedule()
    }
}

/// Direct access to a graph, counting queries.
#[derive(Debug)]
pub struct QueryOracle<'g> {
    g: &'g Graph,
    count: usize,
}

impl<'g> QueryOracle<'g> {
    pub fn new(g: &'g Graph) -> Self {
        QueryOracle { g, count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn ask(&mut self, q: Query) -> Result<Answer> {
        q.check(self.g.n())?;
        self.count += 1;
        Ok(q.answer_locally(self.g.neighbors(q.target())))
    }
}

/// The tester run against the whole graph; returns the verdict and `q`.
pub fn run_central<T: QueryTester + ?Sized>(tester: &mut T, g: &Graph) -> Result<(bool, usize)> {
    let mut oracle = QueryOracle::new(g);
    let mut answer = None;
    loop {
        match tester.next(answer) {
            Next::Verdict(v) => return Ok((v, oracle.count())),
            Next::Ask(q) => answer = Some(oracle.ask(q)?),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub accept: bool,
    pub queries: usize,
    pub depth: usize,
    /// Rounds after the BFS tree is in place.
    pub rounds: usize,
    pub transcript: Transcript,
}

const QUERY: bool = false;
const VERDICT: bool = true;

/// One query travels down the tree while the previous answer is already
/// home; the target replies to its parent and answers are relayed upward.
struct Relay<'t> {
    node: TreeNode,
    idw: usize,
    aw: usize,
    tester: Option<&'t mut dyn QueryTester>,
    pending: Option<Query>,
    started: bool,
    queries: usize,
    verdict: Option<bool>,
    error: Option<Error>,
}

impl Relay<'_> {
    /// Root only: feeds `answer` in, answers its own queries on the spot,
    /// and sends the first query that needs the network.
    fn drive(&mut self, ctx: &mut NodeCtx<'_>, mut answer: Option<Answer>) {
        let tester = self.tester.as_mut().expect("root holds the tester");
        loop {
            match tester.next(answer.take()) {
                Next::Verdict(v) => {
                    self.verdict = Some(v);
                    break;
                }
                Next::Ask(q) => {
                    if let Err(e) = q.check(ctx.n()) {
                        self.error = Some(e);
                        self.verdict = Some(false);
                        break;
                    }
                    self.queries += 1;
                    if q.target() == ctx.id() {
                        answer = Some(q.answer_locally(ctx.ports()));
                        continue;
                    }
                    let mut msg = BitString::from_uint(QUERY as u64, 1);
                    msg.extend_from(&q.encode(self.idw));
                    for &c in &self.node.children {
                        ctx.send(c, msg.clone());
                    }
                    self.pending = Some(q);
                    return;
                }
            }
        }
        let mut msg = BitString::from_uint(VERDICT as u64, 1);
        msg.push_bit(self.verdict == Some(true));
        for &c in &self.node.children {
            ctx.send(c, msg.clone());
        }
    }
}

impl NodeProgram for Relay<'_> {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
        if self.tester.is_some() {
            if !self.started {
                self.started = true;
                self.drive(ctx, None);
            } else if let Some((_, msg)) = ctx.inbox().first() {
                let q = self.pending.take().expect("an answer follows a query");
                let x = msg.reader().read_uint(self.aw).unwrap_or(0);
                self.drive(ctx, Some(Answer::from_value(&q, x)));
            }
            return if self.verdict.is_some() { Status::Done } else { Status::Running };
        }
        let inbox: Vec<(usize, BitString)> = ctx.inbox().to_vec();
        for (port, msg) in inbox {
            if Some(port) != self.node.parent {
                if let Some(p) = self.node.parent {
                    ctx.send(p, msg);
                }
                continue;
            }
            for &c in &self.node.children {
                ctx.send(c, msg.clone());
            }
            let mut r = msg.reader();
            if r.read_bit() == Some(VERDICT) {
                self.verdict = r.read_bit();
                continue;
            }
            if let Some(q) = Query::decode(&mut r, self.idw) {
                if q.target() == ctx.id() {
                    let a = q.answer_locally(ctx.ports());
                    ctx.send(port, BitString::from_uint(a.value(), self.aw));
                }
            }
        }
        if self.verdict.is_some() {
            Status::Done
        } else {
            Status::Running
        }
    }
}

fn finish(mut net: Network<'_>, tree: &BfsTree, accept: bool, queries: usize, before: usize) -> SimOutcome {
    for v in 0..net.n() {
        net.set_output(v, if accept { ACCEPT } else { REJECT });
    }
    let transcript = net.into_transcript();
    SimOutcome {
        accept,
        queries,
        depth: tree.depth(),
        rounds: transcript.rounds - before,
        transcript,
    }
}

/// Step-by-step simulation; each query costs a round trip to its target.
pub fn run_adaptive<T: QueryTester>(
    tester: &mut T,
    topology: &Graph,
    root: NodeId,
    cfg: NetworkConfig,
) -> Result<SimOutcome> {
    let n = topology.n();
    let mut net = Network::new(topology, cfg)?;
    let tree = build_bfs(&mut net, root)?;
    let before = net.transcript().rounds;
    let (idw, aw) = (id_bits(n), answer_width(n));
    let mut slot: Option<&mut dyn QueryTester> = Some(tester);
    let mut progs: Vec<Relay<'_>> = (0..n)
        .map(|v| Relay {
            node: tree.nodes[v].clone(),
            idw,
            aw,
            tester: if v == root { slot.take() } else { None },
            pending: None,
            started: false,
            queries: 0,
            verdict: None,
            error: None,
        })
        .collect();
    net.run_phase("adaptive", &mut progs)?;
    let head = &mut progs[root];
    if let Some(e) = head.error.take() {
        return Err(e);
    }
    let (accept, queries) = (head.verdict == Some(true), head.queries);
    drop(progs);
    Ok(finish(net, &tree, accept, queries, before))
}

/// Queries broadcast, answers pipelined back, verdict broadcast.
pub fn run_nonadaptive<T: QueryTester>(
    tester: &mut T,
    topology: &Graph,
    root: NodeId,
    cfg: NetworkConfig,
) -> Result<SimOutcome> {
    let n = topology.n();
    let schedule = tester
        .schedule()
        .ok_or_else(|| Error::Precondition("the tester does not declare its queries".into()))?;
    for q in &schedule {
        q.check(n)?;
    }
    let mut net = Network::new(topology, cfg)?;
    let tree = build_bfs(&mut net, root)?;
    let before = net.transcript().rounds;
    let (idw, aw) = (id_bits(n), answer_width(n));
    let mut payload = BitString::new();
    for q in &schedule {
        payload.extend_from(&q.encode(idw));
    }
    let held = broadcast(&mut net, &tree, &payload)?;

    let kw = width_for(schedule.len().saturating_sub(1) as u64);
    let items: Vec<Vec<BitString>> = (0..n)
        .map(|v| {
            let mut r = held[v].reader();
            let mut own = Vec::new();
            for k in 0..schedule.len() {
                let q = Query::decode(&mut r, idw).expect("declared query");
                if q.target() == v {
                    let mut it = BitString::from_uint(k as u64, kw);
                    it.push_uint(q.answer_locally(net.ports(v)).value(), aw);
                    own.push(it);
                }
            }
            own
        })
        .collect();
    let mut values = vec![None; schedule.len()];
    for it in pipelined_collect(&mut net, &tree, items, kw + aw)? {
        let mut r = it.reader();
        let k = r.read_uint(kw).expect("index") as usize;
        values[k] = r.read_uint(aw);
    }

    let mut answer = None;
    let mut asked = 0;
    let accept = loop {
        match tester.next(answer.take()) {
            Next::Verdict(v) => break v,
            Next::Ask(q) => {
                if schedule.get(asked) != Some(&q) {
                    return Err(Error::Contract(format!("query {q:?} was not declared at position {asked}")));
                }
                let x = values[asked].ok_or_else(|| Error::Abort(format!("query {asked} went unanswered")))?;
                answer = Some(Answer::from_value(&q, x));
                asked += 1;
            }
        }
    };
    broadcast_values(&mut net, &tree, &[accept as u64], 1)?;
    Ok(finish(net, &tree, accept, asked, before))
}

/// Random stream for a tester run under `seed`.
pub fn tester_rng(seed: u64) -> StreamRng {
    keyed_rng(seed, &[TAG_QUERY])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    Pairs,
    Degrees,
}

/// Estimates edge density `|E| / C(n, 2)` from `q` sampled pairs or
/// degrees; accepts iff the estimate is at most `rho + eps / 2`.
#[derive(Clone, Debug)]
pub struct DensityTester {
    n: usize,
    rho: f64,
    eps: f64,
    queries: Vec<Query>,
    sum: usize,
    asked: usize,
}

impl DensityTester {
    pub fn new<R: Rng + ?Sized>(n: usize, rho: f64, eps: f64, q: usize, probe: Probe, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(Error::Input("need at least 2 nodes".into()));
        }
        let queries = (0..q)
            .map(|_| match probe {
                Probe::Degrees => Query::Degree(rng.gen_range(0..n)),
                Probe::Pairs => {
                    let u = rng.gen_range(0..n);
                    let v = (u + rng.gen_range(1..n)) % n;
                    Query::Adjacency(u, v)
                }
            })
            .collect();
        Ok(DensityTester {
            n,
            rho,
            eps,
            queries,
            sum: 0,
            asked: 0,
        })
    }

    pub fn estimate(&self) -> f64 {
        if self.asked == 0 {
            return 0.0;
        }
        let per = match self.queries[0] {
            Query::Degree(_) => (self.n - 1) as f64,
            _ => 1.0,
        };
        self.sum as f64 / (self.asked as f64 * per)
    }
}

impl QueryTester for DensityTester {
    fn next(&mut self, answer: Option<Answer>) -> Next {
        match answer {
            Some(Answer::Bit(b)) => self.sum += b as usize,
            Some(Answer::Degree(d)) => self.sum += d,
            Some(Answer::Neighbor(_)) | None => {}
        }
        if answer.is_some() {
            self.asked += 1;
        }
        match self.queries.get(self.asked) {
            Some(&q) => Next::Ask(q),
            None => Next::Verdict(self.estimate() <= self.rho + self.eps / 2.0),
        }
    }

    fn schedule(&self) -> Option<Vec<Query>> {
        Some(self.queries.clone())
    }
}

/// Random walk that rejects on meeting a node of degree above `max_degree`.
/// Which neighbor to ask for depends on the degree just seen.
#[derive(Clone, Debug)]
pub struct WalkTester {
    n: usize,
    steps: usize,
    max_degree: usize,
    rng: StreamRng,
    at: Option<NodeId>,
    last: Option<Query>,
    taken: usize,
}

impl WalkTester {
    pub fn new(n: usize, steps: usize, max_degree: usize, rng: StreamRng) -> Self {
        WalkTester {
            n,
            steps,
            max_degree,
            rng,
            at: None,
            last: None,
            taken: 0,
        }
    }
}

impl QueryTester for WalkTester {
    fn next(&mut self, answer: Option<Answer>) -> Next {
        let q = match (self.last, answer) {
            (None, _) => {
                let v = self.rng.gen_range(0..self.n);
                self.at = Some(v);
                Query::Degree(v)
            }
            (Some(Query::Degree(v)), Some(Answer::Degree(d))) => {
                if d > self.max_degree {
                    return Next::Verdict(false);
                }
                if d == 0 || self.taken == self.steps {
                    return Next::Verdict(true);
                }
                Query::Incidence(v, self.rng.gen_range(0..d))
            }
            (Some(Query::Incidence(..)), Some(Answer::Neighbor(Some(w)))) => {
                self.taken += 1;
                self.at = Some(w);
                Query::Degree(w)
            }
            _ => return Next::Verdict(false),
        };
        self.last = Some(q);
        Next::Ask(q)
    }
}

#[cfg(test)]
mod tests;
