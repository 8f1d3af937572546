//! Synchronous message passing over a fixed topology with per-edge,
//! per-round bandwidth enforcement.
//!
//! A protocol is split into phases. Each phase runs one [`NodeProgram`] per
//! node until every node reports [`Status::Done`] in a round in which nothing
//! was sent. Rounds and bits accumulate across phases in one [`Transcript`].

mod bits;

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::graph::{Graph, NodeId};
use crate::rng::{keyed_rng, node_rng, StreamRng, TAG_PORTS};

pub use bits::{ceil_log2, fragment, reassemble, width_for, BitReader, BitString};

/// `max(32, 4 * ceil(log2 n))`.
pub fn default_bandwidth(n: usize) -> usize {
    (4 * ceil_log2(n as u64)).max(32)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Bits per directed edge per round; `None` is the unbounded (LOCAL) setting.
    pub bandwidth: Option<usize>,
    /// Cap on the total number of rounds across all phases.
    pub max_rounds: usize,
    pub seed: u64,
    /// Keep the per-round, per-edge event log.
    pub record_events: bool,
}

impl NetworkConfig {
    pub fn congest(n: usize, seed: u64) -> Self {
        NetworkConfig {
            bandwidth: Some(default_bandwidth(n)),
            max_rounds: 1_000_000,
            seed,
            record_events: true,
        }
    }

    pub fn local(seed: u64) -> Self {
        NetworkConfig {
            bandwidth: None,
            max_rounds: 1_000_000,
            seed,
            record_events: true,
        }
    }

    pub fn with_bandwidth(mut self, bits: usize) -> Self {
        self.bandwidth = Some(bits);
        self
    }

    pub fn with_max_rounds(mut self, rounds: usize) -> Self {
        self.max_rounds = rounds;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Done,
}

/// Everything a node may observe in one round.
pub struct NodeCtx<'a> {
    id: NodeId,
    n: usize,
    round: usize,
    bandwidth: Option<usize>,
    ports: &'a [NodeId],
    inbox: &'a [(usize, BitString)],
    outbox: &'a mut Vec<(usize, BitString)>,
    rng: &'a mut StreamRng,
}

impl NodeCtx<'_> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Network size, known to every node.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Round number within the current phase, starting at 1.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn degree(&self) -> usize {
        self.ports.len()
    }

    /// Id of the neighbor behind `port`.
    pub fn neighbor(&self, port: usize) -> NodeId {
        self.ports[port]
    }

    pub fn ports(&self) -> &[NodeId] {
        self.ports
    }

    pub fn port_to(&self, neighbor: NodeId) -> Option<usize> {
        self.ports.iter().position(|&w| w == neighbor)
    }

    /// Messages sent to this node in the previous round, as `(port, payload)`.
    pub fn inbox(&self) -> &[(usize, BitString)] {
        self.inbox
    }

    /// Bits per edge per round, `usize::MAX` when unbounded.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth.unwrap_or(usize::MAX)
    }

    pub fn send(&mut self, port: usize, msg: BitString) {
        self.outbox.push((port, msg));
    }

    pub fn rng(&mut self) -> &mut StreamRng {
        self.rng
    }
}

pub trait NodeProgram {
    fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub round: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub bits: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub name: String,
    pub rounds: usize,
    pub bits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeOutput {
    pub node: NodeId,
    pub verdict: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub rounds: usize,
    pub total_bits: u64,
    pub max_edge_bits: usize,
    pub phases: Vec<PhaseStats>,
    /// One entry per directed edge that carried bits in a round; rounds are
    /// numbered globally across phases.
    pub events: Vec<EdgeEvent>,
    pub outputs: Vec<NodeOutput>,
}

#[derive(Serialize)]
struct TranscriptJson<'a> {
    rounds: usize,
    total_bits: u64,
    max_edge_bits: usize,
    outputs: &'a [NodeOutput],
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TranscriptJson {
            rounds: self.rounds,
            total_bits: self.total_bits,
            max_edge_bits: self.max_edge_bits,
            outputs: &self.outputs,
        })
        .expect("transcript serializes")
    }

    pub fn write_events_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "round,src,dst,bits")?;
        for e in &self.events {
            writeln!(out, "{},{},{},{}", e.round, e.src, e.dst, e.bits)?;
        }
        Ok(())
    }

    pub fn phase_rounds(&self, name: &str) -> usize {
        self.phases
            .iter()
            .filter(|p| p.name == name)
            .map(|p| p.rounds)
            .sum()
    }

    /// Unique verdict shared by every node, if the outputs agree.
    pub fn unanimous(&self) -> Option<&str> {
        let first = self.outputs.first()?.verdict.as_str();
        self.outputs
            .iter()
            .all(|o| o.verdict == first)
            .then_some(first)
    }
}

/// A running network: topology, port numbering, node rng streams and the
/// transcript accumulated so far.
pub struct Network<'g> {
    topo: &'g Graph,
    cfg: NetworkConfig,
    ports: Vec<Vec<NodeId>>,
    // arrival[u][p]: the port at ports[u][p] through which u's messages arrive
    arrival: Vec<Vec<usize>>,
    rngs: Vec<StreamRng>,
    transcript: Transcript,
}

impl<'g> Network<'g> {
    pub fn new(topo: &'g Graph, cfg: NetworkConfig) -> Result<Self, SimError> {
        let n = topo.n();
        let required = width_for(n as u64);
        if let Some(b) = cfg.bandwidth {
            if b < required {
                return Err(SimError::BandwidthTooSmall {
                    bandwidth: b,
                    required,
                    n,
                });
            }
        }
        let ports: Vec<Vec<NodeId>> = (0..n)
            .map(|v| {
                let mut p = topo.neighbors(v).to_vec();
                p.shuffle(&mut keyed_rng(cfg.seed, &[TAG_PORTS, v as u64]));
                p
            })
            .collect();
        let arrival = (0..n)
            .map(|u| {
                ports[u]
                    .iter()
                    .map(|&w| ports[w].iter().position(|&x| x == u).expect("symmetric"))
                    .collect()
            })
            .collect();
        let rngs = (0..n).map(|v| node_rng(cfg.seed, v)).collect();
        Ok(Network {
            topo,
            cfg,
            ports,
            arrival,
            rngs,
            transcript: Transcript::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.topo.n()
    }

    pub fn topology(&self) -> &Graph {
        self.topo
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn bandwidth(&self) -> usize {
        self.cfg.bandwidth.unwrap_or(usize::MAX)
    }

    /// Port list of `v`: port `p` leads to `ports(v)[p]`.
    pub fn ports(&self, v: NodeId) -> &[NodeId] {
        &self.ports[v]
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }

    pub fn set_output(&mut self, node: NodeId, verdict: impl Into<String>) {
        let verdict = verdict.into();
        match self.transcript.outputs.iter_mut().find(|o| o.node == node) {
            Some(o) => o.verdict = verdict,
            None => {
                self.transcript.outputs.push(NodeOutput { node, verdict });
                self.transcript.outputs.sort_by_key(|o| o.node);
            }
        }
    }

    /// Runs one phase to completion and returns the rounds it took.
    ///
    /// A phase always closes with a silent step, so a later phase takes its
    /// first step in that same round: nodes read the last inbox, then send.
    pub fn run_phase<P: NodeProgram>(
        &mut self,
        name: &'static str,
        programs: &mut [P],
    ) -> Result<usize, SimError> {
        let n = self.n();
        assert_eq!(programs.len(), n, "one program per node");
        let limit = self.cfg.bandwidth;
        let mut inboxes: Vec<Vec<(usize, BitString)>> = vec![Vec::new(); n];
        let mut outbox = Vec::new();
        let mut load: Vec<usize> = Vec::new();
        let mut round = 0;
        let mut phase_bits = 0u64;
        let base = self.transcript.rounds - (!self.transcript.phases.is_empty()) as usize;
        loop {
            round += 1;
            let global = base + round;
            if global > self.cfg.max_rounds {
                return Err(SimError::Timeout {
                    phase: name,
                    max_rounds: self.cfg.max_rounds,
                });
            }
            let mut next: Vec<Vec<(usize, BitString)>> = vec![Vec::new(); n];
            let mut all_done = true;
            let mut sent_any = false;
            for v in 0..n {
                outbox.clear();
                let mut ctx = NodeCtx {
                    id: v,
                    n,
                    round,
                    bandwidth: limit,
                    ports: &self.ports[v],
                    inbox: &inboxes[v],
                    outbox: &mut outbox,
                    rng: &mut self.rngs[v],
                };
                if programs[v].step(&mut ctx) == Status::Running {
                    all_done = false;
                }
                let degree = self.ports[v].len();
                load.clear();
                load.resize(degree, 0);
                for (port, msg) in outbox.drain(..) {
                    if port >= degree {
                        return Err(SimError::BadPort {
                            node: v,
                            port,
                            degree,
                        });
                    }
                    load[port] += msg.len();
                    let dst = self.ports[v][port];
                    if let Some(b) = limit {
                        if load[port] > b {
                            return Err(SimError::Bandwidth {
                                round: global,
                                src: v,
                                dst,
                                bits: load[port],
                                limit: b,
                            });
                        }
                    }
                    sent_any = true;
                    next[dst].push((self.arrival[v][port], msg));
                }
                for (port, &bits) in load.iter().enumerate() {
                    if bits == 0 {
                        continue;
                    }
                    phase_bits += bits as u64;
                    self.transcript.max_edge_bits = self.transcript.max_edge_bits.max(bits);
                    if self.cfg.record_events {
                        self.transcript.events.push(EdgeEvent {
                            round: global,
                            src: v,
                            dst: self.ports[v][port],
                            bits,
                        });
                    }
                }
            }
            inboxes = next;
            if all_done && !sent_any {
                break;
            }
        }
        self.transcript.rounds = base + round;
        self.transcript.total_bits += phase_bits;
        self.transcript.phases.push(PhaseStats {
            name: name.to_string(),
            rounds: round,
            bits: phase_bits,
        });
        Ok(round)
    }
}

/// Runs a single-phase protocol from scratch.
pub fn run<P: NodeProgram>(
    topo: &Graph,
    cfg: NetworkConfig,
    programs: &mut [P],
) -> Result<Transcript, SimError> {
    let mut net = Network::new(topo, cfg)?;
    net.run_phase("run", programs)?;
    Ok(net.into_transcript())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Sends `bits` zero bits on every port in round 1, then stops.
    struct Burst {
        bits: usize,
        received: Vec<(usize, usize)>,
    }

    impl NodeProgram for Burst {
        fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
            for (port, msg) in ctx.inbox() {
                self.received.push((ctx.round(), ctx.neighbor(*port)));
                assert_eq!(msg.len(), self.bits);
            }
            if ctx.round() == 1 && self.bits > 0 {
                for p in 0..ctx.degree() {
                    ctx.send(p, BitString::zeros(self.bits));
                }
            }
            Status::Done
        }
    }

    fn bursts(n: usize, bits: usize) -> Vec<Burst> {
        (0..n)
            .map(|_| Burst {
                bits,
                received: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn one_bit_then_halt() {
        let g = Graph::path(2);
        let mut progs = bursts(2, 1);
        let t = run(&g, NetworkConfig::congest(2, 0), &mut progs).unwrap();
        assert_eq!(t.rounds, 2);
        assert_eq!(t.total_bits, 2);
        assert_eq!(progs[0].received, vec![(2, 1)]);
        assert_eq!(progs[1].received, vec![(2, 0)]);
    }

    #[test]
    fn oversize_send_is_rejected() {
        let g = Graph::path(2);
        let cfg = NetworkConfig::congest(2, 0);
        let b = cfg.bandwidth.unwrap();
        let err = run(&g, cfg, &mut bursts(2, b + 1)).unwrap_err();
        assert!(matches!(err, SimError::Bandwidth { round: 1, bits, .. } if bits == b + 1));
        assert!(run(&g, NetworkConfig::congest(2, 0), &mut bursts(2, b)).is_ok());
        assert!(run(&g, NetworkConfig::local(0), &mut bursts(2, 10 * b)).is_ok());
    }

    #[test]
    fn two_messages_share_the_budget() {
        struct Split;
        impl NodeProgram for Split {
            fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
                if ctx.round() == 1 {
                    ctx.send(0, BitString::from_uint(0, 20));
                    ctx.send(0, BitString::from_uint(0, 20));
                }
                Status::Done
            }
        }
        let g = Graph::path(2);
        let err = run(&g, NetworkConfig::congest(2, 0), &mut [Split, Split]).unwrap_err();
        assert!(matches!(err, SimError::Bandwidth { bits: 40, limit: 32, .. }));
    }

    #[test]
    fn timeout_and_bad_port() {
        struct Forever;
        impl NodeProgram for Forever {
            fn step(&mut self, _: &mut NodeCtx<'_>) -> Status {
                Status::Running
            }
        }
        let g = Graph::path(3);
        let cfg = NetworkConfig::congest(3, 0).with_max_rounds(10);
        let err = run(&g, cfg, &mut [Forever, Forever, Forever]).unwrap_err();
        assert_eq!(
            err,
            SimError::Timeout {
                phase: "run",
                max_rounds: 10
            }
        );

        struct Wild;
        impl NodeProgram for Wild {
            fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
                ctx.send(5, BitString::from_uint(1, 1));
                Status::Done
            }
        }
        let err = run(&g, NetworkConfig::congest(3, 0), &mut [Wild, Wild, Wild]).unwrap_err();
        assert!(matches!(err, SimError::BadPort { port: 5, .. }));
    }

    #[test]
    fn bandwidth_must_address_nodes() {
        let g = Graph::path(300);
        let cfg = NetworkConfig::congest(300, 0).with_bandwidth(8);
        assert!(matches!(
            Network::new(&g, cfg),
            Err(SimError::BandwidthTooSmall { required: 9, .. })
        ));
    }

    /// Sends random-width messages for three rounds.
    #[derive(Clone)]
    struct Noisy;
    impl NodeProgram for Noisy {
        fn step(&mut self, ctx: &mut NodeCtx<'_>) -> Status {
            if ctx.round() <= 3 {
                for p in 0..ctx.degree() {
                    let w = ctx.rng().gen_range(1..=16);
                    ctx.send(p, BitString::zeros(w));
                }
            }
            Status::Done
        }
    }

    #[test]
    fn replay_is_identical_and_bits_are_conserved() {
        let g = Graph::cycle(9);
        let a = run(&g, NetworkConfig::congest(9, 42), &mut vec![Noisy; 9]).unwrap();
        let b = run(&g, NetworkConfig::congest(9, 42), &mut vec![Noisy; 9]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let sum: u64 = a.events.iter().map(|e| e.bits as u64).sum();
        assert_eq!(sum, a.total_bits);
        assert_eq!(a.rounds, 4);
        let c = run(&g, NetworkConfig::congest(9, 43), &mut vec![Noisy; 9]).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn ports_are_a_permutation_and_json_has_schema() {
        let g = Graph::complete(5);
        let mut net = Network::new(&g, NetworkConfig::congest(5, 1)).unwrap();
        for v in 0..5 {
            let mut p = net.ports(v).to_vec();
            p.sort_unstable();
            assert_eq!(p, g.neighbors(v));
        }
        net.set_output(1, "accept");
        net.set_output(0, "reject");
        let json: serde_json::Value = serde_json::from_str(&net.transcript().to_json()).unwrap();
        assert_eq!(json["outputs"][0]["node"], 0);
        assert_eq!(json["outputs"][1]["verdict"], "accept");
        for key in ["rounds", "total_bits", "max_edge_bits"] {
            assert!(json.get(key).is_some());
        }
        let mut csv = Vec::new();
        net.transcript().write_events_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("round,src,dst,bits"));
    }
}
