use thiserror::Error;

use crate::graph::NodeId;

/// Errors raised by the simulator itself (contract violations by a protocol).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("bandwidth violation in round {round}: edge {src}->{dst} carried {bits} bits (limit {limit})")]
    Bandwidth {
        round: usize,
        src: NodeId,
        dst: NodeId,
        bits: usize,
        limit: usize,
    },
    #[error("phase `{phase}` did not terminate within {max_rounds} rounds")]
    Timeout { phase: &'static str, max_rounds: usize },
    #[error("node {node} sent on port {port} but has degree {degree}")]
    BadPort {
        node: NodeId,
        port: usize,
        degree: usize,
    },
    #[error("bandwidth of {bandwidth} bits is below the {required} bits needed to address {n} nodes")]
    BandwidthTooSmall {
        bandwidth: usize,
        required: usize,
        n: usize,
    },
    #[error("malformed message at node {node}: {reason}")]
    Malformed { node: NodeId, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("node {node} out of range for a graph on {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("refusing exhaustive search on {n} nodes (cap is {cap})")]
    TooLarge { n: usize, cap: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("protocol aborted: {0}")]
    Abort(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
