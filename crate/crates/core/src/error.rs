//! Error types shared across the crate.

use thiserror::Error;

/// Why a candidate subgraph cover was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoverDefect {
    /// Subgraph `index` does not induce a connected graph.
    SubgraphDisconnected { index: usize },
    /// Some node of the parent graph belongs to no subgraph.
    CoverIncomplete { missing_node: usize },
    /// The union graph over all subgraph edge sets is disconnected.
    UnionDisconnected,
}

impl std::fmt::Display for CoverDefect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoverDefect::SubgraphDisconnected { index } => {
                write!(f, "subgraph {index} is disconnected")
            }
            CoverDefect::CoverIncomplete { missing_node } => {
                write!(f, "node {missing_node} belongs to no subgraph")
            }
            CoverDefect::UnionDisconnected => write!(f, "union of subgraph edges is disconnected"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has a self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node id {id} outside 1..={n}")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("graph is disconnected")]
    GraphDisconnected,
    #[error("invalid subgraph cover: {0}")]
    CoverInvalid(CoverDefect),
    #[error("ring cover requires at least 3 nodes, got {0}")]
    DegenerateRing(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prox weight {weight} too small; needs weight > {required} for a strongly convex subproblem")]
    WeightTooSmall { weight: f64, required: f64 },
    #[error("merit is infinite: consensus violation {violation} exceeds tolerance")]
    MeritInfinite { violation: f64 },
    #[error("activation set is empty")]
    EmptyActivation,
    #[error("no feasible penalty parameter in [{lo}, {hi}]")]
    NoFeasibleBeta { lo: f64, hi: f64 },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("config error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
