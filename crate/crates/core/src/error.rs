use thiserror::Error;

use crate::host::HostId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid host address {0:?}")]
    InvalidHost(String),

    #[error("flow from {0} to itself")]
    SelfFlow(HostId),

    #[error("mutual contacts requested for identical hosts {0}")]
    SamePair(HostId),

    #[error("vertex {0} is not in the graph")]
    UnknownVertex(HostId),

    #[error("modularity is undefined for a graph without edges")]
    NoEdges,

    #[error("block at height {height} proposed by generator {proposer}, expected leader {expected}")]
    WrongLeader {
        height: u64,
        proposer: u32,
        expected: u32,
    },

    #[error("non-contiguous blocks: expected height {expected}, got {got}")]
    NonContiguous { expected: u64, got: u64 },

    #[error("flow {src} -> {dst} does not touch the agent subnet")]
    OutsideSubnet { src: HostId, dst: HostId },

    #[error("infeasible bot overlay: {0}")]
    InfeasibleOverlay(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("no block reached quorum at height {height}")]
    Stalled { height: u64 },

    #[error("replica divergence at round {round}: {detail}")]
    Divergence { round: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
