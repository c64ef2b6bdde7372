//! Permissioned ledger: transaction pool, quorum-committed blocks and the
//! per-round state transition.

mod block;
mod consensus;
mod pool;
mod state;
mod store;
mod tx;

pub use block::Block;
pub use consensus::{
    leader_for, propose_block, quorum_size, validate_block, vote_and_commit, Bus, Cluster, Fault,
    Message, Rejection, Replica,
};
pub use pool::TxPool;
pub use state::{
    check_contiguous, execute_round, state_root, transition, ChainState, LedgerConfig,
    RoundOutcome,
};
pub use store::{
    read_chain, read_segment, segment_name, write_segment, Manifest, RoundRecord, MANIFEST_FILE,
};
pub use tx::{GeneratorId, NetworkDataTransaction, PublicKey};
