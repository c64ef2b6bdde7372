use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codec::{merkle_root, Encoder, Hash256};
use crate::detector::{
    diff_blacklists, label_communities, BlacklistDelta, CommunitySet, DetectorConfig,
    LabelingStats,
};
use crate::error::{Error, Result};
use crate::graph::{ContactMap, MutualContactsGraph};
use crate::host::HostId;
use crate::ledger::block::Block;
use crate::louvain::louvain_traced;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LedgerConfig {
    pub n_generators: u32,
    /// Committed blocks per state transition.
    pub blocks_per_round: u32,
    /// Ticks between consecutive block proposals.
    pub tau_ticks: u64,
    pub max_block_txs: u32,
    /// Rounds a contact survives without being observed again.
    pub contact_window: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            n_generators: 4,
            blocks_per_round: 3,
            tau_ticks: 2,
            max_block_txs: 4096,
            contact_window: 4,
        }
    }
}

impl LedgerConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_generators", self.n_generators as u64),
            ("blocks_per_round", self.blocks_per_round as u64),
            ("tau_ticks", self.tau_ticks),
            ("max_block_txs", self.max_block_txs as u64),
            ("contact_window", self.contact_window),
        ];
        for (name, v) in fields {
            if v < 1 {
                return Err(Error::Config(format!("ledger.{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Replicated state: graph snapshot, labelled communities, committed blocks
/// and the Merkle root committing to them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub round_index: u64,
    pub graph: MutualContactsGraph,
    pub contact_map: ContactMap,
    pub commset: CommunitySet,
    pub blocks: Vec<Block>,
    pub blacklist: BTreeSet<HostId>,
    pub state_root: Hash256,
}

const LEAF_ROUND: u8 = 0;
const LEAF_EDGE: u8 = 1;
const LEAF_COMMUNITY: u8 = 2;
const LEAF_BLACKLIST: u8 = 3;
const LEAF_LAST_BLOCK: u8 = 4;

impl ChainState {
    pub fn genesis() -> Self {
        let mut s = ChainState::default();
        s.state_root = s.compute_state_root();
        s
    }

    pub fn last_block_hash(&self) -> Hash256 {
        self.blocks.last().map_or(Hash256::ZERO, |b| b.block_hash)
    }

    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    /// Canonical leaf encodings in state-root order: round index, edge
    /// triples, `(host, community, label)` triples, blacklist entries, last
    /// block hash.
    pub fn state_leaves(&self) -> Vec<Vec<u8>> {
        let mut leaves = vec![Encoder::new().u8(LEAF_ROUND).u64(self.round_index).finish()];
        for (u, v, w) in self.graph.edges() {
            leaves.push(Encoder::new().u8(LEAF_EDGE).host(u).host(v).u64(w).finish());
        }
        for (h, c, label) in self.commset.triples() {
            leaves.push(
                Encoder::new()
                    .u8(LEAF_COMMUNITY)
                    .host(h)
                    .u32(c)
                    .u8(label.code())
                    .finish(),
            );
        }
        for h in &self.blacklist {
            leaves.push(Encoder::new().u8(LEAF_BLACKLIST).host(*h).finish());
        }
        leaves.push(
            Encoder::new()
                .u8(LEAF_LAST_BLOCK)
                .hash(&self.last_block_hash())
                .finish(),
        );
        leaves
    }

    pub fn compute_state_root(&self) -> Hash256 {
        merkle_root(&self.state_leaves())
    }
}

/// Functional form of [`ChainState::compute_state_root`].
pub fn state_root(state: &ChainState) -> Hash256 {
    state.compute_state_root()
}

/// Everything a round produced besides the new state.
#[derive(Clone, Debug, Default)]
pub struct RoundOutcome {
    pub state: ChainState,
    pub blacklist_delta: BlacklistDelta,
    pub labeling: LabelingStats,
    pub nt_count: usize,
    pub modularity_trace: Vec<f64>,
}

/// Checks that `blocks` extend `state`'s chain with correct links and hashes.
pub fn check_contiguous(state: &ChainState, blocks: &[Block]) -> Result<()> {
    let mut prev = state.last_block_hash();
    for (expected_height, b) in (state.next_height()..).zip(blocks) {
        if b.height != expected_height {
            return Err(Error::NonContiguous {
                expected: expected_height,
                got: b.height,
            });
        }
        if b.prev_hash != prev || !b.hash_is_valid() {
            return Err(Error::NonContiguous {
                expected: expected_height,
                got: b.height,
            });
        }
        prev = b.block_hash;
    }
    Ok(())
}

/// The state transition: folds one round of committed blocks into `state`.
///
/// Steps, in order: collect flows from the blocks' transactions; record them
/// as contacts and expire stale ones; update the mutual-contacts graph through
/// the resulting delta; run Louvain seeded with the previous communities;
/// label communities (carrying labels of stable matches, classifying the
/// rest); diff blacklists; advance the round and recompute the state root.
pub fn transition(
    state: &ChainState,
    new_blocks: &[Block],
    cfg: &LedgerConfig,
    det: &DetectorConfig,
) -> Result<RoundOutcome> {
    check_contiguous(state, new_blocks)?;
    let flows: Vec<(HostId, HostId)> = new_blocks
        .iter()
        .flat_map(|b| b.txs.iter().map(|t| t.flow()))
        .collect();

    let round = state.round_index;
    let mut contact_map = state.contact_map.clone();
    let delta = contact_map.advance_round(&state.graph, &flows, round, cfg.contact_window)?;
    let graph = state.graph.apply_delta(&delta)?;

    let seed = state.commset.partition();
    let run = louvain_traced(&graph, Some(&seed));
    let (commset, labeling) = label_communities(&state.commset, &state.graph, &run.partition, &graph, det);
    let blacklist_delta = diff_blacklists(&state.commset, &commset);

    let mut blocks = state.blocks.clone();
    blocks.extend_from_slice(new_blocks);
    let mut next = ChainState {
        round_index: round + 1,
        graph,
        contact_map,
        blacklist: commset.blacklist(),
        commset,
        blocks,
        state_root: Hash256::ZERO,
    };
    next.state_root = next.compute_state_root();
    Ok(RoundOutcome {
        state: next,
        blacklist_delta,
        labeling,
        nt_count: flows.len(),
        modularity_trace: run.modularity_trace,
    })
}

pub fn execute_round(
    state: &ChainState,
    new_blocks: &[Block],
    cfg: &LedgerConfig,
    det: &DetectorConfig,
) -> Result<ChainState> {
    transition(state, new_blocks, cfg, det).map(|o| o.state)
}
