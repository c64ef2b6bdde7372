use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::codec::Hash256;
use crate::error::{Error, Result};
use crate::ledger::block::Block;
use crate::ledger::pool::TxPool;
use crate::ledger::tx::{GeneratorId, NetworkDataTransaction};

/// ⌈2n/3⌉ acknowledgements commit a block.
pub fn quorum_size(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

/// Round-robin leader. `view` counts failed attempts at this height, so each
/// retry moves to the next generator.
pub fn leader_for(height: u64, view: u64, n: u32) -> GeneratorId {
    ((height + view) % n as u64) as GeneratorId
}

/// Builds the leader's proposal from the head of `pool`.
#[allow(clippy::too_many_arguments)]
pub fn propose_block(
    leader: GeneratorId,
    pool: &TxPool,
    height: u64,
    view: u64,
    prev_hash: Hash256,
    tick: u64,
    n: u32,
    max_block_txs: usize,
) -> Result<Block> {
    let expected = leader_for(height, view, n);
    if leader != expected {
        return Err(Error::WrongLeader {
            height,
            proposer: leader,
            expected,
        });
    }
    Ok(Block::new(height, prev_hash, tick, pool.peek(max_block_txs), leader))
}

pub fn vote_and_commit(votes: &BTreeSet<GeneratorId>, n: usize) -> bool {
    votes.len() >= quorum_size(n)
}

/// Why a validator refused to vote.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    Height,
    PrevHash,
    BlockHash,
    Leader,
    Oversized,
    MalformedTx,
    DuplicateTx,
}

/// Validator checks: position in the chain, hash integrity, leader
/// correctness, transaction well-formedness and txid uniqueness against the
/// chain and within the block.
pub fn validate_block(
    block: &Block,
    height: u64,
    view: u64,
    prev_hash: Hash256,
    n: u32,
    max_block_txs: usize,
    committed: &HashSet<Hash256>,
) -> std::result::Result<(), Rejection> {
    if block.height != height {
        return Err(Rejection::Height);
    }
    if block.prev_hash != prev_hash {
        return Err(Rejection::PrevHash);
    }
    if !block.hash_is_valid() {
        return Err(Rejection::BlockHash);
    }
    if block.proposer != leader_for(height, view, n) {
        return Err(Rejection::Leader);
    }
    if block.txs.len() > max_block_txs {
        return Err(Rejection::Oversized);
    }
    let mut inside = HashSet::new();
    for tx in &block.txs {
        if !tx.is_well_formed() {
            return Err(Rejection::MalformedTx);
        }
        if committed.contains(&tx.txid) || !inside.insert(tx.txid) {
            return Err(Rejection::DuplicateTx);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    Honest,
    /// Never proposes, votes or processes messages.
    CrashSilent,
    /// Participates as a validator, but its own proposals carry a corrupted
    /// block hash.
    InvalidProposals,
}

#[derive(Clone, Debug)]
pub enum Message {
    Proposal { view: u64, block: Block },
    Vote { height: u64, view: u64, block_hash: Hash256 },
}

/// In-process delivery: one FIFO queue per sender, drained round-robin.
#[derive(Debug, Default)]
pub struct Bus {
    queues: Vec<VecDeque<(GeneratorId, Message)>>,
    cursor: usize,
}

impl Bus {
    pub fn new(n: u32) -> Self {
        Bus {
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            cursor: 0,
        }
    }

    pub fn send(&mut self, from: GeneratorId, to: GeneratorId, msg: Message) {
        self.queues[from as usize].push_back((to, msg));
    }

    pub fn broadcast(&mut self, from: GeneratorId, msg: Message) {
        for to in 0..self.queues.len() as u32 {
            self.send(from, to, msg.clone());
        }
    }

    /// Next message as `(from, to, msg)`.
    pub fn pop(&mut self) -> Option<(GeneratorId, GeneratorId, Message)> {
        let n = self.queues.len();
        for step in 0..n {
            let from = (self.cursor + step) % n;
            if let Some((to, msg)) = self.queues[from].pop_front() {
                self.cursor = (from + 1) % n;
                return Some((from as GeneratorId, to, msg));
            }
        }
        None
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }
}

/// One block generator: its pool, committed chain and vote book-keeping.
#[derive(Debug)]
pub struct Replica {
    pub id: GeneratorId,
    pub fault: Fault,
    pub pool: TxPool,
    pub chain: Vec<Block>,
    committed_txids: HashSet<Hash256>,
    proposals: BTreeMap<(u64, u64), Block>,
    votes: BTreeMap<(u64, u64, Hash256), BTreeSet<GeneratorId>>,
    n: u32,
    max_block_txs: usize,
}

impl Replica {
    pub fn new(id: GeneratorId, n: u32, max_block_txs: usize, fault: Fault) -> Self {
        Replica {
            id,
            fault,
            pool: TxPool::new(),
            chain: Vec::new(),
            committed_txids: HashSet::new(),
            proposals: BTreeMap::new(),
            votes: BTreeMap::new(),
            n,
            max_block_txs,
        }
    }

    pub fn is_live(&self) -> bool {
        self.fault != Fault::CrashSilent
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn head_hash(&self) -> Hash256 {
        self.chain.last().map_or(Hash256::ZERO, |b| b.block_hash)
    }

    fn propose(&self, view: u64, tick: u64) -> Result<Block> {
        let mut block = propose_block(
            self.id,
            &self.pool,
            self.height(),
            view,
            self.head_hash(),
            tick,
            self.n,
            self.max_block_txs,
        )?;
        if self.fault == Fault::InvalidProposals {
            block.block_hash = Hash256::digest(&block.block_hash.0);
        }
        Ok(block)
    }

    fn handle(&mut self, from: GeneratorId, msg: Message, bus: &mut Bus) {
        if !self.is_live() {
            return;
        }
        match msg {
            Message::Proposal { view, block } => {
                let check = validate_block(
                    &block,
                    self.height(),
                    view,
                    self.head_hash(),
                    self.n,
                    self.max_block_txs,
                    &self.committed_txids,
                );
                match check {
                    Ok(()) if block.proposer == from => {
                        let key = (block.height, view, block.block_hash);
                        self.proposals.insert((block.height, view), block);
                        bus.broadcast(
                            self.id,
                            Message::Vote {
                                height: key.0,
                                view: key.1,
                                block_hash: key.2,
                            },
                        );
                    }
                    Ok(()) => debug!("replica {} ignores relayed proposal from {from}", self.id),
                    Err(why) => debug!(
                        "replica {} rejects block {} from {from}: {why:?}",
                        self.id, block.height
                    ),
                }
            }
            Message::Vote {
                height,
                view,
                block_hash,
            } => {
                let voters = self.votes.entry((height, view, block_hash)).or_default();
                voters.insert(from);
                if vote_and_commit(voters, self.n as usize) {
                    self.try_commit(height, view, block_hash);
                }
            }
        }
    }

    fn try_commit(&mut self, height: u64, view: u64, block_hash: Hash256) {
        if height != self.height() {
            return;
        }
        let Some(block) = self.proposals.get(&(height, view)) else {
            return;
        };
        if block.block_hash != block_hash {
            return;
        }
        let block = block.clone();
        self.pool.mark_committed(&block.txs);
        self.committed_txids.extend(block.txs.iter().map(|t| t.txid));
        self.chain.push(block);
        self.proposals.retain(|(h, _), _| *h > height);
        self.votes.retain(|(h, _, _), _| *h > height);
    }
}

/// A set of replicas driven one height at a time over a shared bus.
#[derive(Debug)]
pub struct Cluster {
    pub replicas: Vec<Replica>,
    bus: Bus,
    /// Failed views (leader silent or proposal rejected) so far.
    pub view_changes: u64,
}

impl Cluster {
    pub fn new(n: u32, max_block_txs: usize, faults: &[Fault]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("cluster needs at least one generator".into()));
        }
        let replicas = (0..n)
            .map(|id| {
                let fault = faults.get(id as usize).copied().unwrap_or_default();
                Replica::new(id, n, max_block_txs, fault)
            })
            .collect();
        Ok(Cluster {
            replicas,
            bus: Bus::new(n),
            view_changes: 0,
        })
    }

    pub fn n(&self) -> u32 {
        self.replicas.len() as u32
    }

    pub fn live(&self) -> impl Iterator<Item = &Replica> {
        self.replicas.iter().filter(|r| r.is_live())
    }

    /// Hands a transaction to every live replica's pool. Returns whether any
    /// replica accepted it as new.
    pub fn submit(&mut self, nt: &NetworkDataTransaction, arrival_tick: u64) -> Result<bool> {
        let mut accepted = false;
        for r in self.replicas.iter_mut().filter(|r| r.is_live()) {
            accepted |= r.pool.submit(nt.clone(), arrival_tick)?;
        }
        Ok(accepted)
    }

    /// Common committed height of the live replicas.
    pub fn height(&self) -> u64 {
        self.live().map(Replica::height).min().unwrap_or(0)
    }

    /// Commits exactly one block at the next height, rotating the leader on
    /// every failed view. Returns `None` when no view within one full leader
    /// rotation reaches quorum.
    pub fn commit_next(&mut self, tick: u64) -> Result<Option<Block>> {
        let height = self.height();
        let n = self.n();
        for view in 0..n as u64 {
            let leader = leader_for(height, view, n) as usize;
            if self.replicas[leader].is_live() {
                let block = self.replicas[leader].propose(view, tick)?;
                self.deliver_proposal(leader as GeneratorId, view, block);
            }
            if self.live().all(|r| r.height() > height) {
                let block = self.live().next().map(|r| r.chain[height as usize].clone());
                self.check_agreement(height)?;
                return Ok(block);
            }
            self.view_changes += 1;
            debug!("height {height} view {view} failed, rotating leader");
        }
        warn!("height {height}: no quorum in a full leader rotation");
        Ok(None)
    }

    /// Broadcasts `block` as a proposal from `from`, runs the bus dry and
    /// returns the generators that voted for it.
    pub fn deliver_proposal(&mut self, from: GeneratorId, view: u64, block: Block) -> BTreeSet<GeneratorId> {
        let hash = block.block_hash;
        self.bus.broadcast(from, Message::Proposal { view, block });
        let mut voters = BTreeSet::new();
        while let Some((sender, to, msg)) = self.bus.pop() {
            if matches!(&msg, Message::Vote { block_hash, .. } if *block_hash == hash) {
                voters.insert(sender);
            }
            self.replicas[to as usize].handle(sender, msg, &mut self.bus);
        }
        voters
    }

    fn check_agreement(&self, height: u64) -> Result<()> {
        let mut hashes = self.live().map(|r| r.chain[height as usize].block_hash);
        let first = hashes.next();
        if hashes.any(|h| Some(h) != first) {
            return Err(Error::Divergence {
                round: height,
                detail: "live replicas committed different blocks".into(),
            });
        }
        Ok(())
    }
}
