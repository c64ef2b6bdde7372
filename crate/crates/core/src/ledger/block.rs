use serde::{Deserialize, Serialize};

use crate::codec::{merkle_root_of_hashes, Decoder, Encoder, Hash256};
use crate::error::{Error, Result};
use crate::ledger::tx::{GeneratorId, NetworkDataTransaction};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash256,
    pub timestamp: u64,
    pub txs: Vec<NetworkDataTransaction>,
    pub proposer: GeneratorId,
    pub block_hash: Hash256,
}

impl Block {
    /// Builds a block and seals it with its hash.
    pub fn new(
        height: u64,
        prev_hash: Hash256,
        timestamp: u64,
        txs: Vec<NetworkDataTransaction>,
        proposer: GeneratorId,
    ) -> Self {
        let mut b = Block {
            height,
            prev_hash,
            timestamp,
            txs,
            proposer,
            block_hash: Hash256::ZERO,
        };
        b.block_hash = b.compute_hash();
        b
    }

    pub fn tx_root(&self) -> Hash256 {
        let ids: Vec<Hash256> = self.txs.iter().map(|t| t.txid).collect();
        merkle_root_of_hashes(&ids)
    }

    pub fn compute_hash(&self) -> Hash256 {
        let header = Encoder::new()
            .u64(self.height)
            .hash(&self.prev_hash)
            .u64(self.timestamp)
            .hash(&self.tx_root())
            .u32(self.proposer)
            .finish();
        Hash256::digest(&header)
    }

    pub fn hash_is_valid(&self) -> bool {
        self.block_hash == self.compute_hash()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.height)
            .hash(&self.prev_hash)
            .u64(self.timestamp)
            .u32(self.proposer)
            .u32(self.txs.len() as u32);
        for tx in &self.txs {
            e.bytes(&tx.encode());
        }
        e.hash(&self.block_hash);
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let height = d.u64()?;
        let prev_hash = d.hash()?;
        let timestamp = d.u64()?;
        let proposer = d.u32()?;
        let count = d.u32()? as usize;
        let mut txs = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = d.bytes()?;
            txs.push(NetworkDataTransaction::decode(&mut Decoder::new(raw))?);
        }
        let block = Block {
            height,
            prev_hash,
            timestamp,
            txs,
            proposer,
            block_hash: d.hash()?,
        };
        if !d.is_empty() {
            return Err(Error::Decode(format!("trailing bytes after block {height}")));
        }
        if !block.hash_is_valid() {
            return Err(Error::Decode(format!("block {height} fails its hash check")));
        }
        Ok(block)
    }
}
