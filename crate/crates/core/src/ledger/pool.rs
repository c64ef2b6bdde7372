use std::collections::{BTreeMap, HashMap, HashSet};

use crate::codec::Hash256;
use crate::error::{Error, Result};
use crate::ledger::tx::NetworkDataTransaction;

/// Pending transactions ordered by `(arrival tick, txid)`.
///
/// A txid is accepted at most once over the lifetime of the pool, so a
/// transaction already committed cannot re-enter.
#[derive(Clone, Debug, Default)]
pub struct TxPool {
    pending: BTreeMap<(u64, Hash256), NetworkDataTransaction>,
    arrival: HashMap<Hash256, u64>,
    seen: HashSet<Hash256>,
}

impl TxPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Adds `nt` unless its txid was seen before. Malformed transactions are
    /// an error.
    pub fn submit(&mut self, nt: NetworkDataTransaction, arrival_tick: u64) -> Result<bool> {
        if nt.ip_src == nt.ip_dest {
            return Err(Error::SelfFlow(nt.ip_src));
        }
        if !nt.is_well_formed() {
            return Err(Error::Decode(format!("transaction {} fails its txid check", nt.txid)));
        }
        if !self.seen.insert(nt.txid) {
            return Ok(false);
        }
        self.arrival.insert(nt.txid, arrival_tick);
        self.pending.insert((arrival_tick, nt.txid), nt);
        Ok(true)
    }

    pub fn contains(&self, txid: &Hash256) -> bool {
        self.arrival.contains_key(txid)
    }

    /// First `max` pending transactions in pool order. They stay in the pool
    /// until committed.
    pub fn peek(&self, max: usize) -> Vec<NetworkDataTransaction> {
        self.pending.values().take(max).cloned().collect()
    }

    /// Drops committed transactions from the pending set. Transactions this
    /// pool never saw are remembered so they cannot be submitted later.
    pub fn mark_committed<'a>(&mut self, txs: impl IntoIterator<Item = &'a NetworkDataTransaction>) {
        for tx in txs {
            self.seen.insert(tx.txid);
            if let Some(tick) = self.arrival.remove(&tx.txid) {
                self.pending.remove(&(tick, tx.txid));
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &NetworkDataTransaction> {
        self.pending.values()
    }
}
