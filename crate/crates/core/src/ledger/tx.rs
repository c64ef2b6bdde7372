use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder, Hash256};
use crate::error::{Error, Result};
use crate::host::HostId;

/// Opaque 32-byte public key identifying an agent or a transaction pool.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub Hash256);

impl PublicKey {
    /// Deterministic key for a named entity, e.g. `("agent", 3)`.
    pub fn derive(kind: &str, index: u32) -> Self {
        let bytes = Encoder::new().bytes(kind.as_bytes()).u32(index).finish();
        PublicKey(Hash256::digest(&bytes))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.0.to_hex()[..12])
    }
}

/// Index of a block generator (replica).
pub type GeneratorId = u32;

/// One observed flow carried onto the ledger.
///
/// `tick` is the logical time at which the agent observed the flow. It keeps
/// repeated flows between the same endpoints distinct so that contacts can be
/// refreshed round after round, while an identical re-submission of the same
/// observation still deduplicates by txid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDataTransaction {
    pub device_addr: PublicKey,
    pub ip_src: HostId,
    pub ip_dest: HostId,
    pub tx_pool_addr: PublicKey,
    pub tick: u64,
    pub txid: Hash256,
}

impl NetworkDataTransaction {
    pub fn new(
        device_addr: PublicKey,
        ip_src: HostId,
        ip_dest: HostId,
        tx_pool_addr: PublicKey,
        tick: u64,
    ) -> Result<Self> {
        if ip_src == ip_dest {
            return Err(Error::SelfFlow(ip_src));
        }
        let mut nt = NetworkDataTransaction {
            device_addr,
            ip_src,
            ip_dest,
            tx_pool_addr,
            tick,
            txid: Hash256::ZERO,
        };
        nt.txid = nt.compute_txid();
        Ok(nt)
    }

    fn body(&self) -> Vec<u8> {
        Encoder::new()
            .hash(&self.device_addr.0)
            .host(self.ip_src)
            .host(self.ip_dest)
            .hash(&self.tx_pool_addr.0)
            .u64(self.tick)
            .finish()
    }

    pub fn compute_txid(&self) -> Hash256 {
        Hash256::digest(&self.body())
    }

    /// Endpoints differ and the txid matches the fields.
    pub fn is_well_formed(&self) -> bool {
        self.ip_src != self.ip_dest && self.txid == self.compute_txid()
    }

    pub fn flow(&self) -> (HostId, HostId) {
        (self.ip_src, self.ip_dest)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(&self.body()).hash(&self.txid);
        e.finish()
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self> {
        let nt = NetworkDataTransaction {
            device_addr: PublicKey(d.hash()?),
            ip_src: d.host()?,
            ip_dest: d.host()?,
            tx_pool_addr: PublicKey(d.hash()?),
            tick: d.u64()?,
            txid: d.hash()?,
        };
        if !nt.is_well_formed() {
            return Err(Error::Decode(format!("transaction {} is malformed", nt.txid)));
        }
        Ok(nt)
    }
}
