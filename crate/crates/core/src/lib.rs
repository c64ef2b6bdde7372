//! Collaborative P2P botnet detection on a permissioned BFT ledger.
//!
//! Gateway agents turn observed flows into network-data transactions. Block
//! generators commit them in hash-chained blocks and, once per round, run a
//! deterministic state transition: update the mutual-contacts graph, detect
//! communities with seeded Louvain, classify them as botnet or benign and
//! publish blacklist changes back to the agents.

pub mod agent;
pub mod codec;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod host;
pub mod ledger;
pub mod louvain;
pub mod traffic;

pub use error::{Error, Result};
pub use host::HostId;
