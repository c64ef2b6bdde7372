//! Host identifiers.
//!
//! Hosts are addressed by IPv4 address. The total order is the numeric order
//! of the four octets, which is the canonical visiting order used throughout
//! graph construction, community detection and serialization.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// An IPv4 host address in canonical dotted-quad form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostId(Ipv4Addr);

impl HostId {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        HostId(Ipv4Addr::new(a, b, c, d))
    }

    pub fn octets(&self) -> [u8; 4] {
        self.0.octets()
    }

    pub fn addr(&self) -> Ipv4Addr {
        self.0
    }
}

impl From<Ipv4Addr> for HostId {
    fn from(addr: Ipv4Addr) -> Self {
        HostId(addr)
    }
}

impl From<u32> for HostId {
    fn from(raw: u32) -> Self {
        HostId(Ipv4Addr::from(raw))
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for HostId {
    type Err = Error;

    /// Parses a canonical dotted quad. Octets with leading zeros are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let addr = Ipv4Addr::from_str(s).map_err(|_| Error::InvalidHost(s.to_string()))?;
        // std already rejects leading zeros, but keep the canonical-form check explicit.
        if addr.to_string() != s {
            return Err(Error::InvalidHost(s.to_string()));
        }
        Ok(HostId(addr))
    }
}

impl Serialize for HostId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for HostId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
