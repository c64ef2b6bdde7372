//! Canonical byte encoding, SHA-256 hashing and binary Merkle roots.
//!
//! Every field is written as a 4-byte big-endian length followed by the field
//! bytes. Integers are big-endian. Collections are written as a length-prefixed
//! count followed by their elements in canonical order, so two replicas holding
//! the same logical value always produce the same bytes.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::host::HostId;

/// A 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0; 32]);

    pub fn digest(bytes: &[u8]) -> Self {
        Hash256(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let raw = hex::decode(s).map_err(|e| Error::Decode(e.to_string()))?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| Error::Decode(format!("expected 32 bytes in {s:?}")))?;
        Ok(Hash256(arr))
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", &self.to_hex()[..16])
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Hash256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Writer for the canonical encoding.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, field: &[u8]) -> &mut Self {
        let len = u32::try_from(field.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn host(&mut self, h: HostId) -> &mut Self {
        self.bytes(&h.octets())
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.bytes(&h.0)
    }

    /// Appends an already-encoded value without an extra length prefix.
    pub fn raw(&mut self, encoded: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(encoded);
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Reader for the canonical encoding.
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let header = self
            .buf
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::Decode(format!("truncated length at offset {}", self.pos)))?;
        let len = u32::from_be_bytes(header.try_into().unwrap()) as usize;
        let start = self.pos + 4;
        let field = self
            .buf
            .get(start..start + len)
            .ok_or_else(|| Error::Decode(format!("truncated field at offset {start}")))?;
        self.pos = start + len;
        Ok(field)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N]> {
        let field = self.bytes()?;
        field
            .try_into()
            .map_err(|_| Error::Decode(format!("expected {N}-byte field, got {}", field.len())))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.fixed()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.fixed()?))
    }

    pub fn host(&mut self) -> Result<HostId> {
        let o: [u8; 4] = self.fixed()?;
        Ok(HostId::new(o[0], o[1], o[2], o[3]))
    }

    pub fn hash(&mut self) -> Result<Hash256> {
        Ok(Hash256(self.fixed()?))
    }
}

fn hash_pair(left: &Hash256, right: &Hash256) -> Hash256 {
    let mut h = Sha256::new();
    h.update(left.0);
    h.update(right.0);
    Hash256(h.finalize().into())
}

/// Root of a binary Merkle tree over already-hashed leaves.
///
/// A single leaf is its own root. Odd levels duplicate their last node. The
/// empty tree hashes to `SHA-256("")`.
pub fn merkle_root_of_hashes(leaves: &[Hash256]) -> Hash256 {
    if leaves.is_empty() {
        return Hash256::digest(&[]);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => hash_pair(l, r),
                [l] => hash_pair(l, l),
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

/// Merkle root over raw leaf encodings; each leaf is hashed first.
pub fn merkle_root<L: AsRef<[u8]>>(leaves: &[L]) -> Hash256 {
    let hashed: Vec<Hash256> = leaves.iter().map(|l| Hash256::digest(l.as_ref())).collect();
    merkle_root_of_hashes(&hashed)
}
