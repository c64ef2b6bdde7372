use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder, Hash256};
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::ledger::block::Block;
use crate::ledger::state::LedgerConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn segment_name(first: u64, last: u64) -> String {
    format!("blocks_{first}_{last}.bin")
}

/// Writes `blocks` (non-empty, contiguous heights) as one segment file of
/// length-prefixed canonical block encodings.
pub fn write_segment(dir: &Path, blocks: &[Block]) -> Result<PathBuf> {
    let (Some(first), Some(last)) = (blocks.first(), blocks.last()) else {
        return Err(Error::Config("refusing to write an empty segment".into()));
    };
    let mut e = Encoder::new();
    for b in blocks {
        e.bytes(&b.encode());
    }
    let path = dir.join(segment_name(first.height, last.height));
    fs::write(&path, e.finish())?;
    Ok(path)
}

pub fn read_segment(path: &Path) -> Result<Vec<Block>> {
    let bytes = fs::read(path)?;
    let mut d = Decoder::new(&bytes);
    let mut out = Vec::new();
    while !d.is_empty() {
        out.push(Block::decode(d.bytes()?)?);
    }
    Ok(out)
}

fn parse_segment_name(name: &str) -> Option<(u64, u64)> {
    let core = name.strip_prefix("blocks_")?.strip_suffix(".bin")?;
    let (a, b) = core.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Every block under `dir`, in height order. Segments must tile the heights
/// from 0 without gaps and each file must hold the heights its name claims.
pub fn read_chain(dir: &Path) -> Result<Vec<Block>> {
    let mut segments = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(range) = parse_segment_name(&name) {
            segments.push((range, entry.path()));
        }
    }
    segments.sort();
    let mut chain: Vec<Block> = Vec::new();
    for ((first, last), path) in segments {
        let expected = chain.len() as u64;
        if first != expected {
            return Err(Error::NonContiguous { expected, got: first });
        }
        let blocks = read_segment(&path)?;
        for (offset, b) in blocks.iter().enumerate() {
            if b.height != first + offset as u64 {
                return Err(Error::NonContiguous {
                    expected: first + offset as u64,
                    got: b.height,
                });
            }
        }
        if blocks.last().map(|b| b.height) != Some(last) {
            return Err(Error::Decode(format!("{} does not end at height {last}", path.display())));
        }
        chain.extend(blocks);
    }
    Ok(chain)
}

/// Per-round entry of the manifest: which heights the round consumed and the
/// state root it produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub first_height: u64,
    pub block_count: u64,
    pub state_root: Hash256,
}

/// Everything besides the blocks that a replay needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub ledger: LedgerConfig,
    pub detector: DetectorConfig,
    pub genesis_root: Hash256,
    pub rounds: Vec<RoundRecord>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let raw = fs::read(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_slice(&raw)?)
    }
}
