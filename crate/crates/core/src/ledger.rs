//! Hash-chained commitment log.
//!
//! Only SHA-256 commitments go on the chain; cleartext entries live in a
//! separate store held by their owners and are re-validated against their
//! commitments on every read.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::Seq;

pub const RATE_SCALE: f64 = 65536.0; // 2^16 fixed-point for canonical rating bytes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Purchase,
    Disclosure,
    StopRequest,
    ClusterSnapshot,
    StateExport,
}

impl EntryKind {
    fn tag(self) -> u8 {
        match self {
            EntryKind::Purchase => 0,
            EntryKind::Disclosure => 1,
            EntryKind::StopRequest => 2,
            EntryKind::ClusterSnapshot => 3,
            EntryKind::StateExport => 4,
        }
    }
}

/// Cleartext of one committed event. `payload` is the ordered item list for
/// disclosures and cluster snapshots, a single opaque string for state
/// exports, and empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionEntry {
    pub kind: EntryKind,
    pub buyer: String,
    pub item_id: String,
    pub rate: f64,
    pub seq: Seq,
    pub payload: Vec<String>,
}

impl TransactionEntry {
    /// Unique byte serialization: kind tag, length-prefixed strings,
    /// big-endian integers, fixed-point rating.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::FixedPointRange(self.rate));
        }
        let mut out = Vec::new();
        out.push(self.kind.tag());
        push_str(&mut out, &self.buyer);
        push_str(&mut out, &self.item_id);
        out.extend_from_slice(&((self.rate * RATE_SCALE).round() as u64).to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        for item in &self.payload {
            push_str(&mut out, item);
        }
        Ok(out)
    }
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment(pub [u8; 32]);

impl Serialize for Commitment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("commitment must be 32 bytes"))?;
        Ok(Commitment(arr))
    }
}

pub fn commit(entry: &TransactionEntry) -> Result<Commitment> {
    Ok(Commitment(
        Sha256::digest(entry.canonical_bytes()?).into(),
    ))
}

pub fn verify_disclosure(entry: &TransactionEntry, commitment: &Commitment) -> bool {
    commit(entry).map_or(false, |c| c == *commitment)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub index: u64,
    pub prev_hash: Commitment,
    pub commitments: Vec<Commitment>,
    pub block_hash: Commitment,
}

fn block_hash(index: u64, prev_hash: &Commitment, commitments: &[Commitment]) -> Commitment {
    let mut hasher = Sha256::new();
    hasher.update(index.to_be_bytes());
    hasher.update(prev_hash.0);
    for c in commitments {
        hasher.update(c.0);
    }
    Commitment(hasher.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Valid,
    FirstBadIndex(u64),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Chain {
    pub blocks: Vec<LedgerBlock>,
}

impl Chain {
    pub fn append_block(&mut self, commitments: Vec<Commitment>) -> u64 {
        let index = self.blocks.len() as u64;
        let prev_hash = self
            .blocks
            .last()
            .map(|b| b.block_hash)
            .unwrap_or(Commitment([0u8; 32]));
        let hash = block_hash(index, &prev_hash, &commitments);
        self.blocks.push(LedgerBlock {
            index,
            prev_hash,
            commitments,
            block_hash: hash,
        });
        index
    }

    /// Recompute every block hash and linkage; reports the first bad block.
    pub fn verify(&self) -> ChainStatus {
        let mut prev = Commitment([0u8; 32]);
        for (pos, block) in self.blocks.iter().enumerate() {
            if block.index != pos as u64
                || block.prev_hash != prev
                || block_hash(block.index, &block.prev_hash, &block.commitments)
                    != block.block_hash
            {
                return ChainStatus::FirstBadIndex(pos as u64);
            }
            prev = block.block_hash;
        }
        ChainStatus::Valid
    }

    pub fn head_hash(&self) -> Commitment {
        self.blocks
            .last()
            .map(|b| b.block_hash)
            .unwrap_or(Commitment([0u8; 32]))
    }

    pub fn entry_count(&self) -> u64 {
        self.blocks.iter().map(|b| b.commitments.len() as u64).sum()
    }

    /// Commitment at a flattened ledger position (block order, then order
    /// within the block).
    pub fn commitment(&self, position: u64) -> Result<&Commitment> {
        let mut remaining = position;
        for block in &self.blocks {
            let n = block.commitments.len() as u64;
            if remaining < n {
                return Ok(&block.commitments[remaining as usize]);
            }
            remaining -= n;
        }
        Err(Error::LedgerIndexOutOfRange(position))
    }
}

/// Owner-held cleartexts, keyed by ledger position.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EntryStore {
    pub entries: Vec<TransactionEntry>,
}

impl EntryStore {
    pub fn push(&mut self, entry: TransactionEntry) -> u64 {
        self.entries.push(entry);
        (self.entries.len() - 1) as u64
    }

    /// Entry at a ledger position, re-validated against its on-chain
    /// commitment.
    pub fn get_transaction(&self, chain: &Chain, index: u64) -> Result<&TransactionEntry> {
        let entry = self
            .entries
            .get(index as usize)
            .ok_or(Error::LedgerIndexOutOfRange(index))?;
        let commitment = chain.commitment(index)?;
        if !verify_disclosure(entry, commitment) {
            return Err(Error::Integrity(format!(
                "cleartext at position {} does not match its commitment",
                index
            )));
        }
        Ok(entry)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line)?);
        }
        Ok(EntryStore { entries })
    }
}
