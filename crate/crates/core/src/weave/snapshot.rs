//! Snapshot file format and replay verification.
//!
//! ```text
//! file    := "PWEAVE01" block*
//! block   := u32 content-len, content, block-digest[32]
//! content := u64 height, opt-id prev, opt-id recall, u32 tx-count, (u32 len, tx-record)*
//! opt-id  := 0x00 | 0x01 digest[32]
//! tx      := owner-key[32], signature[64], u64 submitted-at, u64 fee, u64 len, canonical-tx
//! ```
//!
//! The block digest covers the whole content, so any byte of a block record
//! (including logical timestamps and fees) is bound to its id. The file is
//! append-only: mining a block appends one record.

use std::collections::HashSet;
use std::fmt;

use crate::encoding::{self, Reader, Writer};

use super::{parse_canonical, recall_index, Block, BlockId, Transaction, TxId, WeaveError};

pub(crate) const MAGIC: &[u8; 8] = b"PWEAVE01";
pub(crate) const PENDING_MAGIC: &[u8; 8] = b"PWPEND01";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    BadMagic,
    /// Record at this height could not be parsed; replay stops here.
    Malformed { height: u64 },
    BlockIdMismatch { height: u64 },
    HeightMismatch { height: u64, recorded: u64 },
    PrevMismatch { height: u64 },
    RecallMismatch { height: u64 },
    TxIntegrity { height: u64, tx: TxId, reason: String },
    DuplicateTx { height: u64, tx: TxId },
}

impl Violation {
    pub fn height(&self) -> Option<u64> {
        match self {
            Violation::BadMagic => None,
            Violation::Malformed { height }
            | Violation::BlockIdMismatch { height }
            | Violation::HeightMismatch { height, .. }
            | Violation::PrevMismatch { height }
            | Violation::RecallMismatch { height }
            | Violation::TxIntegrity { height, .. }
            | Violation::DuplicateTx { height, .. } => Some(*height),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadMagic => write!(f, "not a weave snapshot"),
            Violation::Malformed { height } => write!(f, "height {height}: malformed block record"),
            Violation::BlockIdMismatch { height } => write!(f, "height {height}: block id does not match content"),
            Violation::HeightMismatch { height, recorded } => {
                write!(f, "height {height}: record claims height {recorded}")
            }
            Violation::PrevMismatch { height } => write!(f, "height {height}: previous-block link broken"),
            Violation::RecallMismatch { height } => write!(f, "height {height}: recall block rule violated"),
            Violation::TxIntegrity { height, tx, reason } => write!(f, "height {height}: transaction {tx}: {reason}"),
            Violation::DuplicateTx { height, tx } => write!(f, "height {height}: transaction {tx} sealed twice"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub blocks: usize,
    pub transactions: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn write_opt_id(w: &mut Writer, id: &Option<BlockId>) {
    match id {
        None => {
            w.u8(0);
        }
        Some(id) => {
            w.u8(1).raw(&id.digest());
        }
    }
}

fn read_opt_id(r: &mut Reader<'_>) -> Option<Option<BlockId>> {
    match r.u8()? {
        0 => Some(None),
        1 => Some(Some(BlockId::from_digest(r.array()?))),
        _ => None,
    }
}

pub(crate) fn encode_tx_record(tx: &Transaction) -> Vec<u8> {
    let mut sig = [0u8; 64];
    let n = tx.signature.len().min(64);
    sig[..n].copy_from_slice(&tx.signature[..n]);
    let mut w = Writer::default();
    w.raw(&tx.owner_key)
        .raw(&sig)
        .u64(tx.submitted_at)
        .u64(tx.fee)
        .bytes64(&tx.canonical_bytes());
    w.buf
}

pub(crate) fn decode_tx_record(bytes: &[u8]) -> Option<Transaction> {
    let mut r = Reader::new(bytes);
    let owner_key = r.array::<32>()?;
    let signature = r.array::<64>()?.to_vec();
    let submitted_at = r.u64()?;
    let fee = r.u64()?;
    let canonical = r.bytes64()?;
    if !r.is_empty() {
        return None;
    }
    let (owner, tags, data) = parse_canonical(canonical)?;
    Some(Transaction {
        id: TxId::from_digest(encoding::sha256(canonical)),
        owner,
        owner_key,
        signature,
        tags,
        data,
        submitted_at,
        fee,
        bundled_in: None,
    })
}

pub(crate) fn block_content(
    height: u64,
    prev: &Option<BlockId>,
    recall: &Option<BlockId>,
    txs: &[&Transaction],
) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(height);
    write_opt_id(&mut w, prev);
    write_opt_id(&mut w, recall);
    w.u32(txs.len() as u32);
    for tx in txs {
        w.bytes32(&encode_tx_record(tx));
    }
    w.buf
}

pub(crate) fn encode_block_record(content: &[u8], block_id: &BlockId) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes32(content).raw(&block_id.digest());
    w.buf
}

/// One parsed block record, before any semantic checks.
pub(crate) struct RawBlock {
    pub recorded_height: u64,
    pub prev_id: Option<BlockId>,
    pub recall_id: Option<BlockId>,
    pub txs: Vec<Transaction>,
    pub block_id: BlockId,
    pub content_digest: [u8; 32],
}

impl RawBlock {
    pub fn to_block(&self) -> Block {
        Block {
            height: self.recorded_height,
            prev_id: self.prev_id.clone(),
            recall_id: self.recall_id.clone(),
            tx_ids: self.txs.iter().map(|t| t.id.clone()).collect(),
            block_id: self.block_id.clone(),
        }
    }
}

fn parse_block(r: &mut Reader<'_>) -> Option<RawBlock> {
    let content = r.bytes32()?;
    let block_id = BlockId::from_digest(r.array()?);
    let mut c = Reader::new(content);
    let recorded_height = c.u64()?;
    let prev_id = read_opt_id(&mut c)?;
    let recall_id = read_opt_id(&mut c)?;
    let count = c.u32()? as usize;
    let mut txs = Vec::with_capacity(count.min(65_536));
    for _ in 0..count {
        txs.push(decode_tx_record(c.bytes32()?)?);
    }
    if !c.is_empty() {
        return None;
    }
    Some(RawBlock {
        recorded_height,
        prev_id,
        recall_id,
        txs,
        block_id,
        content_digest: encoding::sha256(content),
    })
}

/// Parses every block record, stopping at the first unparseable one.
pub(crate) fn parse_blocks(bytes: &[u8]) -> (Vec<RawBlock>, Option<Violation>) {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return (Vec::new(), Some(Violation::BadMagic));
    }
    let mut r = Reader::new(&bytes[MAGIC.len()..]);
    let mut blocks = Vec::new();
    while !r.is_empty() {
        match parse_block(&mut r) {
            Some(b) => blocks.push(b),
            None => {
                let height = blocks.len() as u64;
                return (blocks, Some(Violation::Malformed { height }));
            }
        }
    }
    (blocks, None)
}

/// Replays a serialized weave from genesis and reports every rule violation:
/// block ids, height sequence, predecessor links, the recall rule and
/// per-transaction integrity.
pub fn verify_snapshot(bytes: &[u8]) -> VerifyReport {
    let (blocks, parse_violation) = parse_blocks(bytes);
    let mut report = VerifyReport {
        blocks: blocks.len(),
        ..Default::default()
    };
    if blocks.is_empty() && parse_violation.is_none() {
        report.violations.push(Violation::Malformed { height: 0 });
    }
    let mut seen = HashSet::new();
    for (i, block) in blocks.iter().enumerate() {
        let height = i as u64;
        let v = &mut report.violations;
        if block.content_digest != block.block_id.digest() {
            v.push(Violation::BlockIdMismatch { height });
        }
        if block.recorded_height != height {
            v.push(Violation::HeightMismatch {
                height,
                recorded: block.recorded_height,
            });
        }
        let expected_prev = (i > 0).then(|| blocks[i - 1].block_id.clone());
        if block.prev_id != expected_prev {
            v.push(Violation::PrevMismatch { height });
        }
        let expected_recall = match &expected_prev {
            Some(prev) if height >= 2 => {
                Some(blocks[recall_index(prev, height) as usize].block_id.clone())
            }
            _ => None,
        };
        if block.recall_id != expected_recall {
            v.push(Violation::RecallMismatch { height });
        }
        for tx in &block.txs {
            report.transactions += 1;
            if let Err(e) = tx.check_integrity() {
                v.push(Violation::TxIntegrity {
                    height,
                    tx: tx.id.clone(),
                    reason: e.to_string(),
                });
            }
            if !seen.insert(tx.id.clone()) {
                v.push(Violation::DuplicateTx {
                    height,
                    tx: tx.id.clone(),
                });
            }
        }
    }
    report.violations.extend(parse_violation);
    report
}

pub(crate) fn encode_pending(txs: &[&Transaction]) -> Vec<u8> {
    let mut w = Writer::default();
    w.raw(PENDING_MAGIC).u32(txs.len() as u32);
    for tx in txs {
        w.bytes32(&encode_tx_record(tx));
    }
    w.buf
}

pub(crate) fn decode_pending(bytes: &[u8]) -> Result<Vec<Transaction>, WeaveError> {
    let corrupt = || WeaveError::CorruptSnapshot("malformed pending pool".into());
    if bytes.len() < PENDING_MAGIC.len() || &bytes[..PENDING_MAGIC.len()] != PENDING_MAGIC {
        return Err(corrupt());
    }
    let mut r = Reader::new(&bytes[PENDING_MAGIC.len()..]);
    let count = r.u32().ok_or_else(corrupt)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let rec = r.bytes32().ok_or_else(corrupt)?;
        out.push(decode_tx_record(rec).ok_or_else(corrupt)?);
    }
    if !r.is_empty() {
        return Err(corrupt());
    }
    Ok(out)
}
