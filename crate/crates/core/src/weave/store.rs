use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::Serialize;

use crate::encoding;
use crate::keys::SigningKey;

use super::bundle::{self, bundle_tags, encode_items, is_bundle};
use super::snapshot::{self, block_content, encode_block_record, VerifyReport, MAGIC};
use super::{
    recall_index, Block, BlockId, Tag, Transaction, TxId, WeaveError, DEFAULT_MAX_DATA_BYTES,
    FEE_PER_BYTE,
};

#[derive(Clone, Debug)]
pub struct WeaveConfig {
    pub max_data_bytes: usize,
    pub allow_empty_blocks: bool,
}

impl Default for WeaveConfig {
    fn default() -> Self {
        Self {
            max_data_bytes: DEFAULT_MAX_DATA_BYTES,
            allow_empty_blocks: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WeaveStats {
    pub height: u64,
    pub blocks: usize,
    pub sealed_transactions: usize,
    pub bundle_items: usize,
    pub pending: usize,
    pub data_bytes: u64,
    pub recorded_fees: u64,
}

#[derive(Default)]
struct State {
    blocks: Vec<Block>,
    txs: HashMap<TxId, Arc<Transaction>>,
    pending: Vec<TxId>,
    /// Seal order: top-level transactions by (height, index), each bundle
    /// followed by its items.
    sealed: Vec<TxId>,
    sealed_pos: HashMap<TxId, usize>,
    tag_index: HashMap<Tag, Vec<usize>>,
    clock: u64,
}

impl State {
    fn insert_pending(&mut self, tx: Transaction) -> TxId {
        let id = tx.id.clone();
        self.clock = self.clock.max(tx.submitted_at + 1);
        let tx = Arc::new(tx);
        if is_bundle(&tx) {
            for item in bundle::unbundle(&tx).unwrap_or_default() {
                self.txs.entry(item.id.clone()).or_insert_with(|| {
                    Arc::new(Transaction {
                        id: item.id,
                        owner: item.owner,
                        owner_key: tx.owner_key,
                        signature: Vec::new(),
                        tags: item.tags,
                        data: item.data,
                        submitted_at: tx.submitted_at,
                        fee: 0,
                        bundled_in: Some(tx.id.clone()),
                    })
                });
            }
        }
        self.txs.insert(id.clone(), tx);
        self.pending.push(id.clone());
        id
    }

    fn record_sealed(&mut self, id: &TxId) {
        let pos = self.sealed.len();
        self.sealed.push(id.clone());
        self.sealed_pos.insert(id.clone(), pos);
        for tag in &self.txs[id].tags {
            self.tag_index.entry(tag.clone()).or_default().push(pos);
        }
    }

    fn seal(&mut self, id: &TxId) {
        self.record_sealed(id);
        let tx = Arc::clone(&self.txs[id]);
        if let Some(items) = bundle::unbundle(&tx) {
            for item in items {
                let owned_by_bundle = self.txs[&item.id].bundled_in.as_ref() == Some(&tx.id);
                if owned_by_bundle && !self.sealed_pos.contains_key(&item.id) {
                    self.record_sealed(&item.id);
                }
            }
        }
    }

    fn append_block(&mut self, allow_empty: bool) -> Result<Block, WeaveError> {
        if self.pending.is_empty() && !allow_empty && !self.blocks.is_empty() {
            return Err(WeaveError::NothingToMine);
        }
        let height = self.blocks.len() as u64;
        let prev_id = self.blocks.last().map(|b| b.block_id.clone());
        let recall_id = match &prev_id {
            Some(prev) if height >= 2 => {
                Some(self.blocks[recall_index(prev, height) as usize].block_id.clone())
            }
            _ => None,
        };
        let tx_ids = std::mem::take(&mut self.pending);
        let txs: Vec<&Transaction> = tx_ids.iter().map(|id| self.txs[id].as_ref()).collect();
        let content = block_content(height, &prev_id, &recall_id, &txs);
        let block = Block {
            height,
            prev_id,
            recall_id,
            tx_ids,
            block_id: BlockId::from_digest(encoding::sha256(&content)),
        };
        for id in &block.tx_ids {
            self.seal(id);
        }
        self.blocks.push(block.clone());
        Ok(block)
    }

    fn block_record(&self, block: &Block) -> Vec<u8> {
        let txs: Vec<&Transaction> = block.tx_ids.iter().map(|id| self.txs[id].as_ref()).collect();
        let content = block_content(block.height, &block.prev_id, &block.recall_id, &txs);
        encode_block_record(&content, &block.block_id)
    }

    fn snapshot(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        for block in &self.blocks {
            out.extend_from_slice(&self.block_record(block));
        }
        out
    }
}

/// The weave: a shared, thread-safe store with many readers and one writer.
///
/// A fresh store already holds the empty genesis block at height 0.
pub struct WeaveStore {
    config: WeaveConfig,
    state: RwLock<State>,
}

impl Default for WeaveStore {
    fn default() -> Self {
        Self::new(WeaveConfig::default())
    }
}

impl WeaveStore {
    pub fn new(config: WeaveConfig) -> Self {
        let mut state = State::default();
        state
            .append_block(true)
            .expect("genesis is always minable");
        Self {
            config,
            state: RwLock::new(state),
        }
    }

    pub fn config(&self) -> &WeaveConfig {
        &self.config
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("weave lock poisoned")
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().expect("weave lock poisoned")
    }

    fn check_payload(&self, tags: &[Tag], data_len: usize) -> Result<(), WeaveError> {
        for tag in tags {
            tag.validate()?;
        }
        if data_len > self.config.max_data_bytes {
            return Err(WeaveError::OversizeData {
                size: data_len,
                limit: self.config.max_data_bytes,
            });
        }
        Ok(())
    }

    /// Signs and submits `(tags, data)` under `owner`'s key. Resubmitting the
    /// same content is a no-op that returns the same id.
    pub fn submit(&self, owner: &SigningKey, tags: Vec<Tag>, data: Vec<u8>) -> Result<TxId, WeaveError> {
        self.check_payload(&tags, data.len())?;
        self.insert(Transaction::signed(owner, tags, data))
    }

    /// Submits a transaction signed elsewhere (for example received over HTTP).
    pub fn submit_transaction(&self, mut tx: Transaction) -> Result<TxId, WeaveError> {
        self.check_payload(&tx.tags, tx.data.len())?;
        tx.bundled_in = None;
        tx.check_integrity()?;
        self.insert(tx)
    }

    fn insert(&self, mut tx: Transaction) -> Result<TxId, WeaveError> {
        let mut st = self.write();
        if st.txs.get(&tx.id).is_some_and(|t| t.bundled_in.is_none()) {
            return Ok(tx.id);
        }
        tx.submitted_at = st.clock;
        tx.fee = tx.canonical_bytes().len() as u64 * FEE_PER_BYTE;
        Ok(st.insert_pending(tx))
    }

    /// Packs `items` into one top-level transaction; returns its id and the
    /// item ids in order.
    pub fn bundle_submit(
        &self,
        owner: &SigningKey,
        items: Vec<(Vec<Tag>, Vec<u8>)>,
    ) -> Result<(TxId, Vec<TxId>), WeaveError> {
        if items.is_empty() {
            return Err(WeaveError::EmptyBundle);
        }
        let mut total = 0usize;
        for (tags, data) in &items {
            self.check_payload(tags, data.len())?;
            total += data.len();
        }
        if total > self.config.max_data_bytes {
            return Err(WeaveError::OversizeData {
                size: total,
                limit: self.config.max_data_bytes,
            });
        }
        let owner_addr = crate::keys::address_of(owner);
        let (data, item_ids) = encode_items(&owner_addr, &items);
        let id = self.insert(Transaction::signed(owner, bundle_tags(), data))?;
        Ok((id, item_ids))
    }

    /// Seals every pending transaction into a new block.
    pub fn mine_block(&self) -> Result<Block, WeaveError> {
        self.write().append_block(self.config.allow_empty_blocks)
    }

    /// Sealed or pending transaction (or bundle item) by id.
    pub fn get(&self, id: &TxId) -> Result<Transaction, WeaveError> {
        self.read()
            .txs
            .get(id)
            .map(|t| t.as_ref().clone())
            .ok_or_else(|| WeaveError::NotFound(id.to_string()))
    }

    /// Like [`get`](Self::get) but takes any text, so malformed ids are
    /// reported as `NotFound` rather than a parse error.
    pub fn get_str(&self, id: &str) -> Result<Transaction, WeaveError> {
        let id = TxId::parse(id).map_err(|_| WeaveError::NotFound(id.to_owned()))?;
        self.get(&id)
    }

    pub fn is_sealed(&self, id: &TxId) -> bool {
        self.read().sealed_pos.contains_key(id)
    }

    /// Ids of sealed transactions carrying every tag in `filter`, in seal
    /// order. An empty filter matches everything sealed.
    pub fn query(&self, filter: &[Tag]) -> Vec<TxId> {
        let st = self.read();
        let Some((first, rest)) = filter.split_first() else {
            return st.sealed.clone();
        };
        let Some(postings) = st.tag_index.get(first) else {
            return Vec::new();
        };
        let mut out: Vec<TxId> = Vec::with_capacity(postings.len());
        for &pos in postings {
            let id = &st.sealed[pos];
            if st.txs[id].has_tags(rest) && out.last() != Some(id) {
                out.push(id.clone());
            }
        }
        out
    }

    /// Pending transactions carrying every tag in `filter`, in submission order.
    pub fn query_pending(&self, filter: &[Tag]) -> Vec<TxId> {
        let st = self.read();
        st.pending
            .iter()
            .filter(|id| st.txs[*id].has_tags(filter))
            .cloned()
            .collect()
    }

    pub fn height(&self) -> u64 {
        self.read().blocks.len() as u64 - 1
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.read().blocks.clone()
    }

    pub fn block(&self, height: u64) -> Option<Block> {
        self.read().blocks.get(height as usize).cloned()
    }

    pub fn stats(&self) -> WeaveStats {
        let st = self.read();
        let mut stats = WeaveStats {
            height: st.blocks.len() as u64 - 1,
            blocks: st.blocks.len(),
            pending: st.pending.len(),
            ..Default::default()
        };
        for id in &st.sealed {
            let tx = &st.txs[id];
            if tx.bundled_in.is_some() {
                stats.bundle_items += 1;
            } else {
                stats.sealed_transactions += 1;
                stats.data_bytes += tx.data.len() as u64;
                stats.recorded_fees += tx.fee;
            }
        }
        stats
    }

    /// Re-serializes every block from the in-memory state and replays the
    /// result from genesis.
    pub fn verify_report(&self) -> VerifyReport {
        snapshot::verify_snapshot(&self.snapshot_bytes())
    }

    pub fn verify_weave(&self) -> bool {
        self.verify_report().is_ok()
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        self.read().snapshot()
    }

    pub fn snapshot_digest(&self) -> [u8; 32] {
        encoding::sha256(&self.snapshot_bytes())
    }

    /// Rebuilds a store from snapshot bytes; any replay violation is fatal.
    pub fn from_snapshot(bytes: &[u8], config: WeaveConfig) -> Result<Self, WeaveError> {
        let report = snapshot::verify_snapshot(bytes);
        if let Some(v) = report.violations.first() {
            return Err(WeaveError::CorruptSnapshot(v.to_string()));
        }
        let (raw, _) = snapshot::parse_blocks(bytes);
        let mut st = State::default();
        for block in raw {
            let meta = block.to_block();
            for tx in block.txs {
                st.insert_pending(tx);
            }
            st.pending.clear();
            for id in &meta.tx_ids {
                st.seal(id);
            }
            st.blocks.push(meta);
        }
        Ok(Self {
            config,
            state: RwLock::new(st),
        })
    }

    /// Writes the snapshot to `path`. If the file already holds a prefix of
    /// this weave, only the new block records are appended.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeaveError> {
        let path = path.as_ref();
        let bytes = self.snapshot_bytes();
        if let Ok(existing) = fs::read(path) {
            if existing.len() <= bytes.len() && bytes.starts_with(&existing) {
                let mut f = fs::OpenOptions::new().append(true).open(path)?;
                f.write_all(&bytes[existing.len()..])?;
                return Ok(());
            }
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, config: WeaveConfig) -> Result<Self, WeaveError> {
        Self::from_snapshot(&fs::read(path)?, config)
    }

    /// Pending pool, serialized separately from the snapshot (it is not part
    /// of the permanent record).
    pub fn pending_bytes(&self) -> Vec<u8> {
        let st = self.read();
        let txs: Vec<&Transaction> = st.pending.iter().map(|id| st.txs[id].as_ref()).collect();
        snapshot::encode_pending(&txs)
    }

    pub fn restore_pending(&self, bytes: &[u8]) -> Result<usize, WeaveError> {
        let txs = snapshot::decode_pending(bytes)?;
        let n = txs.len();
        let mut st = self.write();
        for tx in txs {
            tx.check_integrity()?;
            if !st.txs.contains_key(&tx.id) {
                st.insert_pending(tx);
            }
        }
        Ok(n)
    }
}
