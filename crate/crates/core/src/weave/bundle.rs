//! Packing several independent data items into one top-level transaction.
//!
//! Bundle data layout: `u32 item-count` followed by, per item, a u64 length
//! prefix and the item's canonical encoding. Item ids are computed exactly
//! like transaction ids, so a one-item bundle addresses its item under the
//! same id a direct submission would get.

use crate::encoding::{self, Reader, Writer};

use super::{canonical_bytes, parse_canonical, Address, Tag, Transaction, TxId};

pub const BUNDLE_FORMAT_TAG: (&str, &str) = ("Bundle-Format", "binary");
pub const BUNDLE_VERSION_TAG: (&str, &str) = ("Bundle-Version", "2.0.0");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleItem {
    pub id: TxId,
    pub owner: Address,
    pub tags: Vec<Tag>,
    pub data: Vec<u8>,
}

pub(crate) fn bundle_tags() -> Vec<Tag> {
    vec![
        Tag::new(BUNDLE_FORMAT_TAG.0, BUNDLE_FORMAT_TAG.1),
        Tag::new(BUNDLE_VERSION_TAG.0, BUNDLE_VERSION_TAG.1),
    ]
}

pub(crate) fn encode_items(owner: &Address, items: &[(Vec<Tag>, Vec<u8>)]) -> (Vec<u8>, Vec<TxId>) {
    let mut w = Writer::default();
    w.u32(items.len() as u32);
    let mut ids = Vec::with_capacity(items.len());
    for (tags, data) in items {
        let bytes = canonical_bytes(owner, tags, data);
        ids.push(TxId::from_digest(encoding::sha256(&bytes)));
        w.bytes64(&bytes);
    }
    (w.buf, ids)
}

pub(crate) fn is_bundle(tx: &Transaction) -> bool {
    tx.tag(BUNDLE_FORMAT_TAG.0) == Some(BUNDLE_FORMAT_TAG.1)
        && tx.tag(BUNDLE_VERSION_TAG.0) == Some(BUNDLE_VERSION_TAG.1)
}

/// Unpacks a bundle transaction. Returns `None` if `tx` is not a bundle, its
/// data is malformed, or an item claims an owner other than the bundle's.
pub fn unbundle(tx: &Transaction) -> Option<Vec<BundleItem>> {
    if !is_bundle(tx) {
        return None;
    }
    let mut r = Reader::new(&tx.data);
    let count = r.u32()? as usize;
    let mut items = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let bytes = r.bytes64()?;
        let (owner, tags, data) = parse_canonical(bytes)?;
        if owner != tx.owner {
            return None;
        }
        items.push(BundleItem {
            id: TxId::from_digest(encoding::sha256(bytes)),
            owner,
            tags,
            data,
        });
    }
    r.is_empty().then_some(items)
}
