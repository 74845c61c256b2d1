//! Simulated permanent storage organized as a blockweave.
//!
//! Transactions are addressed by the SHA-256 of their canonical encoding
//! (owner, tags, data), rendered as 43 characters of unpadded base64url.
//! Every block links its predecessor and, from height 2 on, one older
//! "recall" block chosen deterministically from the predecessor's id.

mod bundle;
mod snapshot;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, serde_b64url, Reader, Writer};
use crate::keys::{self, SigningKey, VerifyingKey};

pub use bundle::{unbundle, BundleItem, BUNDLE_FORMAT_TAG, BUNDLE_VERSION_TAG};
pub use snapshot::{verify_snapshot, VerifyReport, Violation};
pub use store::{WeaveConfig, WeaveStats, WeaveStore};

pub const MAX_TAG_NAME_BYTES: usize = 64;
pub const MAX_TAG_VALUE_BYTES: usize = 1024;
pub const DEFAULT_MAX_DATA_BYTES: usize = 10 * 1024 * 1024;
/// Storage cost recorded on every transaction, in winston per canonical byte.
/// Recorded only; nothing checks balances.
pub const FEE_PER_BYTE: u64 = 2_000;

const TX_SIGNING_DOMAIN: &[u8] = b"permadid/tx/v1";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum WeaveError {
    #[error("data of {size} bytes exceeds the {limit}-byte limit")]
    OversizeData { size: usize, limit: usize },
    #[error("malformed tag: {0}")]
    MalformedTag(String),
    #[error("no pending transactions to mine")]
    NothingToMine,
    #[error("transaction {0} not found")]
    NotFound(String),
    #[error("bundle has no items")]
    EmptyBundle,
    #[error("transaction signature does not verify under its owner key")]
    BadSignature,
    #[error("transaction id does not match its content")]
    IdMismatch,
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for WeaveError {
    fn from(e: std::io::Error) -> Self {
        WeaveError::Io(e.to_string())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not a 43-character base64url identifier: {0:?}")]
pub struct InvalidId(pub String);

macro_rules! id43 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn from_digest(digest: [u8; 32]) -> Self {
                Self(encoding::b64url(&digest))
            }

            pub fn parse(text: &str) -> Result<Self, InvalidId> {
                if encoding::is_id43(text) {
                    Ok(Self(text.to_owned()))
                } else {
                    Err(InvalidId(text.to_owned()))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn digest(&self) -> [u8; 32] {
                let raw = encoding::b64url_decode(&self.0).expect("validated on construction");
                raw.try_into().expect("validated on construction")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }

        impl FromStr for $name {
            type Err = InvalidId;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::parse(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = InvalidId;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                Self::parse(&s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }
    };
}

id43!(
    /// Transaction (or bundle item) id: base64url SHA-256 of the canonical encoding.
    TxId
);
id43!(
    /// Wallet address: base64url SHA-256 of an Ed25519 public key.
    Address
);
id43!(
    /// Block id: base64url SHA-256 of the block's full serialized record.
    BlockId
);

impl Address {
    pub fn from_public_key(key: &VerifyingKey) -> Self {
        Self::from_digest(encoding::sha256(key.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub name: String,
    pub value: String,
}

impl Tag {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }

    pub fn validate(&self) -> Result<(), WeaveError> {
        if self.name.is_empty() {
            return Err(WeaveError::MalformedTag("empty tag name".into()));
        }
        if self.name.len() > MAX_TAG_NAME_BYTES {
            return Err(WeaveError::MalformedTag(format!(
                "tag name is {} bytes (max {MAX_TAG_NAME_BYTES})",
                self.name.len()
            )));
        }
        if self.value.len() > MAX_TAG_VALUE_BYTES {
            return Err(WeaveError::MalformedTag(format!(
                "value of tag {:?} is {} bytes (max {MAX_TAG_VALUE_BYTES})",
                self.name,
                self.value.len()
            )));
        }
        Ok(())
    }
}

/// Canonical encoding `owner ‖ tag-count ‖ (name-len, name, value-len, value)* ‖ data`,
/// with u32 big-endian length prefixes and a u64 prefix on the data.
pub fn canonical_bytes(owner: &Address, tags: &[Tag], data: &[u8]) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes32(owner.as_str().as_bytes()).u32(tags.len() as u32);
    for tag in tags {
        w.bytes32(tag.name.as_bytes()).bytes32(tag.value.as_bytes());
    }
    w.bytes64(data);
    w.buf
}

pub(crate) fn parse_canonical(bytes: &[u8]) -> Option<(Address, Vec<Tag>, Vec<u8>)> {
    let mut r = Reader::new(bytes);
    let owner = Address::parse(std::str::from_utf8(r.bytes32()?).ok()?).ok()?;
    let count = r.u32()? as usize;
    let mut tags = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = String::from_utf8(r.bytes32()?.to_vec()).ok()?;
        let value = String::from_utf8(r.bytes32()?.to_vec()).ok()?;
        tags.push(Tag { name, value });
    }
    let data = r.bytes64()?.to_vec();
    r.is_empty().then_some((owner, tags, data))
}

/// Content id for `(owner, tags, data)`.
pub fn compute_tx_id(owner: &Address, tags: &[Tag], data: &[u8]) -> TxId {
    TxId::from_digest(encoding::sha256(&canonical_bytes(owner, tags, data)))
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub id: TxId,
    pub owner: Address,
    #[serde(with = "serde_b64url")]
    pub owner_key: [u8; 32],
    #[serde(with = "serde_b64url")]
    pub signature: Vec<u8>,
    pub tags: Vec<Tag>,
    #[serde(with = "serde_b64url")]
    pub data: Vec<u8>,
    pub submitted_at: u64,
    pub fee: u64,
    /// Set for items unpacked from a bundle; the signature is then the
    /// enclosing bundle's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundled_in: Option<TxId>,
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("id", &self.id)
            .field("owner", &self.owner)
            .field("tags", &self.tags)
            .field("data_len", &self.data.len())
            .field("submitted_at", &self.submitted_at)
            .finish()
    }
}

impl Transaction {
    /// Builds and signs a transaction. `submitted_at` and `fee` are filled in
    /// by the store.
    pub fn signed(key: &SigningKey, tags: Vec<Tag>, data: Vec<u8>) -> Self {
        let owner = keys::address_of(key);
        let id = compute_tx_id(&owner, &tags, &data);
        let signature = keys::sign(key, TX_SIGNING_DOMAIN, &id.digest()).to_vec();
        Self {
            id,
            owner,
            owner_key: key.verifying_key().to_bytes(),
            signature,
            tags,
            data,
            submitted_at: 0,
            fee: 0,
            bundled_in: None,
        }
    }

    pub fn tag(&self, name: &str) -> Option<&str> {
        self.tags
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.value.as_str())
    }

    pub fn has_tags(&self, filter: &[Tag]) -> bool {
        filter.iter().all(|f| self.tags.contains(f))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_bytes(&self.owner, &self.tags, &self.data)
    }

    /// Checks the id, the owner/key binding and the owner signature. Bundle
    /// items carry no signature of their own and only get the first two checks.
    pub fn check_integrity(&self) -> Result<(), WeaveError> {
        if compute_tx_id(&self.owner, &self.tags, &self.data) != self.id {
            return Err(WeaveError::IdMismatch);
        }
        let Some(pk) = keys::parse_public_key(&self.owner_key) else {
            return Err(WeaveError::BadSignature);
        };
        if Address::from_public_key(&pk) != self.owner {
            return Err(WeaveError::BadSignature);
        }
        if self.bundled_in.is_none()
            && !keys::verify(&self.owner_key, TX_SIGNING_DOMAIN, &self.id.digest(), &self.signature)
        {
            return Err(WeaveError::BadSignature);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub height: u64,
    pub prev_id: Option<BlockId>,
    pub recall_id: Option<BlockId>,
    pub tx_ids: Vec<TxId>,
    pub block_id: BlockId,
}

/// Index of the recall block for a block at `height` (≥ 2) whose predecessor
/// is `prev`: SHA-256 of the predecessor's raw id, read as a big-endian
/// integer, reduced modulo `height`.
pub fn recall_index(prev: &BlockId, height: u64) -> u64 {
    assert!(height >= 2, "recall is undefined below height 2");
    let digest = encoding::sha256(&prev.digest());
    let h = u128::from(height);
    let rem = digest
        .iter()
        .fold(0u128, |acc, &b| (acc * 256 + u128::from(b)) % h);
    rem as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn tag_limits() {
        assert!(Tag::new("a".repeat(64), "x".repeat(1024)).validate().is_ok());
        assert!(matches!(
            Tag::new("", "x").validate(),
            Err(WeaveError::MalformedTag(_))
        ));
        assert!(Tag::new("a".repeat(65), "").validate().is_err());
        assert!(Tag::new("a", "x".repeat(1025)).validate().is_err());
    }

    #[test]
    fn canonical_encoding_roundtrips() {
        let owner = Address::from_digest([3; 32]);
        let tags = vec![Tag::new("Content-Type", "application/json"), Tag::new("k", "")];
        let bytes = canonical_bytes(&owner, &tags, b"{}");
        let (o, t, d) = parse_canonical(&bytes).unwrap();
        assert_eq!((o, t, d), (owner, tags, b"{}".to_vec()));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(parse_canonical(&longer).is_none());
    }

    #[test]
    fn signed_transaction_passes_integrity() {
        let key = keys::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(4));
        let tx = Transaction::signed(&key, vec![Tag::new("a", "b")], vec![1, 2, 3]);
        assert_eq!(tx.id.as_str().len(), 43);
        assert_eq!(tx.check_integrity(), Ok(()));
        let mut forged = tx.clone();
        forged.data.push(4);
        assert_eq!(forged.check_integrity(), Err(WeaveError::IdMismatch));
        let other = keys::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(5));
        let mut stolen = tx;
        stolen.owner_key = other.verifying_key().to_bytes();
        assert_eq!(stolen.check_integrity(), Err(WeaveError::BadSignature));
    }

    #[test]
    fn ids_reject_bad_text() {
        assert!(TxId::parse("3t8YH9c2sN2F6GpOYXk").is_err());
        let id = TxId::from_digest([9; 32]);
        assert_eq!(TxId::parse(id.as_str()).unwrap(), id);
        assert_eq!(id.digest(), [9; 32]);
    }
}
