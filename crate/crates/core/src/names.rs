//! ArNS-style name registry. Records are signed JSON documents stored as
//! weave transactions tagged `("ArNS-Name", name)`.
//!
//! Resolution only looks at sealed records with valid signatures. The first
//! such record (in seal order) fixes the owner; after that only the owner's
//! records count, and the one with the highest sequence wins (ties go to the
//! smallest record transaction id).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, serde_b64url, Writer};
use crate::keys::{self, SigningKey};
use crate::weave::{Address, Tag, Transaction, TxId, WeaveError, WeaveStore};

pub const NAME_TAG: &str = "ArNS-Name";
pub const MAX_NAME_LEN: usize = 51;
const NAME_SIGNING_DOMAIN: &[u8] = b"permadid/name/v1";

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("name {0:?} is owned by another address")]
    NameTaken(String),
    #[error("caller does not own name {0:?}")]
    NotOwner(String),
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error(transparent)]
    Weave(#[from] WeaveError),
}

pub fn is_valid_name(name: &str) -> bool {
    (1..=MAX_NAME_LEN).contains(&name.len())
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
        && !name.starts_with('-')
        && !name.ends_with('-')
}

/// On-weave JSON form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordBody {
    name: String,
    target: TxId,
    #[serde(with = "serde_b64url")]
    owner: [u8; 32],
    seq: u64,
    #[serde(with = "serde_b64url")]
    sig: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NameRecord {
    pub name: String,
    pub target: TxId,
    pub owner_address: Address,
    #[serde(with = "serde_b64url")]
    pub owner_pubkey: [u8; 32],
    pub sequence: u64,
    #[serde(with = "serde_b64url")]
    pub signature: Vec<u8>,
    pub record_tx: TxId,
}

fn signing_payload(name: &str, target: &TxId, seq: u64) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes32(name.as_bytes()).raw(&target.digest()).u64(seq);
    w.buf
}

/// Signs a record and returns the JSON bytes stored on the weave.
pub fn encode_record(name: &str, target: &TxId, seq: u64, key: &SigningKey) -> Vec<u8> {
    let body = RecordBody {
        name: name.to_owned(),
        target: target.clone(),
        owner: key.verifying_key().to_bytes(),
        seq,
        sig: keys::sign(key, NAME_SIGNING_DOMAIN, &signing_payload(name, target, seq)).to_vec(),
    };
    encoding::canonical_json(&body)
}

/// Parses the record housed in `tx` and checks its signature. Returns `None`
/// for anything that is not a valid record for the tagged name.
pub fn parse_record(tx: &Transaction) -> Option<NameRecord> {
    let tagged = tx.tag(NAME_TAG)?;
    let body: RecordBody = serde_json::from_slice(&tx.data).ok()?;
    if body.name != tagged || !is_valid_name(&body.name) {
        return None;
    }
    let payload = signing_payload(&body.name, &body.target, body.seq);
    if !keys::verify(&body.owner, NAME_SIGNING_DOMAIN, &payload, &body.sig) {
        return None;
    }
    let pk = keys::parse_public_key(&body.owner)?;
    Some(NameRecord {
        name: body.name,
        target: body.target,
        owner_address: Address::from_public_key(&pk),
        owner_pubkey: body.owner,
        sequence: body.seq,
        signature: body.sig,
        record_tx: tx.id.clone(),
    })
}

/// Applies the ownership and ordering rules to valid records given in seal order.
fn select(records: impl IntoIterator<Item = NameRecord>) -> Option<NameRecord> {
    let mut owner: Option<Address> = None;
    let mut best: Option<NameRecord> = None;
    for rec in records {
        let owner = owner.get_or_insert_with(|| rec.owner_address.clone());
        if rec.owner_address != *owner {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => (rec.sequence, std::cmp::Reverse(&rec.record_tx)) > (b.sequence, std::cmp::Reverse(&b.record_tx)),
        };
        if better {
            best = Some(rec);
        }
    }
    best
}

#[derive(Clone)]
pub struct NameRegistry {
    weave: Arc<WeaveStore>,
}

impl NameRegistry {
    pub fn new(weave: Arc<WeaveStore>) -> Self {
        Self { weave }
    }

    pub fn weave(&self) -> &Arc<WeaveStore> {
        &self.weave
    }

    fn records(&self, ids: Vec<TxId>) -> Vec<NameRecord> {
        ids.iter()
            .filter_map(|id| self.weave.get(id).ok())
            .filter_map(|tx| parse_record(&tx))
            .collect()
    }

    fn sealed_records(&self, name: &str) -> Vec<NameRecord> {
        self.records(self.weave.query(&[Tag::new(NAME_TAG, name)]))
    }

    fn pending_records(&self, name: &str) -> Vec<NameRecord> {
        self.records(self.weave.query_pending(&[Tag::new(NAME_TAG, name)]))
    }

    /// Current resolution over sealed records.
    pub fn resolve(&self, name: &str) -> Result<(TxId, NameRecord), NameError> {
        if !is_valid_name(name) {
            return Err(NameError::InvalidName(name.to_owned()));
        }
        select(self.sealed_records(name))
            .map(|r| (r.target.clone(), r))
            .ok_or_else(|| NameError::UnknownName(name.to_owned()))
    }

    fn submit(&self, name: &str, target: &TxId, seq: u64, key: &SigningKey) -> Result<NameRecord, NameError> {
        let data = encode_record(name, target, seq, key);
        let id = self.weave.submit(key, vec![Tag::new(NAME_TAG, name)], data)?;
        let tx = self.weave.get(&id)?;
        Ok(parse_record(&tx).expect("freshly signed record parses"))
    }

    /// Next sequence for `owner`, counting its pending records too.
    fn next_seq(&self, owner: &Address, sealed: &[NameRecord], pending: &[NameRecord]) -> Option<u64> {
        sealed
            .iter()
            .chain(pending)
            .filter(|r| &r.owner_address == owner)
            .map(|r| r.sequence)
            .max()
            .map(|s| s + 1)
    }

    /// Claims `name` for `key`. A name already owned by the caller is
    /// updated instead. A valid pending claim by someone else also blocks the
    /// name, because it will be sealed first.
    pub fn register(&self, name: &str, target: &TxId, key: &SigningKey) -> Result<NameRecord, NameError> {
        if !is_valid_name(name) {
            return Err(NameError::InvalidName(name.to_owned()));
        }
        let caller = keys::address_of(key);
        let sealed = self.sealed_records(name);
        let pending = self.pending_records(name);
        let first_owner = sealed.iter().chain(&pending).next().map(|r| r.owner_address.clone());
        if first_owner.is_some_and(|o| o != caller) {
            return Err(NameError::NameTaken(name.to_owned()));
        }
        let seq = self.next_seq(&caller, &sealed, &pending).unwrap_or(0);
        self.submit(name, target, seq, key)
    }

    /// Re-points a name the caller already owns (by sealed record).
    pub fn update(&self, name: &str, target: &TxId, key: &SigningKey) -> Result<NameRecord, NameError> {
        if !is_valid_name(name) {
            return Err(NameError::InvalidName(name.to_owned()));
        }
        let sealed = self.sealed_records(name);
        let Some(current) = select(sealed.iter().cloned()) else {
            return Err(NameError::UnknownName(name.to_owned()));
        };
        let caller = keys::address_of(key);
        if current.owner_address != caller {
            return Err(NameError::NotOwner(name.to_owned()));
        }
        let pending = self.pending_records(name);
        let seq = self.next_seq(&caller, &sealed, &pending).expect("owner has a record");
        self.submit(name, target, seq, key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn key(seed: u64) -> SigningKey {
        keys::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed))
    }

    fn setup() -> (Arc<WeaveStore>, NameRegistry) {
        let weave = Arc::new(WeaveStore::default());
        (weave.clone(), NameRegistry::new(weave))
    }

    #[test]
    fn name_syntax() {
        for ok in ["alice", "a", "bob-2", "0", &"x".repeat(51)] {
            assert!(is_valid_name(ok), "{ok}");
        }
        for bad in ["", "Alice!", "Alice", "-a", "a-", "a_b", "é", &"x".repeat(52)] {
            assert!(!is_valid_name(bad), "{bad}");
        }
    }

    #[test]
    fn register_mine_resolve() {
        let (weave, reg) = setup();
        let target = TxId::from_digest([1; 32]);
        reg.register("alice", &target, &key(1)).unwrap();
        assert!(matches!(reg.resolve("alice"), Err(NameError::UnknownName(_))));
        weave.mine_block().unwrap();
        let (t, rec) = reg.resolve("alice").unwrap();
        assert_eq!(t, target);
        assert_eq!(rec.sequence, 0);
    }

    #[test]
    fn ownership_enforced() {
        let (weave, reg) = setup();
        let (alice, bob) = (key(1), key(2));
        reg.register("alice", &TxId::from_digest([1; 32]), &alice).unwrap();
        assert!(matches!(
            reg.register("alice", &TxId::from_digest([2; 32]), &bob),
            Err(NameError::NameTaken(_))
        ));
        weave.mine_block().unwrap();
        assert!(matches!(
            reg.update("alice", &TxId::from_digest([2; 32]), &bob),
            Err(NameError::NotOwner(_))
        ));
        assert!(matches!(
            reg.update("ghost", &TxId::from_digest([2; 32]), &alice),
            Err(NameError::UnknownName(_))
        ));
        let rec = reg.update("alice", &TxId::from_digest([3; 32]), &alice).unwrap();
        assert_eq!(rec.sequence, 1);
        weave.mine_block().unwrap();
        assert_eq!(reg.resolve("alice").unwrap().0, TxId::from_digest([3; 32]));
    }

    #[test]
    fn bad_signature_record_ignored() {
        let (weave, reg) = setup();
        let alice = key(1);
        reg.register("alice", &TxId::from_digest([1; 32]), &alice).unwrap();
        weave.mine_block().unwrap();
        let mut body: serde_json::Value =
            serde_json::from_slice(&encode_record("alice", &TxId::from_digest([1; 32]), 9, &alice)).unwrap();
        body["target"] = TxId::from_digest([7; 32]).to_string().into();
        weave
            .submit(&key(3), vec![Tag::new(NAME_TAG, "alice")], serde_json::to_vec(&body).unwrap())
            .unwrap();
        weave.mine_block().unwrap();
        assert_eq!(reg.resolve("alice").unwrap().0, TxId::from_digest([1; 32]));
    }
}
