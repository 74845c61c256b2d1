//! Signed revocation lists published on the weave.
//!
//! A list is valid when its signature verifies under one of the issuer's
//! current authentication keys. The valid sealed list with the highest
//! sequence (ties: smallest transaction id) is authoritative.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::did::{Did, DidRegistry, TAG_CONTENT_TYPE};
use crate::encoding::{self, serde_b64url, Writer};
use crate::keys::{self, SigningKey};
use crate::weave::{Tag, TxId};

use super::CredentialError;

pub const REVOCATION_TAG: &str = "Revocation-List";
const REVOCATION_DOMAIN: &[u8] = b"permadid/revocation/v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevocationList {
    pub issuer: Did,
    pub revoked: BTreeSet<String>,
    pub sequence: u64,
    #[serde(with = "serde_b64url")]
    pub signer: [u8; 32],
    #[serde(with = "serde_b64url")]
    pub signature: Vec<u8>,
}

fn payload(issuer: &Did, revoked: &BTreeSet<String>, sequence: u64) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes32(issuer.to_string().as_bytes()).u64(sequence).u32(revoked.len() as u32);
    for id in revoked {
        w.bytes32(id.as_bytes());
    }
    w.buf
}

impl RevocationList {
    pub fn signed(issuer: &Did, revoked: BTreeSet<String>, sequence: u64, key: &SigningKey) -> Self {
        let signature = keys::sign(key, REVOCATION_DOMAIN, &payload(issuer, &revoked, sequence)).to_vec();
        Self {
            issuer: issuer.clone(),
            revoked,
            sequence,
            signer: key.verifying_key().to_bytes(),
            signature,
        }
    }

    pub fn signature_valid(&self) -> bool {
        keys::verify(
            &self.signer,
            REVOCATION_DOMAIN,
            &payload(&self.issuer, &self.revoked, self.sequence),
            &self.signature,
        )
    }
}

/// Issuer authentication keys, as raw bytes.
fn issuer_auth_keys(dids: &DidRegistry, issuer: &Did) -> Vec<[u8; 32]> {
    dids.resolve_did(issuer)
        .map(|r| r.document.authentication_keys().iter().map(|k| k.to_bytes()).collect())
        .unwrap_or_default()
}

fn valid_lists(dids: &DidRegistry, issuer: &Did, ids: Vec<TxId>) -> Vec<(TxId, RevocationList)> {
    let allowed = issuer_auth_keys(dids, issuer);
    ids.into_iter()
        .filter_map(|id| {
            let tx = dids.weave().get(&id).ok()?;
            let list: RevocationList = serde_json::from_slice(&tx.data).ok()?;
            (list.issuer == *issuer && allowed.contains(&list.signer) && list.signature_valid()).then_some((id, list))
        })
        .collect()
}

fn latest(lists: Vec<(TxId, RevocationList)>) -> Option<(TxId, RevocationList)> {
    lists
        .into_iter()
        .max_by(|(ta, a), (tb, b)| (a.sequence, std::cmp::Reverse(ta)).cmp(&(b.sequence, std::cmp::Reverse(tb))))
}

fn filter(issuer: &Did) -> Vec<Tag> {
    vec![Tag::new(REVOCATION_TAG, issuer.to_string())]
}

/// Authoritative sealed list for `issuer`, if any.
pub fn current_list(dids: &DidRegistry, issuer: &Did) -> Option<(TxId, RevocationList)> {
    latest(valid_lists(dids, issuer, dids.weave().query(&filter(issuer))))
}

pub fn is_revoked(dids: &DidRegistry, issuer: &Did, credential_id: &str) -> bool {
    current_list(dids, issuer).is_some_and(|(_, l)| l.revoked.contains(credential_id))
}

/// Publishes a new list adding `credential_id`. `key` must be one of the
/// issuer's authentication keys. Pending lists count, so several
/// revocations before the next block accumulate.
pub fn revoke(dids: &DidRegistry, issuer: &Did, key: &SigningKey, credential_id: &str) -> Result<TxId, CredentialError> {
    if !issuer_auth_keys(dids, issuer).contains(&key.verifying_key().to_bytes()) {
        return Err(CredentialError::NotIssuer);
    }
    let weave = dids.weave();
    let mut ids = weave.query(&filter(issuer));
    ids.extend(weave.query_pending(&filter(issuer)));
    let (revoked, sequence) = match latest(valid_lists(dids, issuer, ids)) {
        Some((_, l)) => (l.revoked, l.sequence + 1),
        None => (BTreeSet::new(), 0),
    };
    let mut revoked = revoked;
    revoked.insert(credential_id.to_owned());
    let list = RevocationList::signed(issuer, revoked, sequence, key);
    let tags = vec![
        Tag::new(TAG_CONTENT_TYPE, "application/json"),
        Tag::new(REVOCATION_TAG, issuer.to_string()),
    ];
    Ok(weave.submit(key, tags, encoding::canonical_json(&list))?)
}
