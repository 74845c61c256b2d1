//! The `did:arweave` method.
//!
//! A DID is `did:arweave:` followed by the address of the subject's primary
//! Ed25519 key. Documents are canonical JSON stored on the weave; updates are
//! republications with a higher `versionSequence`.
//!
//! Resolution walks the sealed publications of a DID in seal order. The
//! subject's address is the initial authority; a publication is accepted
//! only if its transaction was signed by the current authority, which then
//! becomes the `controller` of the best accepted version (or the subject
//! again if it names none). The best version is the accepted one with the
//! highest sequence, ties going to the smallest transaction id.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bbs;
use crate::encoding;
use crate::keys::{self, SigningKey, VerifyingKey};
use crate::names::{NameError, NameRegistry};
use crate::weave::{Address, Tag, Transaction, TxId, WeaveError, WeaveStore};

pub const DID_PREFIX: &str = "did:arweave:";
pub const DID_CONTEXT_V1: &str = "https://www.w3.org/ns/did/v1";
pub const ED25519_TYPE: &str = "Ed25519VerificationKey2018";
pub const BBS_KEY_TYPE: &str = "Bls12381G2Key2020";
pub const CREDENTIAL_SERVICE_TYPE: &str = "VerifiableCredentialService";

pub const TAG_CONTENT_TYPE: &str = "Content-Type";
pub const TAG_DID_TYPE: &str = "DID-Type";
pub const TAG_DID: &str = "DID";
pub const DID_DOCUMENT_TYPE: &str = "did-document";

/// Claim field names that must never appear anywhere in a DID document.
pub const SENSITIVE_FIELDS: &[&str] = &[
    "age",
    "ageOver18",
    "birthDate",
    "ciphertext",
    "credentialSubject",
    "currentAddress",
    "dateOfBirth",
    "encrypted",
    "familyName",
    "firstNames",
    "gender",
    "givenName",
    "name",
    "nationality",
    "placeOfBirth",
    "proofValue",
    "uniqueIdentifier",
];

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DidError {
    #[error("invalid DID {0:?}")]
    InvalidDid(String),
    #[error("invalid key")]
    InvalidKey,
    #[error("a DID document needs at least one authentication key")]
    NoAuthenticationKey,
    #[error("invalid DID document: {0}")]
    InvalidDocument(String),
    #[error("signer is not authorized to publish for {0}")]
    NotAuthorized(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("could not parse DID document: {0}")]
    ParseError(String),
    #[error("{0} is deactivated")]
    Deactivated(String),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Weave(#[from] WeaveError),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Did(Address);

impl Did {
    pub fn from_address(address: Address) -> Self {
        Self(address)
    }

    pub fn parse(text: &str) -> Result<Self, DidError> {
        text.strip_prefix(DID_PREFIX)
            .and_then(|id| Address::parse(id).ok())
            .map(Self)
            .ok_or_else(|| DidError::InvalidDid(text.to_owned()))
    }

    /// Address of the key the DID was derived from.
    pub fn address(&self) -> &Address {
        &self.0
    }

    pub fn method_specific_id(&self) -> &str {
        self.0.as_str()
    }

    /// `did#fragment`
    pub fn url(&self, fragment: &str) -> String {
        format!("{self}#{fragment}")
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{DID_PREFIX}{}", self.0)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = DidError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for Did {
    type Error = DidError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<Did> for String {
    fn from(d: Did) -> String {
        d.to_string()
    }
}

/// DID for a raw Ed25519 public key.
pub fn derive_did(public_key: &[u8]) -> Result<Did, DidError> {
    let pk = keys::parse_public_key(public_key).ok_or(DidError::InvalidKey)?;
    Ok(Did(Address::from_public_key(&pk)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VerificationMethod {
    pub id: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub controller: Did,
    pub public_key_base58: String,
}

impl VerificationMethod {
    pub fn ed25519(did: &Did, fragment: &str, key: &VerifyingKey) -> Self {
        Self {
            id: did.url(fragment),
            type_label: ED25519_TYPE.into(),
            controller: did.clone(),
            public_key_base58: bs58::encode(key.as_bytes()).into_string(),
        }
    }

    pub fn bbs(did: &Did, fragment: &str, key: &bbs::PublicKey) -> Self {
        Self {
            id: did.url(fragment),
            type_label: BBS_KEY_TYPE.into(),
            controller: did.clone(),
            public_key_base58: bs58::encode(key.to_bytes()).into_string(),
        }
    }

    pub fn fragment(&self) -> Option<&str> {
        self.id.split_once('#').map(|(_, f)| f).filter(|f| !f.is_empty())
    }

    pub fn public_key_bytes(&self) -> Option<Vec<u8>> {
        bs58::decode(&self.public_key_base58).into_vec().ok()
    }

    pub fn ed25519_key(&self) -> Option<VerifyingKey> {
        (self.type_label == ED25519_TYPE)
            .then(|| self.public_key_bytes())
            .flatten()
            .and_then(|b| keys::parse_public_key(&b))
    }

    pub fn bbs_key(&self) -> Option<bbs::PublicKey> {
        (self.type_label == BBS_KEY_TYPE)
            .then(|| self.public_key_bytes())
            .flatten()
            .and_then(|b| bbs::PublicKey::from_bytes(&b).ok())
    }

    fn key_is_valid(&self) -> bool {
        match self.type_label.as_str() {
            ED25519_TYPE => self.ed25519_key().is_some(),
            BBS_KEY_TYPE => self.bbs_key().is_some(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Service {
    pub id: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub service_endpoint: String,
}

impl Service {
    pub fn credential_service(did: &Did, endpoint: &str) -> Self {
        Self {
            id: did.url("vcs"),
            type_label: CREDENTIAL_SERVICE_TYPE.into(),
            service_endpoint: endpoint.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DidDocument {
    #[serde(rename = "@context")]
    pub context: Vec<String>,
    pub id: Did,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<Did>,
    pub verification_method: Vec<VerificationMethod>,
    pub authentication: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertion_method: Vec<String>,
    #[serde(default)]
    pub service: Vec<Service>,
    pub version_sequence: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub deactivated: bool,
}

/// Builds a version-0 document for the subject whose primary key is
/// `auth_keys[0]`. BBS keys are listed as assertion methods.
pub fn create_document(
    auth_keys: &[VerifyingKey],
    bbs_keys: &[bbs::PublicKey],
    services: Vec<Service>,
    controller: Option<Did>,
) -> Result<DidDocument, DidError> {
    let primary = auth_keys.first().ok_or(DidError::NoAuthenticationKey)?;
    let did = Did(Address::from_public_key(primary));
    let mut methods: Vec<VerificationMethod> = auth_keys
        .iter()
        .enumerate()
        .map(|(i, k)| VerificationMethod::ed25519(&did, &format!("key-{}", i + 1), k))
        .collect();
    let authentication = methods.iter().map(|m| m.id.clone()).collect();
    let bbs_methods: Vec<VerificationMethod> = bbs_keys
        .iter()
        .enumerate()
        .map(|(i, k)| VerificationMethod::bbs(&did, &format!("bbs-{}", i + 1), k))
        .collect();
    let assertion_method = bbs_methods.iter().map(|m| m.id.clone()).collect();
    methods.extend(bbs_methods);
    let doc = DidDocument {
        context: vec![DID_CONTEXT_V1.into()],
        id: did,
        controller,
        verification_method: methods,
        authentication,
        assertion_method,
        service: services,
        version_sequence: 0,
        deactivated: false,
    };
    doc.validate()?;
    Ok(doc)
}

fn find_sensitive_key(v: &Value) -> Option<String> {
    match v {
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            if SENSITIVE_FIELDS.contains(&k.as_str()) {
                Some(k.clone())
            } else {
                find_sensitive_key(v)
            }
        }),
        Value::Array(items) => items.iter().find_map(find_sensitive_key),
        _ => None,
    }
}

impl DidDocument {
    pub fn method(&self, reference: &str) -> Option<&VerificationMethod> {
        let full = match reference.strip_prefix('#') {
            Some(frag) => self.id.url(frag),
            None => reference.to_owned(),
        };
        self.verification_method.iter().find(|m| m.id == full)
    }

    pub fn authentication_keys(&self) -> Vec<VerifyingKey> {
        self.authentication
            .iter()
            .filter_map(|r| self.method(r))
            .filter_map(|m| m.ed25519_key())
            .collect()
    }

    /// First BBS key, with its method id.
    pub fn bbs_key(&self) -> Option<(&str, bbs::PublicKey)> {
        self.verification_method
            .iter()
            .find_map(|m| m.bbs_key().map(|k| (m.id.as_str(), k)))
    }

    /// Address whose transactions may publish the next version.
    pub fn authority(&self) -> &Address {
        self.controller.as_ref().unwrap_or(&self.id).address()
    }

    pub fn validate(&self) -> Result<(), DidError> {
        let invalid = |msg: String| Err(DidError::InvalidDocument(msg));
        if !self.context.iter().any(|c| c == DID_CONTEXT_V1) {
            return invalid(format!("@context must include {DID_CONTEXT_V1}"));
        }
        let prefix = format!("{}#", self.id);
        let mut seen = std::collections::HashSet::new();
        for m in &self.verification_method {
            if !m.id.starts_with(&prefix) || m.fragment().is_none() {
                return invalid(format!("verification method id {:?} is not a fragment of {}", m.id, self.id));
            }
            if !seen.insert(&m.id) {
                return invalid(format!("duplicate verification method {}", m.id));
            }
            if !m.key_is_valid() {
                return invalid(format!("{} does not hold a valid {} key", m.id, m.type_label));
            }
        }
        if self.authentication.is_empty() {
            return Err(DidError::NoAuthenticationKey);
        }
        for r in &self.authentication {
            if self.method(r).and_then(|m| m.ed25519_key()).is_none() {
                return invalid(format!("authentication reference {r:?} does not name an Ed25519 method"));
            }
        }
        for r in &self.assertion_method {
            if self.method(r).is_none() {
                return invalid(format!("assertion reference {r:?} does not name a method"));
            }
        }
        let subject_key = self
            .verification_method
            .iter()
            .filter_map(|m| m.ed25519_key())
            .any(|k| &Address::from_public_key(&k) == self.id.address());
        if !subject_key {
            return invalid(format!("no listed key derives {}", self.id));
        }
        for s in &self.service {
            if s.id.is_empty() || s.type_label.is_empty() || !s.service_endpoint.contains(':') {
                return invalid(format!("malformed service {:?}", s.id));
            }
        }
        let as_value = serde_json::to_value(self).expect("document serializes");
        if let Some(field) = find_sensitive_key(&as_value) {
            return invalid(format!("claim field {field:?} is not allowed in a DID document"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        encoding::canonical_json(self)
    }

    /// Strict parse: unknown fields (including any claim data) are rejected,
    /// then the document is validated.
    pub fn from_json(bytes: &[u8]) -> Result<Self, DidError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| DidError::ParseError(e.to_string()))?;
        if let Some(field) = find_sensitive_key(&value) {
            return Err(DidError::InvalidDocument(format!(
                "claim field {field:?} is not allowed in a DID document"
            )));
        }
        let doc: DidDocument = serde_json::from_value(value).map_err(|e| DidError::ParseError(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn publication_tags(&self) -> Vec<Tag> {
        vec![
            Tag::new(TAG_CONTENT_TYPE, "application/json"),
            Tag::new(TAG_DID_TYPE, DID_DOCUMENT_TYPE),
            Tag::new(TAG_DID, self.id.to_string()),
        ]
    }
}

/// A resolved document with the transaction that carries it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolution {
    pub tx: TxId,
    pub document: DidDocument,
}

#[derive(Clone)]
pub struct DidRegistry {
    weave: Arc<WeaveStore>,
    names: NameRegistry,
}

impl DidRegistry {
    pub fn new(weave: Arc<WeaveStore>) -> Self {
        Self {
            names: NameRegistry::new(weave.clone()),
            weave,
        }
    }

    pub fn weave(&self) -> &Arc<WeaveStore> {
        &self.weave
    }

    pub fn names(&self) -> &NameRegistry {
        &self.names
    }

    /// Stores `doc` signed by `signer`, which must hold the document's
    /// authority key (its controller's, or the subject's if none).
    pub fn publish(&self, doc: &DidDocument, signer: &SigningKey) -> Result<TxId, DidError> {
        doc.validate()?;
        if &keys::address_of(signer) != doc.authority() {
            return Err(DidError::NotAuthorized(doc.id.to_string()));
        }
        Ok(self.weave.submit(signer, doc.publication_tags(), doc.to_json())?)
    }

    fn parse_publication(tx: &Transaction, did: &Did) -> Result<DidDocument, DidError> {
        if tx.tag(TAG_DID_TYPE) != Some(DID_DOCUMENT_TYPE) {
            return Err(DidError::ParseError("not tagged as a DID document".into()));
        }
        let doc = DidDocument::from_json(&tx.data)?;
        if &doc.id != did {
            return Err(DidError::ParseError(format!("document is for {}", doc.id)));
        }
        Ok(doc)
    }

    /// Every accepted version of `did`, in seal order.
    pub fn history(&self, did: &Did) -> Result<Vec<Resolution>, DidError> {
        let mut authority = did.address().clone();
        let mut best: Option<Resolution> = None;
        let mut accepted = Vec::new();
        let mut parse_failure = None;
        for id in self.weave.query(&[Tag::new(TAG_DID, did.to_string())]) {
            let tx = self.weave.get(&id)?;
            if tx.owner != authority {
                continue;
            }
            let document = match Self::parse_publication(&tx, did) {
                Ok(doc) => doc,
                Err(e) => {
                    parse_failure.get_or_insert(e);
                    continue;
                }
            };
            let res = Resolution { tx: id, document };
            let better = best.as_ref().is_none_or(|b| {
                (res.document.version_sequence, std::cmp::Reverse(&res.tx))
                    > (b.document.version_sequence, std::cmp::Reverse(&b.tx))
            });
            if better {
                best = Some(res.clone());
            }
            authority = best.as_ref().expect("set above").document.authority().clone();
            accepted.push(res);
        }
        match (accepted.is_empty(), parse_failure) {
            (true, Some(e)) => Err(e),
            (true, None) => Err(DidError::NotFound(did.to_string())),
            _ => Ok(accepted),
        }
    }

    /// Best accepted version of `did`, deactivated or not.
    pub fn resolve_record(&self, did: &Did) -> Result<Resolution, DidError> {
        let history = self.history(did)?;
        Ok(history
            .into_iter()
            .max_by(|a, b| {
                (a.document.version_sequence, std::cmp::Reverse(&a.tx))
                    .cmp(&(b.document.version_sequence, std::cmp::Reverse(&b.tx)))
            })
            .expect("history is non-empty"))
    }

    pub fn resolve_did(&self, did: &Did) -> Result<Resolution, DidError> {
        let res = self.resolve_record(did)?;
        if res.document.deactivated {
            return Err(DidError::Deactivated(did.to_string()));
        }
        Ok(res)
    }

    /// Follows a name to the document transaction it targets.
    pub fn resolve_name(&self, name: &str) -> Result<Resolution, DidError> {
        let (target, _) = self.names.resolve(name)?;
        let tx = self
            .weave
            .get(&target)
            .map_err(|_| DidError::NotFound(format!("name target {target}")))?;
        let document = DidDocument::from_json(&tx.data)?;
        if self.resolve_record(&document.id).is_ok_and(|r| r.document.deactivated) {
            return Err(DidError::Deactivated(document.id.to_string()));
        }
        Ok(Resolution { tx: target, document })
    }

    /// Resolves either a DID string or a registered name.
    pub fn resolve_with_tx(&self, reference: &str) -> Result<Resolution, DidError> {
        if reference.starts_with("did:") {
            let did = Did::parse(reference).map_err(|_| DidError::NotFound(reference.to_owned()))?;
            self.resolve_did(&did)
        } else {
            self.resolve_name(reference)
        }
    }

    pub fn resolve(&self, reference: &str) -> Result<DidDocument, DidError> {
        self.resolve_with_tx(reference).map(|r| r.document)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn key(seed: u64) -> SigningKey {
        keys::generate(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed))
    }

    #[test]
    fn did_string_form() {
        let k = key(1);
        let did = derive_did(k.verifying_key().as_bytes()).unwrap();
        let text = did.to_string();
        assert!(text.starts_with("did:arweave:"));
        assert_eq!(text.len(), 12 + 43);
        assert_eq!(Did::parse(&text).unwrap(), did);
        assert!(Did::parse("did:arweave:123456789abcdefghi").is_err());
        assert!(Did::parse("did:web:example.org").is_err());
    }

    #[test]
    fn minimal_document_validates_and_roundtrips() {
        let k = key(1);
        let doc = create_document(&[k.verifying_key()], &[], vec![], None).unwrap();
        assert_eq!(doc.version_sequence, 0);
        assert_eq!(DidDocument::from_json(&doc.to_json()).unwrap(), doc);
        assert_eq!(create_document(&[], &[], vec![], None), Err(DidError::NoAuthenticationKey));
    }

    #[test]
    fn claim_fields_rejected() {
        let k = key(1);
        let doc = create_document(&[k.verifying_key()], &[], vec![], None).unwrap();
        let mut v: Value = serde_json::from_slice(&doc.to_json()).unwrap();
        v["age"] = 25.into();
        let err = DidDocument::from_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, DidError::InvalidDocument(m) if m.contains("age")));
    }

    #[test]
    fn dangling_authentication_reference() {
        let k = key(1);
        let mut doc = create_document(&[k.verifying_key()], &[], vec![], None).unwrap();
        doc.authentication.push(doc.id.url("missing"));
        assert!(matches!(doc.validate(), Err(DidError::InvalidDocument(_))));
    }

    #[test]
    fn publish_requires_authority() {
        let weave = Arc::new(WeaveStore::default());
        let reg = DidRegistry::new(weave.clone());
        let alice = key(1);
        let doc = create_document(&[alice.verifying_key()], &[], vec![], None).unwrap();
        assert!(matches!(reg.publish(&doc, &key(2)), Err(DidError::NotAuthorized(_))));
        let tx = reg.publish(&doc, &alice).unwrap();
        weave.mine_block().unwrap();
        let res = reg.resolve_did(&doc.id).unwrap();
        assert_eq!((res.tx, res.document), (tx, doc));
    }
}
