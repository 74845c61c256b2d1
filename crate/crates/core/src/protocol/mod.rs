//! Issuer / holder / verifier orchestration.
//!
//! * Setup ([`Network::setup_entity`]): keys, DID document, optional name.
//! * Issuance ([`Network::run_issuance`]): the issuer signs claims into the
//!   holder's in-memory wallet. Credentials never touch the weave.
//! * Verification ([`Network::run_verification`]): the verifier sends a nonce and
//!   the paths it needs; the holder answers with a presentation plus a
//!   signature by its DID authentication key; the verifier resolves both
//!   parties and checks everything.
//!
//! [`Network::refresh_identity`] rotates the holder's DID and has every
//! credential reissued against the new key, so presentations made before
//! and after share no holder identifier.

mod scenario;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use indexmap::IndexSet;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbs;
use crate::credentials::{
    self, issue, issuer_key, present, presentation_header, verify_presentation, Claims, Credential, CredentialError,
    IssueRequest, PredicateSpec, Presentation, RejectReason, Schema,
};
use crate::did::{create_document, Did, DidDocument, DidError, DidRegistry, Service};
use crate::encoding::serde_b64url;
use crate::keys::{self, SigningKey};
use crate::names::NameError;
use crate::weave::{Block, TxId, WeaveError, WeaveStore};

pub use scenario::{run_scenario, run_scenario_on, Scenario, ScenarioReport, Step, StepRecord};

pub const NONCE_LEN: usize = 32;
/// Outstanding nonces remembered per verifier; the oldest is forgotten first.
pub const NONCE_CAPACITY: usize = 10_000;
const HOLDER_AUTH_DOMAIN: &[u8] = b"permadid/holder-response/v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("name {0:?} is already taken")]
    NameTaken(String),
    #[error("no credential in the wallet covers the requested paths")]
    NoMatchingCredential,
    #[error("{0} is not an issuer")]
    NotAnIssuer(String),
    #[error("issuer {0} is not available to reissue a credential")]
    IssuerUnavailable(String),
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("{0}")]
    Did(String),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Weave(#[from] WeaveError),
    #[error("scenario: {0}")]
    Scenario(String),
}

impl From<DidError> for ProtocolError {
    fn from(e: DidError) -> Self {
        match e {
            DidError::Name(n) => ProtocolError::Name(n),
            DidError::Weave(w) => ProtocolError::Weave(w),
            other => ProtocolError::Did(other.to_string()),
        }
    }
}

impl ProtocolError {
    /// Short stable code, used by scenario expectations and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::NameTaken(_) | ProtocolError::Name(NameError::NameTaken(_)) => "NameTaken",
            ProtocolError::NoMatchingCredential => "NoMatchingCredential",
            ProtocolError::NotAnIssuer(_) => "NotAnIssuer",
            ProtocolError::IssuerUnavailable(_) => "IssuerUnavailable",
            ProtocolError::Credential(CredentialError::UnresolvableIssuer(_)) => "UnresolvableIssuer",
            ProtocolError::Credential(CredentialError::SchemaViolation(_)) => "SchemaViolation",
            ProtocolError::Credential(CredentialError::UnknownPath(_)) => "UnknownPath",
            ProtocolError::Credential(CredentialError::NotIssuer) => "NotIssuer",
            ProtocolError::Credential(CredentialError::PredicateOnMissingPath(_)) => "PredicateOnMissingPath",
            ProtocolError::Credential(CredentialError::UnsupportedOperator(_)) => "UnsupportedOperator",
            ProtocolError::Credential(_) => "CredentialError",
            ProtocolError::Did(_) => "DidError",
            ProtocolError::Name(NameError::InvalidName(_)) => "InvalidName",
            ProtocolError::Name(_) => "NameError",
            ProtocolError::Weave(_) => "WeaveError",
            ProtocolError::Scenario(_) => "ScenarioError",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Issuer,
    Holder,
    Verifier,
    ServiceProvider,
}

/// Verifier-side memory of nonces handed out and not yet used.
#[derive(Clone, Debug, Default)]
pub struct NonceTracker {
    outstanding: IndexSet<[u8; NONCE_LEN]>,
}

impl NonceTracker {
    pub fn issue(&mut self, nonce: [u8; NONCE_LEN]) {
        if self.outstanding.len() >= NONCE_CAPACITY {
            self.outstanding.shift_remove_index(0);
        }
        self.outstanding.insert(nonce);
    }

    /// Removes the nonce; true if it was outstanding.
    pub fn consume(&mut self, nonce: &[u8]) -> bool {
        <[u8; NONCE_LEN]>::try_from(nonce).is_ok_and(|n| self.outstanding.shift_remove(&n))
    }

    pub fn len(&self) -> usize {
        self.outstanding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outstanding.is_empty()
    }
}

/// How a credential was obtained, kept so it can be reissued after a key refresh.
#[derive(Clone, Debug)]
struct IssuanceRecord {
    issuer: Did,
    claims: Claims,
    schema: Schema,
    predicates: Vec<PredicateSpec>,
}

/// One participant. Single-owner mutable state: move it between threads,
/// don't share it.
#[derive(Clone)]
pub struct EntityProfile {
    pub role: Role,
    pub label: String,
    auth_key: SigningKey,
    /// Owns the registered name, so the name survives DID rotation.
    name_key: SigningKey,
    bbs_keys: Option<(bbs::SecretKey, bbs::PublicKey)>,
    pub did: Did,
    pub name: Option<String>,
    pub published_doc_tx: Option<TxId>,
    wallet: Vec<(Credential, IssuanceRecord)>,
    nonces: NonceTracker,
}

impl std::fmt::Debug for EntityProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EntityProfile")
            .field("role", &self.role)
            .field("label", &self.label)
            .field("did", &self.did)
            .field("name", &self.name)
            .field("credentials", &self.wallet.len())
            .finish()
    }
}

impl EntityProfile {
    pub fn auth_key(&self) -> &SigningKey {
        &self.auth_key
    }

    pub fn name_key(&self) -> &SigningKey {
        &self.name_key
    }

    pub fn bbs_public_key(&self) -> Option<&bbs::PublicKey> {
        self.bbs_keys.as_ref().map(|(_, pk)| pk)
    }

    pub fn bbs_secret_key(&self) -> Option<&bbs::SecretKey> {
        self.bbs_keys.as_ref().map(|(sk, _)| sk)
    }

    pub fn credentials(&self) -> impl Iterator<Item = &Credential> {
        self.wallet.iter().map(|(c, _)| c)
    }

    pub fn nonce_tracker(&self) -> &NonceTracker {
        &self.nonces
    }

    /// The name if registered, else the DID string.
    pub fn reference(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.did.to_string())
    }

    /// Public document for the current keys (version 0).
    pub fn document(&self) -> DidDocument {
        let bbs: Vec<bbs::PublicKey> = self.bbs_public_key().into_iter().copied().collect();
        let mut doc = create_document(&[self.auth_key.verifying_key()], &bbs, Vec::new(), None)
            .expect("one authentication key is always present");
        if let Some(name) = &self.name {
            doc.service.push(Service::credential_service(&doc.id, &format!("https://{name}.arweave.net/credentials")));
        }
        doc
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationRequest {
    pub required_paths: BTreeSet<String>,
    #[serde(with = "serde_b64url")]
    pub nonce: [u8; NONCE_LEN],
    pub verifier: Did,
}

/// What the holder sends back: who they are (name or DID), the
/// presentation, and a signature over `presentation header ‖ proof` by one
/// of the holder's authentication keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HolderResponse {
    pub holder: String,
    pub presentation: Presentation,
    #[serde(with = "serde_b64url")]
    pub holder_signature: Vec<u8>,
}

fn holder_auth_payload(p: &Presentation) -> Vec<u8> {
    [&p.presentation_header[..], &p.proof[..]].concat()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationResult {
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub disclosed: Vec<(String, credentials::ClaimValue)>,
}

impl VerificationResult {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accept
    }

    fn reject(reason: RejectReason) -> Self {
        Self {
            outcome: Outcome::Reject,
            reason: Some(reason),
            disclosed: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RefreshReport {
    pub old_did: Did,
    pub new_did: Did,
    pub new_doc_tx: TxId,
    pub reissued: usize,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

mod duration_ms {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }
}

/// Shared world: the weave, its registries, a seeded RNG and the issuance clock.
pub struct Network {
    weave: Arc<WeaveStore>,
    dids: DidRegistry,
    rng: ChaCha20Rng,
    now: DateTime<Utc>,
}

impl Network {
    /// Fresh weave, deterministic randomness, clock at 2024-06-01T00:00:00Z.
    pub fn new(seed: u64) -> Self {
        Self::with_weave(Arc::new(WeaveStore::default()), seed)
    }

    pub fn with_weave(weave: Arc<WeaveStore>, seed: u64) -> Self {
        Self {
            dids: DidRegistry::new(weave.clone()),
            weave,
            rng: ChaCha20Rng::seed_from_u64(seed),
            now: Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).single().expect("valid date"),
        }
    }

    pub fn weave(&self) -> &Arc<WeaveStore> {
        &self.weave
    }

    pub fn dids(&self) -> &DidRegistry {
        &self.dids
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.now
    }

    pub fn set_now(&mut self, now: DateTime<Utc>) {
        self.now = now;
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Seals pending transactions, if any.
    pub fn mine(&self) -> Result<Option<Block>, ProtocolError> {
        match self.weave.mine_block() {
            Ok(b) => Ok(Some(b)),
            Err(WeaveError::NothingToMine) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Keys and DID only; nothing is published.
    pub fn generate_entity(&mut self, role: Role, label: &str) -> EntityProfile {
        let auth_key = keys::generate(&mut self.rng);
        let name_key = keys::generate(&mut self.rng);
        let bbs_keys = (role == Role::Issuer).then(|| {
            let mut seed = [0u8; 32];
            self.rng.fill_bytes(&mut seed);
            bbs::keygen(&seed).expect("32-byte seed")
        });
        EntityProfile {
            role,
            label: label.to_owned(),
            did: Did::from_address(keys::address_of(&auth_key)),
            auth_key,
            name_key,
            bbs_keys,
            name: None,
            published_doc_tx: None,
            wallet: Vec::new(),
            nonces: NonceTracker::default(),
        }
    }

    /// Generates keys, publishes the DID document, registers `name`
    /// (if given) and mines, so the entity resolves immediately.
    pub fn setup_entity(&mut self, role: Role, label: &str, name: Option<&str>) -> Result<EntityProfile, ProtocolError> {
        let mut entity = self.generate_entity(role, label);
        if let Some(name) = name {
            if !crate::names::is_valid_name(name) {
                return Err(NameError::InvalidName(name.to_owned()).into());
            }
            if self.dids.names().resolve(name).is_ok() {
                return Err(ProtocolError::NameTaken(name.to_owned()));
            }
            entity.name = Some(name.to_owned());
        }
        self.publish_entity(&mut entity)?;
        Ok(entity)
    }

    /// Publishes the entity's current document, points its name at it, and mines.
    pub fn publish_entity(&mut self, entity: &mut EntityProfile) -> Result<TxId, ProtocolError> {
        let doc = entity.document();
        let tx = self.dids.publish(&doc, &entity.auth_key)?;
        if let Some(name) = &entity.name {
            match self.dids.names().register(name, &tx, &entity.name_key) {
                Ok(_) => {}
                Err(NameError::NameTaken(n)) => return Err(ProtocolError::NameTaken(n)),
                Err(e) => return Err(e.into()),
            }
        }
        self.mine()?;
        entity.published_doc_tx = Some(tx.clone());
        Ok(tx)
    }

    /// The issuer signs `claims` for the holder; the credential goes
    /// into the holder's wallet only.
    pub fn run_issuance(
        &mut self,
        issuer: &EntityProfile,
        holder: &mut EntityProfile,
        claims: Claims,
        schema: Schema,
        predicates: &[PredicateSpec],
    ) -> Result<Credential, ProtocolError> {
        let Some((sk, _)) = &issuer.bbs_keys else {
            return Err(ProtocolError::NotAnIssuer(issuer.label.clone()));
        };
        let record = IssuanceRecord {
            issuer: issuer.did.clone(),
            claims,
            schema,
            predicates: predicates.to_vec(),
        };
        let credential = self.issue_record(sk, holder, &record)?;
        holder.wallet.push((credential.clone(), record));
        Ok(credential)
    }

    fn issue_record(
        &self,
        sk: &bbs::SecretKey,
        holder: &EntityProfile,
        record: &IssuanceRecord,
    ) -> Result<Credential, ProtocolError> {
        Ok(issue(
            &self.dids,
            IssueRequest {
                issuer: &record.issuer,
                issuer_key: sk,
                holder: &holder.did,
                holder_key: &holder.auth_key.verifying_key(),
                claims: record.claims.clone(),
                schema: record.schema,
                predicates: &record.predicates,
                issued_at: self.now,
            },
        )?)
    }

    /// Verifier side: a fresh nonce for `paths`.
    pub fn issue_request(&mut self, verifier: &mut EntityProfile, paths: &[&str]) -> VerificationRequest {
        let mut nonce = [0u8; NONCE_LEN];
        self.rng.fill_bytes(&mut nonce);
        verifier.nonces.issue(nonce);
        VerificationRequest {
            required_paths: paths.iter().map(|p| (*p).to_owned()).collect(),
            nonce,
            verifier: verifier.did.clone(),
        }
    }

    /// Holder side: present the first wallet credential covering
    /// the request, disclosing exactly the requested paths.
    pub fn respond(&mut self, holder: &EntityProfile, request: &VerificationRequest) -> Result<HolderResponse, ProtocolError> {
        let credential = holder
            .credentials()
            .find(|c| request.required_paths.iter().all(|p| c.claim(p).is_some()))
            .ok_or(ProtocolError::NoMatchingCredential)?;
        let (_, pk) = issuer_key(&self.dids, &credential.issuer, Some(&credential.proof.verification_method))?;
        let ph = presentation_header(&request.nonce, request.verifier.to_string().as_bytes());
        let presentation = present(credential, &pk, &request.required_paths, &ph, &mut self.rng)?;
        let holder_signature = keys::sign(&holder.auth_key, HOLDER_AUTH_DOMAIN, &holder_auth_payload(&presentation)).to_vec();
        Ok(HolderResponse {
            holder: holder.reference(),
            presentation,
            holder_signature,
        })
    }

    /// Verifier side: the nonce must be outstanding (it is consumed
    /// here whatever the outcome), the holder must resolve and have signed
    /// the response, the presentation must verify, and exactly the requested
    /// paths must be disclosed.
    pub fn check_response(
        &self,
        verifier: &mut EntityProfile,
        request: &VerificationRequest,
        response: &HolderResponse,
    ) -> VerificationResult {
        if !verifier.nonces.consume(&request.nonce) {
            return VerificationResult::reject(RejectReason::NonceMismatch);
        }
        let Ok(holder_doc) = self.dids.resolve(&response.holder) else {
            return VerificationResult::reject(RejectReason::UnresolvableHolder);
        };
        let payload = holder_auth_payload(&response.presentation);
        let signed = holder_doc
            .authentication_keys()
            .iter()
            .any(|k| keys::verify(k.as_bytes(), HOLDER_AUTH_DOMAIN, &payload, &response.holder_signature));
        if !signed {
            return VerificationResult::reject(RejectReason::HolderAuthFailed);
        }
        let outcome = verify_presentation(&self.dids, &response.presentation, &request.nonce);
        if let Some(reason) = outcome.reason {
            return VerificationResult::reject(reason);
        }
        let disclosed: BTreeSet<String> = outcome.disclosed.iter().map(|(p, _)| p.clone()).collect();
        if disclosed != request.required_paths {
            return VerificationResult::reject(RejectReason::DisclosureMismatch);
        }
        VerificationResult {
            outcome: Outcome::Accept,
            reason: None,
            disclosed: outcome.disclosed,
        }
    }

    /// Request, response and check in one call.
    pub fn run_verification(
        &mut self,
        verifier: &mut EntityProfile,
        holder: &EntityProfile,
        request: &VerificationRequest,
    ) -> Result<(VerificationResult, HolderResponse), ProtocolError> {
        let response = self.respond(holder, request)?;
        Ok((self.check_response(verifier, request, &response), response))
    }

    /// Rotates the holder's authentication key and DID, publishes the new
    /// document, re-points the holder's name, and has every credential
    /// reissued against the new key by its issuer (which must be in `issuers`).
    pub fn refresh_identity(
        &mut self,
        holder: &mut EntityProfile,
        issuers: &[&EntityProfile],
    ) -> Result<RefreshReport, ProtocolError> {
        let started = Instant::now();
        let old_did = holder.did.clone();
        let mut next = holder.clone();
        next.auth_key = keys::generate(&mut self.rng);
        next.did = Did::from_address(keys::address_of(&next.auth_key));

        let doc = next.document();
        let tx = self.dids.publish(&doc, &next.auth_key)?;
        if let Some(name) = &next.name {
            self.dids.names().update(name, &tx, &next.name_key)?;
        }
        self.mine()?;
        next.published_doc_tx = Some(tx.clone());

        let mut wallet = Vec::with_capacity(holder.wallet.len());
        for (_, record) in &holder.wallet {
            let issuer = issuers
                .iter()
                .find(|i| i.did == record.issuer)
                .ok_or_else(|| ProtocolError::IssuerUnavailable(record.issuer.to_string()))?;
            let sk = issuer
                .bbs_secret_key()
                .ok_or_else(|| ProtocolError::NotAnIssuer(issuer.label.clone()))?;
            let credential = self.issue_record(sk, &next, record)?;
            wallet.push((credential, record.clone()));
        }
        next.wallet = wallet;
        let reissued = next.wallet.len();
        *holder = next;
        Ok(RefreshReport {
            old_did,
            new_did: holder.did.clone(),
            new_doc_tx: tx,
            reissued,
            elapsed: started.elapsed(),
        })
    }

    /// Publishes a revocation of `credential_id` by `issuer` and mines it.
    pub fn revoke(&mut self, issuer: &EntityProfile, credential_id: &str) -> Result<TxId, ProtocolError> {
        let tx = credentials::revoke(&self.dids, &issuer.did, &issuer.auth_key, credential_id)?;
        self.mine()?;
        Ok(tx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::ClaimValue;

    fn alice_claims() -> Claims {
        let mut c = Claims::new();
        c.insert("name".into(), ClaimValue::from("Alice"));
        c.insert("age".into(), ClaimValue::Integer(25));
        c
    }

    #[test]
    fn setup_issue_verify() {
        let mut net = Network::new(1);
        let gov = net.setup_entity(Role::Issuer, "gov", Some("gov")).unwrap();
        let mut alice = net.setup_entity(Role::Holder, "alice", Some("alice")).unwrap();
        let mut shop = net.setup_entity(Role::Verifier, "shop", None).unwrap();
        assert_eq!(net.dids().resolve("alice").unwrap().id, alice.did);

        net.run_issuance(&gov, &mut alice, alice_claims(), Schema::Open, &[]).unwrap();
        let req = net.issue_request(&mut shop, &["age"]);
        let (result, response) = net.run_verification(&mut shop, &alice, &req).unwrap();
        assert!(result.accepted(), "{result:?}");
        assert_eq!(result.disclosed, vec![("age".to_owned(), ClaimValue::Integer(25))]);

        let replay = net.check_response(&mut shop, &req, &response);
        assert_eq!(replay.reason, Some(RejectReason::NonceMismatch));
    }

    #[test]
    fn phase_ordering() {
        let mut net = Network::new(2);
        let gov = net.generate_entity(Role::Issuer, "gov");
        let mut alice = net.setup_entity(Role::Holder, "alice", Some("alice")).unwrap();
        let mut shop = net.setup_entity(Role::Verifier, "shop", None).unwrap();
        let req = net.issue_request(&mut shop, &["age"]);
        assert_eq!(net.respond(&alice, &req).unwrap_err(), ProtocolError::NoMatchingCredential);
        let err = net.run_issuance(&gov, &mut alice, alice_claims(), Schema::Open, &[]).unwrap_err();
        assert_eq!(err.code(), "UnresolvableIssuer");
        assert_eq!(alice.credentials().count(), 0);
    }

    #[test]
    fn duplicate_name() {
        let mut net = Network::new(3);
        net.setup_entity(Role::Holder, "a", Some("alice")).unwrap();
        let err = net.setup_entity(Role::Holder, "b", Some("alice")).unwrap_err();
        assert_eq!(err, ProtocolError::NameTaken("alice".into()));
    }

    #[test]
    fn nonce_tracker_is_bounded() {
        let mut t = NonceTracker::default();
        for i in 0..(NONCE_CAPACITY as u32 + 1) {
            let mut n = [0u8; NONCE_LEN];
            n[..4].copy_from_slice(&i.to_be_bytes());
            t.issue(n);
        }
        assert_eq!(t.len(), NONCE_CAPACITY);
        assert!(!t.consume(&[0u8; NONCE_LEN]));
        let mut last = [0u8; NONCE_LEN];
        last[..4].copy_from_slice(&(NONCE_CAPACITY as u32).to_be_bytes());
        assert!(t.consume(&last));
        assert!(!t.consume(&last));
    }
}
