use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bbs::{self, Proof, PublicKey};
use crate::did::{Did, DidRegistry};
use crate::encoding::{self, serde_b64url};

use super::claims::{decode_message, index_map_of, ClaimValue};
use super::credential::{issuer_key, signature_header, Credential};
use super::revocation::is_revoked;
use super::{CredentialError, RejectReason};

const PH_DOMAIN: &[u8] = b"permadid-ph-v1";

/// Presentation header: verifier nonce followed by free-form context (for
/// example the verifier's DID).
pub fn presentation_header(nonce: &[u8], context: &[u8]) -> Vec<u8> {
    let mut out = PH_DOMAIN.to_vec();
    out.extend_from_slice(&(nonce.len() as u16).to_be_bytes());
    out.extend_from_slice(nonce);
    out.extend_from_slice(context);
    out
}

/// Nonce embedded in a presentation header.
pub fn header_nonce(ph: &[u8]) -> Option<&[u8]> {
    let rest = ph.strip_prefix(PH_DOMAIN)?;
    let len = u16::from_be_bytes(rest.get(..2)?.try_into().ok()?) as usize;
    rest.get(2..2 + len)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisclosedClaim {
    pub index: usize,
    /// The signed message text, `path=<JSON value>`.
    pub message: String,
}

impl DisclosedClaim {
    /// Path and value, if the message is in canonical form.
    pub fn decode(&self) -> Option<(String, ClaimValue)> {
        decode_message(self.message.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Presentation {
    pub credential_id: String,
    pub issuer: Did,
    pub verification_method: String,
    /// Every claim path of the credential in canonical order; the verifier
    /// derives the index map from it.
    pub claim_paths: Vec<String>,
    pub disclosed: Vec<DisclosedClaim>,
    #[serde(with = "serde_b64url")]
    pub proof: Vec<u8>,
    #[serde(with = "serde_b64url")]
    pub presentation_header: Vec<u8>,
    pub total_messages: usize,
}

impl Presentation {
    pub fn to_json(&self) -> Vec<u8> {
        encoding::canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CredentialError> {
        serde_json::from_slice(bytes).map_err(|e| CredentialError::Malformed(e.to_string()))
    }

    pub fn disclosed_pairs(&self) -> Vec<(String, ClaimValue)> {
        self.disclosed.iter().filter_map(DisclosedClaim::decode).collect()
    }
}

/// Derives a presentation revealing exactly `disclose` (a set of claim
/// paths), bound to `ph`.
pub fn present<R: RngCore + CryptoRng>(
    credential: &Credential,
    issuer_pk: &PublicKey,
    disclose: &BTreeSet<String>,
    ph: &[u8],
    rng: &mut R,
) -> Result<Presentation, CredentialError> {
    credential.verify_with_key(issuer_pk)?;
    let canonical = credential.canonical()?;
    let mut indexes = Vec::with_capacity(disclose.len());
    for path in disclose {
        let &i = canonical
            .index_map
            .get(path)
            .ok_or_else(|| CredentialError::UnknownPath(path.clone()))?;
        indexes.push(i);
    }
    indexes.sort_unstable();
    let scalars = canonical.scalars();
    let proof = bbs::proof_gen(issuer_pk, &credential.signature()?, &credential.header(), ph, &scalars, &indexes, rng)?;
    let disclosed = indexes
        .iter()
        .map(|&i| DisclosedClaim {
            index: i,
            message: String::from_utf8(canonical.entries[i].1.clone()).expect("messages are UTF-8"),
        })
        .collect();
    Ok(Presentation {
        credential_id: credential.id.clone(),
        issuer: credential.issuer.clone(),
        verification_method: credential.proof.verification_method.clone(),
        claim_paths: canonical.paths(),
        disclosed,
        proof: proof.to_bytes(),
        presentation_header: ph.to_vec(),
        total_messages: canonical.entries.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationOutcome {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    pub disclosed: Vec<(String, ClaimValue)>,
}

impl VerificationOutcome {
    pub fn accept(disclosed: Vec<(String, ClaimValue)>) -> Self {
        Self {
            accepted: true,
            reason: None,
            disclosed,
        }
    }

    pub fn reject(reason: RejectReason) -> Self {
        Self {
            accepted: false,
            reason: Some(reason),
            disclosed: Vec::new(),
        }
    }
}

/// Structural and cryptographic check of the proof against the issuer key.
fn check_proof(p: &Presentation, pk: &PublicKey) -> bool {
    let Some(index_map) = index_map_of(&p.claim_paths) else {
        return false;
    };
    if p.total_messages != p.claim_paths.len() {
        return false;
    }
    let Ok(proof) = Proof::from_bytes(&p.proof) else {
        return false;
    };
    if proof.undisclosed_count() + p.disclosed.len() != p.total_messages {
        return false;
    }
    let mut pairs = Vec::with_capacity(p.disclosed.len());
    for d in &p.disclosed {
        let Some((path, _)) = d.decode() else {
            return false;
        };
        if index_map.get(&path) != Some(&d.index) {
            return false;
        }
        pairs.push((d.index, bbs::map_message_to_scalar(d.message.as_bytes())));
    }
    let header = signature_header(&p.credential_id, &p.issuer);
    bbs::proof_verify(pk, &proof, &header, &p.presentation_header, &pairs)
}

/// Verifier-side decision. Checks, in order: issuer resolution, nonce,
/// proof, revocation.
pub fn verify_presentation(
    dids: &DidRegistry,
    p: &Presentation,
    expected_nonce: &[u8],
) -> VerificationOutcome {
    let Ok((_, pk)) = issuer_key(dids, &p.issuer, Some(&p.verification_method)) else {
        return VerificationOutcome::reject(RejectReason::UnresolvableIssuer);
    };
    if header_nonce(&p.presentation_header) != Some(expected_nonce) {
        return VerificationOutcome::reject(RejectReason::NonceMismatch);
    }
    if !check_proof(p, &pk) {
        return VerificationOutcome::reject(RejectReason::BadProof);
    }
    if is_revoked(dids, &p.issuer, &p.credential_id) {
        return VerificationOutcome::reject(RejectReason::Revoked);
    }
    VerificationOutcome::accept(p.disclosed_pairs())
}
