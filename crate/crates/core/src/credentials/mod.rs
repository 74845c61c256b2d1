//! Verifiable credentials over BBS signatures.
//!
//! Claims are flattened to dotted paths, sorted by UTF-8 byte order and
//! encoded one message each as `path=<JSON value>`; the subject DID (`id`)
//! and the holder's public key (`publicKey`) are ordinary claims. The
//! signature header binds the credential id and issuer DID; a presentation
//! header binds the verifier's nonce.

mod claims;
mod credential;
mod presentation;
mod revocation;
mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbs::BbsError;
use crate::did::DidError;
use crate::weave::WeaveError;

pub use claims::{
    decode_message, encode_message, flatten_json, index_map_of, Canonical, ClaimSet, ClaimValue, Claims,
    HOLDER_KEY_PATH, SUBJECT_ID_PATH,
};
pub use credential::{
    issue, issuer_key, signature_header, Credential, CredentialSubject, IssueRequest, ProofBlock, BBS_PROOF_TYPE,
    CREDENTIAL_ID_PREFIX,
};
pub use presentation::{
    header_nonce, present, presentation_header, verify_presentation, DisclosedClaim, Presentation,
    VerificationOutcome,
};
pub use revocation::{current_list, is_revoked, revoke, RevocationList, REVOCATION_TAG};
pub use schema::{age_on, apply_predicates, evaluate, Operator, PredicateSpec, Schema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("duplicate claim path {0:?}")]
    DuplicatePath(String),
    #[error("claim {0:?} is not a string, integer, boolean or date")]
    NonScalarValue(String),
    #[error("invalid claim path {0:?}")]
    InvalidPath(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unresolvable issuer {0}")]
    UnresolvableIssuer(String),
    #[error("predicate source {0:?} is missing")]
    PredicateOnMissingPath(String),
    #[error("unsupported predicate operator {0:?}")]
    UnsupportedOperator(String),
    #[error("credential has no claim {0:?}")]
    UnknownPath(String),
    #[error("invalid credential: {0}")]
    InvalidCredential(String),
    #[error("key is not an authentication key of the issuer")]
    NotIssuer,
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error(transparent)]
    Bbs(#[from] BbsError),
    #[error("{0}")]
    Did(String),
    #[error(transparent)]
    Weave(#[from] WeaveError),
}

impl From<DidError> for CredentialError {
    fn from(e: DidError) -> Self {
        CredentialError::Did(e.to_string())
    }
}

/// Why a verifier rejected. The first four come from presentation checks;
/// the rest from the holder-facing protocol layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    BadProof,
    NonceMismatch,
    Revoked,
    UnresolvableIssuer,
    UnresolvableHolder,
    HolderAuthFailed,
    DisclosureMismatch,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadProof => "BadProof",
            RejectReason::NonceMismatch => "NonceMismatch",
            RejectReason::Revoked => "Revoked",
            RejectReason::UnresolvableIssuer => "UnresolvableIssuer",
            RejectReason::UnresolvableHolder => "UnresolvableHolder",
            RejectReason::HolderAuthFailed => "HolderAuthFailed",
            RejectReason::DisclosureMismatch => "DisclosureMismatch",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
