use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bbs::{self, PublicKey, SecretKey, Signature};
use crate::did::{Did, DidRegistry};
use crate::encoding;
use crate::keys::VerifyingKey;

use super::claims::{Canonical, ClaimSet, ClaimValue, Claims, HOLDER_KEY_PATH, SUBJECT_ID_PATH};
use super::schema::{apply_predicates, PredicateSpec, Schema};
use super::CredentialError;

pub const VC_CONTEXT_V1: &str = "https://www.w3.org/2018/credentials/v1";
pub const BBS_CONTEXT_V1: &str = "https://w3id.org/security/bbs/v1";
pub const BBS_PROOF_TYPE: &str = "BbsBlsSignature2020";
pub const CREDENTIAL_ID_PREFIX: &str = "urn:permadid:";
const HEADER_DOMAIN: &[u8] = b"permadid-vc-v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProofBlock {
    #[serde(rename = "type")]
    pub type_label: String,
    pub created: String,
    pub proof_purpose: String,
    pub verification_method: String,
    /// Standard base64 of the 80-byte signature.
    pub proof_value: String,
}

/// `credentialSubject`: the subject DID under `id`, every other claim by path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialSubject {
    pub id: Did,
    #[serde(flatten)]
    pub claims: Claims,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Credential {
    #[serde(rename = "@context")]
    pub context: Vec<String>,
    pub id: String,
    #[serde(rename = "type")]
    pub type_labels: Vec<String>,
    pub issuer: Did,
    pub issuance_date: String,
    pub credential_subject: CredentialSubject,
    pub proof: ProofBlock,
}

/// Signature header: binds the credential id and issuer DID.
pub fn signature_header(credential_id: &str, issuer: &Did) -> Vec<u8> {
    let issuer = issuer.to_string();
    let mut out = HEADER_DOMAIN.to_vec();
    for part in [credential_id.as_bytes(), issuer.as_bytes()] {
        out.extend_from_slice(&(part.len() as u32).to_be_bytes());
        out.extend_from_slice(part);
    }
    out
}

/// Content id over everything but the proof.
fn credential_id(type_labels: &[String], issuer: &Did, issuance_date: &str, subject: &CredentialSubject) -> String {
    let body = json!({
        "type": type_labels,
        "issuer": issuer,
        "issuanceDate": issuance_date,
        "credentialSubject": subject,
    });
    format!("{CREDENTIAL_ID_PREFIX}{}", encoding::b64url(&encoding::sha256(&encoding::canonical_json(&body))))
}

impl Credential {
    pub fn claim_set(&self) -> ClaimSet {
        ClaimSet::new(self.credential_subject.id.clone(), self.credential_subject.claims.clone())
    }

    pub fn canonical(&self) -> Result<Canonical, CredentialError> {
        self.claim_set().canonicalize()
    }

    pub fn claim(&self, path: &str) -> Option<ClaimValue> {
        if path == SUBJECT_ID_PATH {
            return Some(ClaimValue::String(self.credential_subject.id.to_string()));
        }
        self.credential_subject.claims.get(path).cloned()
    }

    pub fn header(&self) -> Vec<u8> {
        signature_header(&self.id, &self.issuer)
    }

    pub fn signature(&self) -> Result<Signature, CredentialError> {
        let raw = encoding::b64std_decode(&self.proof.proof_value)
            .ok_or_else(|| CredentialError::InvalidCredential("proofValue is not base64".into()))?;
        Ok(Signature::from_bytes(&raw)?)
    }

    pub fn holder_key(&self) -> Option<VerifyingKey> {
        match self.credential_subject.claims.get(HOLDER_KEY_PATH)? {
            ClaimValue::String(s) => {
                let raw = bs58::decode(s).into_vec().ok()?;
                crate::keys::parse_public_key(&raw)
            }
            _ => None,
        }
    }

    /// Checks the content id, proof metadata and BBS signature under `pk`.
    pub fn verify_with_key(&self, pk: &PublicKey) -> Result<(), CredentialError> {
        let invalid = |m: &str| Err(CredentialError::InvalidCredential(m.into()));
        if self.proof.type_label != BBS_PROOF_TYPE {
            return invalid("unsupported proof type");
        }
        if !self.type_labels.iter().any(|t| t == "VerifiableCredential") {
            return invalid("missing VerifiableCredential type");
        }
        if credential_id(&self.type_labels, &self.issuer, &self.issuance_date, &self.credential_subject) != self.id {
            return invalid("credential id does not match content");
        }
        let messages = self.canonical()?.scalars();
        if !bbs::verify(pk, &self.header(), &messages, &self.signature()?) {
            return invalid("signature does not verify");
        }
        Ok(())
    }

    /// Resolves the issuer's key named in the proof, then verifies.
    pub fn verify(&self, dids: &DidRegistry) -> Result<(), CredentialError> {
        let pk = issuer_key(dids, &self.issuer, Some(&self.proof.verification_method))?.1;
        self.verify_with_key(&pk)
    }

    pub fn to_json(&self) -> Vec<u8> {
        encoding::canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CredentialError> {
        serde_json::from_slice(bytes).map_err(|e| CredentialError::Malformed(e.to_string()))
    }
}

/// BBS key of a resolvable issuer: the method named by `method` or the
/// document's first BBS key.
pub fn issuer_key(dids: &DidRegistry, issuer: &Did, method: Option<&str>) -> Result<(String, PublicKey), CredentialError> {
    let unresolvable = |why: String| CredentialError::UnresolvableIssuer(format!("{issuer}: {why}"));
    let doc = dids.resolve_did(issuer).map_err(|e| unresolvable(e.to_string()))?.document;
    let found = match method {
        Some(m) => doc.method(m).and_then(|vm| vm.bbs_key().map(|k| (vm.id.clone(), k))),
        None => doc.bbs_key().map(|(id, k)| (id.to_owned(), k)),
    };
    found.ok_or_else(|| unresolvable("no BBS verification method".into()))
}

/// Inputs for [`issue`].
pub struct IssueRequest<'a> {
    pub issuer: &'a Did,
    pub issuer_key: &'a SecretKey,
    pub holder: &'a Did,
    pub holder_key: &'a VerifyingKey,
    pub claims: Claims,
    pub schema: Schema,
    pub predicates: &'a [PredicateSpec],
    pub issued_at: DateTime<Utc>,
}

/// Signs the claims (plus the holder's key and any predicate claims) under
/// the issuer's published BBS key.
pub fn issue(dids: &DidRegistry, req: IssueRequest<'_>) -> Result<Credential, CredentialError> {
    let pk = req.issuer_key.public_key();
    let (method, published) = issuer_key(dids, req.issuer, None)?;
    if published != pk {
        return Err(CredentialError::UnresolvableIssuer(format!(
            "{}: published BBS key does not match the signing key",
            req.issuer
        )));
    }
    req.schema.validate(&req.claims)?;
    let mut claims = req.claims;
    apply_predicates(&mut claims, req.predicates, req.issued_at.date_naive())?;
    let holder_key = ClaimValue::String(bs58::encode(req.holder_key.as_bytes()).into_string());
    if claims.insert(HOLDER_KEY_PATH.into(), holder_key).is_some() {
        return Err(CredentialError::DuplicatePath(HOLDER_KEY_PATH.into()));
    }
    let subject = CredentialSubject {
        id: req.holder.clone(),
        claims,
    };
    let canonical = ClaimSet::new(subject.id.clone(), subject.claims.clone()).canonicalize()?;
    if canonical.entries.len() > bbs::MAX_MESSAGES {
        return Err(bbs::BbsError::TooManyMessages {
            count: canonical.entries.len(),
        }
        .into());
    }

    let mut type_labels = vec!["VerifiableCredential".to_owned()];
    type_labels.extend(req.schema.credential_type().map(str::to_owned));
    let issuance_date = req.issued_at.to_rfc3339_opts(SecondsFormat::Secs, true);
    let id = credential_id(&type_labels, req.issuer, &issuance_date, &subject);
    let sig = bbs::sign(req.issuer_key, &pk, &signature_header(&id, req.issuer), &canonical.scalars())?;

    Ok(Credential {
        context: vec![VC_CONTEXT_V1.into(), BBS_CONTEXT_V1.into()],
        id,
        type_labels,
        issuer: req.issuer.clone(),
        proof: ProofBlock {
            type_label: BBS_PROOF_TYPE.into(),
            created: issuance_date.clone(),
            proof_purpose: "assertionMethod".into(),
            verification_method: method,
            proof_value: encoding::b64std(&sig.to_bytes()),
        },
        issuance_date,
        credential_subject: subject,
    })
}
