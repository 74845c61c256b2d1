//! Ed25519 authentication keys: transaction signing, name records,
//! revocation lists and holder challenge responses.

use ed25519_dalek::{Signer, Verifier};
use rand::{CryptoRng, RngCore};

pub use ed25519_dalek::{SigningKey, VerifyingKey};

use crate::weave::Address;

pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> SigningKey {
    SigningKey::generate(rng)
}

pub fn address_of(key: &SigningKey) -> Address {
    Address::from_public_key(&key.verifying_key())
}

fn framed(domain: &[u8], msg: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(domain.len() + msg.len() + 1);
    out.extend_from_slice(domain);
    out.push(0);
    out.extend_from_slice(msg);
    out
}

/// Signs `msg` under a domain-separation label.
pub fn sign(key: &SigningKey, domain: &[u8], msg: &[u8]) -> [u8; 64] {
    key.sign(&framed(domain, msg)).to_bytes()
}

/// Verifies a domain-separated signature; malformed keys or signatures
/// simply fail.
pub fn verify(public_key: &[u8], domain: &[u8], msg: &[u8], signature: &[u8]) -> bool {
    let Ok(pk) = <[u8; 32]>::try_from(public_key) else {
        return false;
    };
    let Ok(pk) = VerifyingKey::from_bytes(&pk) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
        return false;
    };
    pk.verify(&framed(domain, msg), &sig).is_ok()
}

/// Parses 32 bytes as an Edwards point usable as a verification key.
pub fn parse_public_key(bytes: &[u8]) -> Option<VerifyingKey> {
    let raw = <[u8; 32]>::try_from(bytes).ok()?;
    VerifyingKey::from_bytes(&raw).ok()
}
