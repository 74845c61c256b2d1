//! BBS signatures over BLS12-381 (G1 signatures, G2 public keys) with
//! zero-knowledge selective-disclosure proofs.
//!
//! Byte layouts, all stable:
//!
//! * secret key: 32-byte big-endian scalar
//! * public key: 96-byte compressed G2 point
//! * signature: `A` (48-byte compressed G1) ‖ `e` (32 bytes), 80 bytes
//! * proof: `Abar ‖ Bbar ‖ D` (3 × 48) ‖ `e^ ‖ r1^ ‖ r3^` ‖ one response per
//!   undisclosed message ‖ challenge, i.e. `144 + 32·(4 + U)` bytes
//!
//! Messages are scalars; use [`map_message_to_scalar`] for octet strings.

pub mod ciphersuite;
mod keys;
mod proof;
mod signature;

use ff::Field;
use thiserror::Error;

pub use blstrs::{G1Projective, G2Projective, Scalar};
pub use ciphersuite::{hash_to_scalar, map_message_to_scalar};
pub use keys::{keygen, keygen_with, PublicKey, SecretKey};
pub use proof::{proof_gen, proof_gen_with_scalars, proof_verify, proof_verify_detailed, Proof};
pub use signature::{sign, verify, verify_detailed, Signature};

/// Upper bound on messages per signature; generators are precomputed up to it.
pub const MAX_MESSAGES: usize = 64;
pub const MIN_SEED_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BbsError {
    #[error("key seed must be at least {MIN_SEED_LEN} bytes, got {0}")]
    SeedTooShort(usize),
    #[error("{count} messages exceed the maximum of {MAX_MESSAGES}")]
    TooManyMessages { count: usize },
    #[error("signature does not verify over the given messages")]
    InvalidSignature,
    #[error("disclosed index {index} out of range for {count} messages")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("invalid key")]
    InvalidKey,
    #[error("malformed {0} encoding")]
    Malformed(&'static str),
}

/// Why a signature or proof was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyFailure {
    TooManyMessages,
    IndexOutOfRange,
    UnsortedIndexes,
    InvalidKey,
    DegenerateProof,
    ChallengeMismatch,
    PairingCheckFailed,
}

impl VerifyFailure {
    pub fn code(self) -> &'static str {
        match self {
            VerifyFailure::TooManyMessages => "too_many_messages",
            VerifyFailure::IndexOutOfRange => "index_out_of_range",
            VerifyFailure::UnsortedIndexes => "unsorted_indexes",
            VerifyFailure::InvalidKey => "invalid_key",
            VerifyFailure::DegenerateProof => "degenerate_proof",
            VerifyFailure::ChallengeMismatch => "challenge_mismatch",
            VerifyFailure::PairingCheckFailed => "pairing_check_failed",
        }
    }
}

/// Domain scalar binding the public key, generator set and header.
pub(crate) fn calculate_domain(pk: &PublicKey, gens: &[G1Projective], header: &[u8]) -> Scalar {
    use ciphersuite::{generator_bytes, h2s_dst, API_ID};
    let l = gens.len() - 1;
    let mut input = pk.to_bytes().to_vec();
    input.extend_from_slice(&(l as u64).to_be_bytes());
    for g in &generator_bytes()[..gens.len()] {
        input.extend_from_slice(g);
    }
    input.extend_from_slice(API_ID);
    input.extend_from_slice(&(header.len() as u64).to_be_bytes());
    input.extend_from_slice(header);
    hash_to_scalar(&input, &h2s_dst())
}

/// `B = P1 + Q1·domain + Σ H_i·m_i`.
pub(crate) fn compute_b(gens: &[G1Projective], domain: &Scalar, messages: &[Scalar]) -> G1Projective {
    let mut points = vec![ciphersuite::p1(), gens[0]];
    points.extend_from_slice(&gens[1..=messages.len()]);
    let mut scalars = vec![Scalar::ONE, *domain];
    scalars.extend_from_slice(messages);
    G1Projective::multi_exp(&points, &scalars)
}
