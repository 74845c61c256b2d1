use std::sync::OnceLock;

use blstrs::{Bls12, G1Projective, G2Affine, G2Prepared, G2Projective, Gt, Scalar};
use ff::Field;
use group::prime::PrimeCurveAffine;
use group::{Curve, Group};
use pairing::{MillerLoopResult, MultiMillerLoop};

use super::ciphersuite::{self, generators, h2s_dst, hash_to_scalar, scalar_from_bytes, scalar_to_bytes};
use super::{calculate_domain, compute_b, BbsError, PublicKey, SecretKey, VerifyFailure, MAX_MESSAGES};

pub const SIGNATURE_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub(crate) a: G1Projective,
    pub(crate) e: Scalar,
}

impl Signature {
    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[..48].copy_from_slice(&ciphersuite::g1_to_bytes(&self.a));
        out[48..].copy_from_slice(&scalar_to_bytes(&self.e));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BbsError> {
        if bytes.len() != SIGNATURE_LEN {
            return Err(BbsError::Malformed("signature"));
        }
        let a = ciphersuite::g1_from_bytes(&bytes[..48])
            .filter(|a| !bool::from(a.is_identity()))
            .ok_or(BbsError::Malformed("signature"))?;
        let e = scalar_from_bytes(&bytes[48..]).ok_or(BbsError::Malformed("signature"))?;
        Ok(Self { a, e })
    }
}

fn prepared_p2() -> &'static G2Prepared {
    static P2: OnceLock<G2Prepared> = OnceLock::new();
    P2.get_or_init(|| G2Prepared::from(G2Affine::generator()))
}

/// `e(p1, q1)·e(p2, P2) == 1`, with `P2` the G2 base point.
pub(crate) fn pairing_product_is_identity(p1: &G1Projective, q1: &G2Projective, p2: &G1Projective) -> bool {
    let (p1, p2) = (p1.to_affine(), p2.to_affine());
    let q1 = G2Prepared::from(q1.to_affine());
    Bls12::multi_miller_loop(&[(&p1, &q1), (&p2, prepared_p2())]).final_exponentiation() == Gt::identity()
}

pub fn sign(sk: &SecretKey, pk: &PublicKey, header: &[u8], messages: &[Scalar]) -> Result<Signature, BbsError> {
    if messages.len() > MAX_MESSAGES {
        return Err(BbsError::TooManyMessages { count: messages.len() });
    }
    let gens = &generators()[..=messages.len()];
    let domain = calculate_domain(pk, gens, header);
    let mut e_input = scalar_to_bytes(&sk.0).to_vec();
    for m in messages {
        e_input.extend_from_slice(&scalar_to_bytes(m));
    }
    e_input.extend_from_slice(&scalar_to_bytes(&domain));
    let e = hash_to_scalar(&e_input, &h2s_dst());
    let b = compute_b(gens, &domain, messages);
    let inv = Option::<Scalar>::from((sk.0 + e).invert()).ok_or(BbsError::InvalidKey)?;
    Ok(Signature { a: b * inv, e })
}

pub fn verify_detailed(pk: &PublicKey, header: &[u8], messages: &[Scalar], sig: &Signature) -> Result<(), VerifyFailure> {
    if messages.len() > MAX_MESSAGES {
        return Err(VerifyFailure::TooManyMessages);
    }
    if bool::from(pk.0.is_identity()) {
        return Err(VerifyFailure::InvalidKey);
    }
    let gens = &generators()[..=messages.len()];
    let domain = calculate_domain(pk, gens, header);
    // e(A, W + P2·e) = e(B, P2) rearranged as e(A, W)·e(A·e - B, P2) = 1,
    // which trades a G2 multiplication for a G1 one.
    let b = compute_b(gens, &domain, messages);
    let a_e_minus_b = G1Projective::multi_exp(&[sig.a, b], &[sig.e, -Scalar::ONE]);
    if pairing_product_is_identity(&sig.a, &pk.0, &a_e_minus_b) {
        Ok(())
    } else {
        Err(VerifyFailure::PairingCheckFailed)
    }
}

pub fn verify(pk: &PublicKey, header: &[u8], messages: &[Scalar], sig: &Signature) -> bool {
    verify_detailed(pk, header, messages, sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbs::{keygen, map_message_to_scalar};

    fn msgs(n: usize) -> Vec<Scalar> {
        (0..n).map(|i| map_message_to_scalar(format!("m{i}").as_bytes())).collect()
    }

    #[test]
    fn sign_verify_roundtrip_and_order_matters() {
        let (sk, pk) = keygen(&[3u8; 32]).unwrap();
        let m = msgs(3);
        let sig = sign(&sk, &pk, b"hdr", &m).unwrap();
        assert!(verify(&pk, b"hdr", &m, &sig));
        assert_eq!(Signature::from_bytes(&sig.to_bytes()).unwrap(), sig);
        let swapped = vec![m[1], m[0], m[2]];
        assert_eq!(verify_detailed(&pk, b"hdr", &swapped, &sig), Err(VerifyFailure::PairingCheckFailed));
        assert!(!verify(&pk, b"other", &m, &sig));
        let (_, other_pk) = keygen(&[4u8; 32]).unwrap();
        assert!(!verify(&other_pk, b"hdr", &m, &sig));
    }

    #[test]
    fn header_only_signature() {
        let (sk, pk) = keygen(&[3u8; 32]).unwrap();
        let sig = sign(&sk, &pk, b"only header", &[]).unwrap();
        assert!(verify(&pk, b"only header", &[], &sig));
    }

    #[test]
    fn too_many_messages() {
        let (sk, pk) = keygen(&[3u8; 32]).unwrap();
        let m = vec![Scalar::ONE; MAX_MESSAGES + 1];
        assert_eq!(sign(&sk, &pk, b"", &m), Err(BbsError::TooManyMessages { count: 65 }));
    }
}
