//! BLS12-381 / SHA-256 ciphersuite: hashing to scalars, generator derivation
//! and the fixed octet encodings.

use std::sync::OnceLock;

use blstrs::{G1Affine, G1Projective, G2Affine, G2Projective, Scalar};
use ff::Field;
use group::Curve;
use sha2::{Digest, Sha256};

use super::MAX_MESSAGES;

pub const CIPHERSUITE_ID: &[u8] = b"BBS_BLS12381G1_XMD:SHA-256_SSWU_RO_";
pub const API_ID: &[u8] = b"BBS_BLS12381G1_XMD:SHA-256_SSWU_RO_H2G_HM2S_";

pub const POINT_G1_LEN: usize = 48;
pub const POINT_G2_LEN: usize = 96;
pub const SCALAR_LEN: usize = 32;
/// Bytes drawn per scalar when hashing, so the reduction mod r is unbiased.
const EXPAND_LEN: usize = 48;

const P1_HEX: &str = "a8ce256102840821a3e94ea9025e4662b205762f9776b3a766c872b948f1fd225e7c59698588e70d11406d161b4e28c9";

pub(crate) fn dst(suffix: &[u8]) -> Vec<u8> {
    [API_ID, suffix].concat()
}

pub fn h2s_dst() -> Vec<u8> {
    dst(b"H2S_")
}

pub fn map_msg_dst() -> Vec<u8> {
    dst(b"MAP_MSG_TO_SCALAR_AS_HASH_")
}

pub fn keygen_dst() -> Vec<u8> {
    dst(b"KEYGEN_DST_")
}

pub fn mock_scalars_dst() -> Vec<u8> {
    dst(b"MOCK_RANDOM_SCALARS_DST_")
}

/// expand_message_xmd with SHA-256 (RFC 9380, section 5.3.1).
pub fn expand_message_xmd(msg: &[u8], dst: &[u8], len: usize) -> Vec<u8> {
    const B_LEN: usize = 32;
    const R_LEN: usize = 64;
    assert!(dst.len() <= 255, "dst longer than 255 bytes");
    let ell = len.div_ceil(B_LEN);
    assert!(ell <= 255 && len <= 65_535, "requested expansion too long");
    let dst_prime = [dst, &[dst.len() as u8]].concat();

    let b0 = Sha256::new()
        .chain_update([0u8; R_LEN])
        .chain_update(msg)
        .chain_update((len as u16).to_be_bytes())
        .chain_update([0u8])
        .chain_update(&dst_prime)
        .finalize();
    let mut bi = Sha256::new()
        .chain_update(b0)
        .chain_update([1u8])
        .chain_update(&dst_prime)
        .finalize();
    let mut out = bi.to_vec();
    for i in 2..=ell {
        let mixed: Vec<u8> = b0.iter().zip(bi.iter()).map(|(a, b)| a ^ b).collect();
        bi = Sha256::new()
            .chain_update(mixed)
            .chain_update([i as u8])
            .chain_update(&dst_prime)
            .finalize();
        out.extend_from_slice(&bi);
    }
    out.truncate(len);
    out
}

/// Big-endian bytes (at most 64) reduced modulo the group order.
pub(crate) fn os2ip_mod_r(be: &[u8]) -> Scalar {
    assert!(be.len() <= 64);
    let radix = Scalar::from(1u64 << 32);
    be.chunks(4).fold(Scalar::ZERO, |acc, chunk| {
        let word = chunk.iter().fold(0u64, |w, &b| (w << 8) | u64::from(b));
        let shift = Scalar::from(1u64 << (8 * chunk.len()));
        acc * if chunk.len() == 4 { radix } else { shift } + Scalar::from(word)
    })
}

pub fn hash_to_scalar(msg: &[u8], dst: &[u8]) -> Scalar {
    os2ip_mod_r(&expand_message_xmd(msg, dst, EXPAND_LEN))
}

/// Maps an arbitrary octet string to a message scalar.
pub fn map_message_to_scalar(msg: &[u8]) -> Scalar {
    hash_to_scalar(msg, &map_msg_dst())
}

pub fn scalar_to_bytes(s: &Scalar) -> [u8; SCALAR_LEN] {
    s.to_bytes_be()
}

/// Parses a canonical (fully reduced) big-endian scalar.
pub fn scalar_from_bytes(be: &[u8]) -> Option<Scalar> {
    let be: [u8; SCALAR_LEN] = be.try_into().ok()?;
    Option::from(Scalar::from_bytes_be(&be))
}

pub fn g1_to_bytes(p: &G1Projective) -> [u8; POINT_G1_LEN] {
    p.to_affine().to_compressed()
}

/// Parses a compressed G1 point in the prime-order subgroup.
pub fn g1_from_bytes(bytes: &[u8]) -> Option<G1Projective> {
    let raw: [u8; POINT_G1_LEN] = bytes.try_into().ok()?;
    Option::<G1Affine>::from(G1Affine::from_compressed(&raw)).map(G1Projective::from)
}

pub fn g2_to_bytes(p: &G2Projective) -> [u8; POINT_G2_LEN] {
    p.to_affine().to_compressed()
}

pub fn g2_from_bytes(bytes: &[u8]) -> Option<G2Projective> {
    let raw: [u8; POINT_G2_LEN] = bytes.try_into().ok()?;
    Option::<G2Affine>::from(G2Affine::from_compressed(&raw)).map(G2Projective::from)
}

/// Fixed base point of G1 used in `B`.
pub fn p1() -> G1Projective {
    static P1: OnceLock<G1Projective> = OnceLock::new();
    *P1.get_or_init(|| {
        let bytes: Vec<u8> = (0..P1_HEX.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&P1_HEX[i..i + 2], 16).expect("hex literal"))
            .collect();
        g1_from_bytes(&bytes).expect("P1 constant is a valid point")
    })
}

/// Derives `count` generators from the ciphersuite's seed by repeated
/// expansion and hash-to-curve.
pub fn create_generators(count: usize) -> Vec<G1Projective> {
    let seed_dst = dst(b"SIG_GENERATOR_SEED_");
    let gen_dst = dst(b"SIG_GENERATOR_DST_");
    let seed = dst(b"MESSAGE_GENERATOR_SEED");
    let mut v = expand_message_xmd(&seed, &seed_dst, EXPAND_LEN);
    (1..=count as u64)
        .map(|i| {
            v = expand_message_xmd(&[&v[..], &i.to_be_bytes()].concat(), &seed_dst, EXPAND_LEN);
            G1Projective::hash_to_curve(&v, &gen_dst, &[])
        })
        .collect()
}

/// `Q1` followed by `H_1 .. H_MAX`, computed once.
pub(crate) fn generators() -> &'static [G1Projective] {
    static GENS: OnceLock<Vec<G1Projective>> = OnceLock::new();
    GENS.get_or_init(|| create_generators(MAX_MESSAGES + 1))
}

/// Compressed encodings of [`generators`], as hashed into the domain.
pub(crate) fn generator_bytes() -> &'static [[u8; POINT_G1_LEN]] {
    static BYTES: OnceLock<Vec<[u8; POINT_G1_LEN]>> = OnceLock::new();
    BYTES.get_or_init(|| generators().iter().map(g1_to_bytes).collect())
}

/// Deterministic stand-in for random scalars, reproducing published test
/// vectors. Never use outside tests.
pub fn mocked_scalars(seed: &[u8], dst: &[u8], count: usize) -> Vec<Scalar> {
    expand_message_xmd(seed, dst, count * EXPAND_LEN)
        .chunks(EXPAND_LEN)
        .map(os2ip_mod_r)
        .collect()
}
