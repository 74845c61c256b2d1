use std::fmt;

use blstrs::{G2Projective, Scalar};
use ff::Field;
use group::Group;

use super::ciphersuite::{self, hash_to_scalar, scalar_from_bytes, scalar_to_bytes};
use super::{BbsError, MIN_SEED_LEN};

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(pub(crate) Scalar);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl Drop for SecretKey {
    fn drop(&mut self) {
        // SAFETY: `self.0` is a valid, aligned Scalar owned by `self`.
        unsafe { std::ptr::write_volatile(&mut self.0, Scalar::ZERO) };
    }
}

impl SecretKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        scalar_to_bytes(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BbsError> {
        match scalar_from_bytes(bytes) {
            Some(s) if s != Scalar::ZERO => Ok(Self(s)),
            _ => Err(BbsError::InvalidKey),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(G2Projective::generator() * self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicKey(pub(crate) G2Projective);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", crate::encoding::b64url(&self.to_bytes()))
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; 96] {
        ciphersuite::g2_to_bytes(&self.0)
    }

    /// Rejects anything that is not a non-identity point of the prime-order subgroup.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BbsError> {
        match ciphersuite::g2_from_bytes(bytes) {
            Some(p) if !bool::from(p.is_identity()) => Ok(Self(p)),
            _ => Err(BbsError::InvalidKey),
        }
    }
}

/// Derives a key pair from `key_material` (at least 32 bytes), optional
/// `key_info`, under the given domain separation tag.
pub fn keygen_with(key_material: &[u8], key_info: &[u8], key_dst: &[u8]) -> Result<(SecretKey, PublicKey), BbsError> {
    if key_material.len() < MIN_SEED_LEN {
        return Err(BbsError::SeedTooShort(key_material.len()));
    }
    let info_len = u16::try_from(key_info.len()).map_err(|_| BbsError::InvalidKey)?;
    let mut input = key_material.to_vec();
    input.extend_from_slice(&info_len.to_be_bytes());
    input.extend_from_slice(key_info);
    let sk = hash_to_scalar(&input, key_dst);
    if sk == Scalar::ZERO {
        return Err(BbsError::InvalidKey);
    }
    let sk = SecretKey(sk);
    let pk = sk.public_key();
    Ok((sk, pk))
}

pub fn keygen(seed: &[u8]) -> Result<(SecretKey, PublicKey), BbsError> {
    keygen_with(seed, b"", &ciphersuite::keygen_dst())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keygen_is_deterministic_and_checks_seed() {
        let seed = [7u8; 32];
        let (sk1, pk1) = keygen(&seed).unwrap();
        let (sk2, pk2) = keygen(&seed).unwrap();
        assert_eq!(sk1, sk2);
        assert_eq!(pk1, pk2);
        assert_eq!(keygen(&[7u8; 31]).unwrap_err(), BbsError::SeedTooShort(31));
    }

    #[test]
    fn public_key_roundtrip_and_rejections() {
        let (sk, pk) = keygen(&[1u8; 32]).unwrap();
        assert_eq!(PublicKey::from_bytes(&pk.to_bytes()).unwrap(), pk);
        assert_eq!(SecretKey::from_bytes(&sk.to_bytes()).unwrap(), sk);
        let identity = ciphersuite::g2_to_bytes(&G2Projective::identity());
        assert_eq!(PublicKey::from_bytes(&identity), Err(BbsError::InvalidKey));
        assert_eq!(PublicKey::from_bytes(&[0u8; 95]), Err(BbsError::InvalidKey));
        assert_eq!(SecretKey::from_bytes(&[0u8; 32]), Err(BbsError::InvalidKey));
    }
}
