use blstrs::{G1Projective, Scalar};
use ff::Field;
use group::Group;
use rand::{CryptoRng, RngCore};

use super::ciphersuite::{
    g1_from_bytes, g1_to_bytes, generators, p1, h2s_dst, hash_to_scalar, os2ip_mod_r, scalar_from_bytes, scalar_to_bytes,
    POINT_G1_LEN, SCALAR_LEN,
};
use super::signature::pairing_product_is_identity;
use super::{calculate_domain, compute_b, verify, BbsError, PublicKey, Signature, VerifyFailure, MAX_MESSAGES};

const FIXED_LEN: usize = 3 * POINT_G1_LEN + 4 * SCALAR_LEN;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub(crate) abar: G1Projective,
    pub(crate) bbar: G1Projective,
    pub(crate) d: G1Projective,
    pub(crate) e_hat: Scalar,
    pub(crate) r1_hat: Scalar,
    pub(crate) r3_hat: Scalar,
    pub(crate) m_hat: Vec<Scalar>,
    pub(crate) challenge: Scalar,
}

impl Proof {
    /// Number of messages kept hidden by this proof.
    pub fn undisclosed_count(&self) -> usize {
        self.m_hat.len()
    }

    pub fn encoded_len(undisclosed: usize) -> usize {
        FIXED_LEN + SCALAR_LEN * undisclosed
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.m_hat.len()));
        for p in [&self.abar, &self.bbar, &self.d] {
            out.extend_from_slice(&g1_to_bytes(p));
        }
        for s in [&self.e_hat, &self.r1_hat, &self.r3_hat].into_iter().chain(&self.m_hat) {
            out.extend_from_slice(&scalar_to_bytes(s));
        }
        out.extend_from_slice(&scalar_to_bytes(&self.challenge));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BbsError> {
        let bad = || BbsError::Malformed("proof");
        if bytes.len() < FIXED_LEN || !(bytes.len() - FIXED_LEN).is_multiple_of(SCALAR_LEN) {
            return Err(bad());
        }
        let point = |i: usize| {
            g1_from_bytes(&bytes[i * POINT_G1_LEN..(i + 1) * POINT_G1_LEN])
                .filter(|p| !bool::from(p.is_identity()))
                .ok_or_else(bad)
        };
        let (abar, bbar, d) = (point(0)?, point(1)?, point(2)?);
        let scalars = bytes[3 * POINT_G1_LEN..]
            .chunks(SCALAR_LEN)
            .map(|c| scalar_from_bytes(c).ok_or_else(bad))
            .collect::<Result<Vec<_>, _>>()?;
        let (challenge, rest) = scalars.split_last().expect("at least four scalars");
        if rest.len() - 3 > MAX_MESSAGES {
            return Err(bad());
        }
        Ok(Self {
            abar,
            bbar,
            d,
            e_hat: rest[0],
            r1_hat: rest[1],
            r3_hat: rest[2],
            m_hat: rest[3..].to_vec(),
            challenge: *challenge,
        })
    }
}

fn challenge(
    disclosed: &[(usize, Scalar)],
    points: [&G1Projective; 5],
    domain: &Scalar,
    ph: &[u8],
) -> Scalar {
    let mut input = (disclosed.len() as u64).to_be_bytes().to_vec();
    for (i, m) in disclosed {
        input.extend_from_slice(&(*i as u64).to_be_bytes());
        input.extend_from_slice(&scalar_to_bytes(m));
    }
    for p in points {
        input.extend_from_slice(&g1_to_bytes(p));
    }
    input.extend_from_slice(&scalar_to_bytes(domain));
    input.extend_from_slice(&(ph.len() as u64).to_be_bytes());
    input.extend_from_slice(ph);
    hash_to_scalar(&input, &h2s_dst())
}

fn normalize_indexes(disclosed: &[usize], count: usize) -> Result<Vec<usize>, BbsError> {
    let mut idx = disclosed.to_vec();
    idx.sort_unstable();
    idx.dedup();
    match idx.last() {
        Some(&index) if index >= count => Err(BbsError::IndexOutOfRange { index, count }),
        _ => Ok(idx),
    }
}

/// Proof generation with caller-chosen blinding scalars
/// `(r1, r2, e~, r1~, r3~, m~_1 .. m~_U)`. Exposed for reproducing fixed
/// test vectors; real callers use [`proof_gen`].
pub fn proof_gen_with_scalars(
    pk: &PublicKey,
    sig: &Signature,
    header: &[u8],
    ph: &[u8],
    messages: &[Scalar],
    disclosed: &[usize],
    random: &[Scalar],
) -> Result<Proof, BbsError> {
    if messages.len() > MAX_MESSAGES {
        return Err(BbsError::TooManyMessages { count: messages.len() });
    }
    let disclosed = normalize_indexes(disclosed, messages.len())?;
    if !verify(pk, header, messages, sig) {
        return Err(BbsError::InvalidSignature);
    }
    let undisclosed: Vec<usize> = (0..messages.len()).filter(|i| disclosed.binary_search(i).is_err()).collect();
    assert_eq!(random.len(), 5 + undisclosed.len(), "wrong number of blinding scalars");
    let (r1, r2, e_t, r1_t, r3_t) = (random[0], random[1], random[2], random[3], random[4]);
    let m_t = &random[5..];

    let gens = &generators()[..=messages.len()];
    let domain = calculate_domain(pk, gens, header);
    let b = compute_b(gens, &domain, messages);
    let d = b * r2;
    let abar = sig.a * (r1 * r2);
    let bbar = G1Projective::multi_exp(&[d, abar], &[r1, -sig.e]);
    let t1 = G1Projective::multi_exp(&[abar, d], &[e_t, r1_t]);
    let mut points = vec![d];
    points.extend(undisclosed.iter().map(|&j| gens[j + 1]));
    let mut scalars = vec![r3_t];
    scalars.extend_from_slice(m_t);
    let t2 = G1Projective::multi_exp(&points, &scalars);
    let pairs: Vec<(usize, Scalar)> = disclosed.iter().map(|&i| (i, messages[i])).collect();
    let c = challenge(&pairs, [&abar, &bbar, &d, &t1, &t2], &domain, ph);

    let r3 = Option::<Scalar>::from(r2.invert()).ok_or(BbsError::Malformed("blinding scalar"))?;
    Ok(Proof {
        abar,
        bbar,
        d,
        e_hat: e_t + sig.e * c,
        r1_hat: r1_t - r1 * c,
        r3_hat: r3_t - r3 * c,
        m_hat: undisclosed.iter().zip(m_t).map(|(&j, mt)| mt + messages[j] * c).collect(),
        challenge: c,
    })
}

/// Randomized selective-disclosure proof over `messages` revealing the
/// messages at `disclosed` (any order, duplicates ignored).
pub fn proof_gen<R: RngCore + CryptoRng>(
    pk: &PublicKey,
    sig: &Signature,
    header: &[u8],
    ph: &[u8],
    messages: &[Scalar],
    disclosed: &[usize],
    rng: &mut R,
) -> Result<Proof, BbsError> {
    let hidden = messages.len().saturating_sub(normalize_indexes(disclosed, messages.len())?.len());
    let random: Vec<Scalar> = (0..5 + hidden)
        .map(|_| {
            let mut buf = [0u8; 48];
            rng.fill_bytes(&mut buf);
            os2ip_mod_r(&buf)
        })
        .collect();
    proof_gen_with_scalars(pk, sig, header, ph, messages, disclosed, &random)
}

/// Checks a proof against the disclosed `(index, message)` pairs, which must
/// be strictly increasing by index.
pub fn proof_verify_detailed(
    pk: &PublicKey,
    proof: &Proof,
    header: &[u8],
    ph: &[u8],
    disclosed: &[(usize, Scalar)],
) -> Result<(), VerifyFailure> {
    let total = disclosed.len() + proof.m_hat.len();
    if total > MAX_MESSAGES {
        return Err(VerifyFailure::TooManyMessages);
    }
    if disclosed.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(VerifyFailure::UnsortedIndexes);
    }
    if disclosed.last().is_some_and(|(i, _)| *i >= total) {
        return Err(VerifyFailure::IndexOutOfRange);
    }
    if bool::from(pk.0.is_identity()) {
        return Err(VerifyFailure::InvalidKey);
    }
    if bool::from(proof.abar.is_identity()) || bool::from(proof.d.is_identity()) {
        return Err(VerifyFailure::DegenerateProof);
    }
    let gens = &generators()[..=total];
    let domain = calculate_domain(pk, gens, header);
    let c = proof.challenge;

    let t1 = G1Projective::multi_exp(&[proof.bbar, proof.abar, proof.d], &[c, proof.e_hat, proof.r1_hat]);
    // T2 = Bv·c + D·r3^ + Σ H_j·m^_j, where Bv = P1 + Q1·domain + Σ H_i·m_i
    // over the disclosed messages.
    let mut points = vec![p1(), gens[0], proof.d];
    let mut scalars = vec![c, domain * c, proof.r3_hat];
    let mut di = disclosed.iter().peekable();
    let mut hats = proof.m_hat.iter();
    for j in 0..total {
        points.push(gens[j + 1]);
        match di.peek() {
            Some((i, m)) if *i == j => {
                scalars.push(m * c);
                di.next();
            }
            _ => scalars.push(*hats.next().expect("counts agree")),
        }
    }
    let t2 = G1Projective::multi_exp(&points, &scalars);
    if challenge(disclosed, [&proof.abar, &proof.bbar, &proof.d, &t1, &t2], &domain, ph) != c {
        return Err(VerifyFailure::ChallengeMismatch);
    }
    if pairing_product_is_identity(&proof.abar, &pk.0, &-proof.bbar) {
        Ok(())
    } else {
        Err(VerifyFailure::PairingCheckFailed)
    }
}

pub fn proof_verify(pk: &PublicKey, proof: &Proof, header: &[u8], ph: &[u8], disclosed: &[(usize, Scalar)]) -> bool {
    proof_verify_detailed(pk, proof, header, ph, disclosed).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbs::{keygen, map_message_to_scalar, sign};
    use rand::SeedableRng;

    fn setup(n: usize) -> (PublicKey, Signature, Vec<Scalar>) {
        let (sk, pk) = keygen(&[9u8; 32]).unwrap();
        let m: Vec<Scalar> = (0..n).map(|i| map_message_to_scalar(&[i as u8])).collect();
        let sig = sign(&sk, &pk, b"h", &m).unwrap();
        (pk, sig, m)
    }

    #[test]
    fn proof_roundtrip_and_length() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let (pk, sig, m) = setup(4);
        let proof = proof_gen(&pk, &sig, b"h", b"ph", &m, &[2, 0], &mut rng).unwrap();
        let bytes = proof.to_bytes();
        assert_eq!(bytes.len(), Proof::encoded_len(2));
        let parsed = Proof::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, proof);
        assert!(proof_verify(&pk, &parsed, b"h", b"ph", &[(0, m[0]), (2, m[2])]));
        assert_eq!(
            proof_verify_detailed(&pk, &parsed, b"h", b"other", &[(0, m[0]), (2, m[2])]),
            Err(VerifyFailure::ChallengeMismatch)
        );
        assert_eq!(
            proof_verify_detailed(&pk, &parsed, b"h", b"ph", &[(2, m[2]), (0, m[0])]),
            Err(VerifyFailure::UnsortedIndexes)
        );
    }

    #[test]
    fn proofs_are_randomized() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2);
        let (pk, sig, m) = setup(3);
        let a = proof_gen(&pk, &sig, b"h", b"", &m, &[1], &mut rng).unwrap();
        let b = proof_gen(&pk, &sig, b"h", b"", &m, &[1], &mut rng).unwrap();
        assert_ne!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let (pk, sig, mut m) = setup(2);
        assert_eq!(
            proof_gen(&pk, &sig, b"h", b"", &m, &[2], &mut rng),
            Err(BbsError::IndexOutOfRange { index: 2, count: 2 })
        );
        m[0] = Scalar::ONE;
        assert_eq!(proof_gen(&pk, &sig, b"h", b"", &m, &[0], &mut rng), Err(BbsError::InvalidSignature));
        assert!(Proof::from_bytes(&[0u8; 10]).is_err());
    }
}
