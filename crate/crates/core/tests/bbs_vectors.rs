//! Conformance against the published BLS12-381/SHA-256 BBS test vectors
//! (frozen copies under `fixtures/bbs`).

use std::path::PathBuf;

use permadid::bbs::{
    self, ciphersuite, keygen_with, map_message_to_scalar, proof_gen_with_scalars, proof_verify, Proof, PublicKey,
    Scalar, SecretKey, Signature,
};
use serde_json::Value;

fn fixture(rel: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bbs").join(rel);
    serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap()
}

fn hexv(v: &Value) -> Vec<u8> {
    hex::decode(v.as_str().unwrap()).unwrap()
}

fn scalars(v: &Value) -> Vec<Scalar> {
    v.as_array().unwrap().iter().map(|m| map_message_to_scalar(&hexv(m))).collect()
}

#[test]
fn keypair_vector() {
    let f = fixture("keypair.json");
    let (sk, pk) = keygen_with(&hexv(&f["keyMaterial"]), &hexv(&f["keyInfo"]), &hexv(&f["keyDst"])).unwrap();
    assert_eq!(hexv(&f["keyDst"]), ciphersuite::keygen_dst());
    assert_eq!(sk.to_bytes().to_vec(), hexv(&f["keyPair"]["secretKey"]));
    assert_eq!(pk.to_bytes().to_vec(), hexv(&f["keyPair"]["publicKey"]));
}

#[test]
fn hash_to_scalar_vectors() {
    let f = fixture("h2s.json");
    let s = bbs::hash_to_scalar(&hexv(&f["message"]), &hexv(&f["dst"]));
    assert_eq!(ciphersuite::scalar_to_bytes(&s).to_vec(), hexv(&f["scalar"]));

    let f = fixture("MapMessageToScalarAsHash.json");
    assert_eq!(hexv(&f["dst"]), ciphersuite::map_msg_dst());
    for case in f["cases"].as_array().unwrap() {
        let s = map_message_to_scalar(&hexv(&case["message"]));
        assert_eq!(ciphersuite::scalar_to_bytes(&s).to_vec(), hexv(&case["scalar"]));
    }
}

#[test]
fn generator_vectors() {
    let f = fixture("generators.json");
    assert_eq!(ciphersuite::g1_to_bytes(&ciphersuite::p1()).to_vec(), hexv(&f["P1"]));
    let hs = f["MsgGenerators"].as_array().unwrap();
    let gens = ciphersuite::create_generators(hs.len() + 1);
    assert_eq!(ciphersuite::g1_to_bytes(&gens[0]).to_vec(), hexv(&f["Q1"]));
    for (g, h) in gens[1..].iter().zip(hs) {
        assert_eq!(ciphersuite::g1_to_bytes(g).to_vec(), hexv(h));
    }
}

#[test]
fn mocked_scalar_vector() {
    let f = fixture("mockedRng.json");
    assert_eq!(hexv(&f["dst"]), ciphersuite::mock_scalars_dst());
    let got = ciphersuite::mocked_scalars(&hexv(&f["seed"]), &hexv(&f["dst"]), f["count"].as_u64().unwrap() as usize);
    let want: Vec<Vec<u8>> = f["mockedScalars"].as_array().unwrap().iter().map(hexv).collect();
    let got: Vec<Vec<u8>> = got.iter().map(|s| ciphersuite::scalar_to_bytes(s).to_vec()).collect();
    assert_eq!(got, want);
}

#[test]
fn signature_vectors() {
    for n in 1..=10 {
        let f = fixture(&format!("signature/signature{n:03}.json"));
        let pk = PublicKey::from_bytes(&hexv(&f["signerKeyPair"]["publicKey"])).unwrap();
        let sk = SecretKey::from_bytes(&hexv(&f["signerKeyPair"]["secretKey"])).unwrap();
        let header = hexv(&f["header"]);
        let messages = scalars(&f["messages"]);
        let expected_sig = hexv(&f["signature"]);
        let valid = f["result"]["valid"].as_bool().unwrap();

        let verdict = Signature::from_bytes(&expected_sig)
            .map(|sig| bbs::verify(&pk, &header, &messages, &sig))
            .unwrap_or(false);
        assert_eq!(verdict, valid, "{}", f["caseName"]);
        if valid {
            let sig = bbs::sign(&sk, &pk, &header, &messages).unwrap();
            assert_eq!(sig.to_bytes().to_vec(), expected_sig, "{}", f["caseName"]);
        }
    }
}

#[test]
fn proof_vectors() {
    let rng = fixture("mockedRng.json");
    let (seed, dst) = (hexv(&rng["seed"]), hexv(&rng["dst"]));
    for n in 1..=15 {
        let f = fixture(&format!("proof/proof{n:03}.json"));
        let pk = PublicKey::from_bytes(&hexv(&f["signerPublicKey"])).unwrap();
        let header = hexv(&f["header"]);
        let ph = hexv(&f["presentationHeader"]);
        let messages = scalars(&f["messages"]);
        let disclosed: Vec<usize> =
            f["disclosedIndexes"].as_array().unwrap().iter().map(|i| i.as_u64().unwrap() as usize).collect();
        let proof_bytes = hexv(&f["proof"]);
        let valid = f["result"]["valid"].as_bool().unwrap();

        let pairs: Vec<(usize, Scalar)> =
            disclosed.iter().filter(|&&i| i < messages.len()).map(|&i| (i, messages[i])).collect();
        let verdict = Proof::from_bytes(&proof_bytes)
            .map(|p| proof_verify(&pk, &p, &header, &ph, &pairs))
            .unwrap_or(false);
        assert_eq!(verdict, valid, "{}", f["caseName"]);

        if valid {
            let sig = Signature::from_bytes(&hexv(&f["signature"])).unwrap();
            let hidden = messages.len() - disclosed.len();
            let random = ciphersuite::mocked_scalars(&seed, &dst, 5 + hidden);
            let proof = proof_gen_with_scalars(&pk, &sig, &header, &ph, &messages, &disclosed, &random).unwrap();
            assert_eq!(proof.to_bytes(), proof_bytes, "{}", f["caseName"]);
        }
    }
}
