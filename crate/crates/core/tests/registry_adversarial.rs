use std::collections::BTreeSet;
use std::sync::Arc;

use permadid::credentials::{is_revoked, RevocationList, REVOCATION_TAG};
use permadid::did::{create_document, DidRegistry};
use permadid::encoding;
use permadid::keys::{self, SigningKey};
use permadid::names::{encode_record, NameRegistry, NAME_TAG};
use permadid::weave::{Tag, TxId, WeaveStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

fn target(weave: &WeaveStore, key: &SigningKey, label: &str) -> TxId {
    weave.submit(key, Vec::new(), label.as_bytes().to_vec()).unwrap()
}

/// A record claiming `owner` but carrying garbage in place of the signature.
fn bad_signature_record(name: &str, target: &TxId, owner: &SigningKey, seq: u64, rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut sig = [0u8; 64];
    rng.fill(&mut sig[..]);
    serde_json::to_vec(&json!({
        "name": name,
        "target": target,
        "owner": encoding::b64url(owner.verifying_key().as_bytes()),
        "seq": seq,
        "sig": encoding::b64url(&sig),
    }))
    .unwrap()
}

#[test]
fn forged_record_at_higher_sequence_is_ignored() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let weave = Arc::new(WeaveStore::default());
    let names = NameRegistry::new(weave.clone());
    let alice = keys::generate(&mut rng);
    let mallory = keys::generate(&mut rng);
    let good = target(&weave, &alice, "alice doc");
    let evil = target(&weave, &mallory, "evil doc");
    names.register("alice", &good, &alice).unwrap();
    weave.mine_block().unwrap();

    let forged = bad_signature_record("alice", &evil, &alice, 99, &mut rng);
    weave.submit(&mallory, vec![Tag::new(NAME_TAG, "alice")], forged).unwrap();
    let foreign = encode_record("alice", &evil, 100, &mallory);
    weave.submit(&mallory, vec![Tag::new(NAME_TAG, "alice")], foreign).unwrap();
    weave.mine_block().unwrap();

    let (resolved, record) = names.resolve("alice").unwrap();
    assert_eq!(resolved, good);
    // Signature-check oracle on the winning record, straight from the weave.
    let tx = weave.get(&record.record_tx).unwrap();
    let body: serde_json::Value = serde_json::from_slice(&tx.data).unwrap();
    assert_eq!(body["owner"], encoding::b64url(alice.verifying_key().as_bytes()));
    assert_eq!(names.update("alice", &evil, &mallory).unwrap_err().to_string(), "caller does not own name \"alice\"");
}

#[derive(Clone, Debug)]
enum Op {
    Update,
    BadSignature(u64),
    ForeignKey(u64),
    Mine,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => Just(Op::Update),
        2 => (0u64..200).prop_map(Op::BadSignature),
        2 => (0u64..200).prop_map(Op::ForeignKey),
        1 => Just(Op::Mine),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn forgeries_never_win(seed in any::<u64>(), ops in proptest::collection::vec(op(), 1..24)) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let weave = Arc::new(WeaveStore::default());
        let names = NameRegistry::new(weave.clone());
        let owner = keys::generate(&mut rng);
        let mallory = keys::generate(&mut rng);
        let first = target(&weave, &owner, "v0");
        names.register("alice", &first, &owner).unwrap();
        weave.mine_block().unwrap();

        // Oracle: the owner's sealed updates, in order; the newest must win.
        let mut honest_sealed = vec![first];
        let mut honest_pending = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            match op {
                Op::Update => {
                    let t = target(&weave, &owner, &format!("v{}", i + 1));
                    names.update("alice", &t, &owner).unwrap();
                    honest_pending.push(t);
                }
                Op::BadSignature(seq) => {
                    let t = target(&weave, &mallory, &format!("forged {i}"));
                    let data = bad_signature_record("alice", &t, &owner, *seq, &mut rng);
                    weave.submit(&mallory, vec![Tag::new(NAME_TAG, "alice")], data).unwrap();
                }
                Op::ForeignKey(seq) => {
                    let t = target(&weave, &mallory, &format!("foreign {i}"));
                    let data = encode_record("alice", &t, *seq, &mallory);
                    weave.submit(&mallory, vec![Tag::new(NAME_TAG, "alice")], data).unwrap();
                }
                Op::Mine => {
                    // Nothing pending is fine here.
                    let _ = weave.mine_block();
                    honest_sealed.append(&mut honest_pending);
                }
            }
            let (resolved, record) = names.resolve("alice").unwrap();
            prop_assert_eq!(&resolved, honest_sealed.last().unwrap());
            prop_assert_eq!(record.owner_address, keys::address_of(&owner));
        }
    }
}

#[test]
fn attacker_version_of_did_document_is_ignored() {
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    let weave = Arc::new(WeaveStore::default());
    let dids = DidRegistry::new(weave.clone());
    let alice = keys::generate(&mut rng);
    let mallory = keys::generate(&mut rng);
    let doc = create_document(&[alice.verifying_key()], &[], Vec::new(), None).unwrap();
    let honest_tx = dids.publish(&doc, &alice).unwrap();
    weave.mine_block().unwrap();

    let mut forged = doc.clone();
    forged.version_sequence = 2;
    forged.authentication.clear();
    forged.verification_method[0] = permadid::did::VerificationMethod::ed25519(&doc.id, "key-1", &mallory.verifying_key());
    forged.authentication.push(forged.verification_method[0].id.clone());
    assert!(dids.publish(&forged, &mallory).is_err());
    weave.submit(&mallory, forged.publication_tags(), forged.to_json()).unwrap();
    weave.mine_block().unwrap();

    let resolved = dids.resolve_did(&doc.id).unwrap();
    assert_eq!(resolved.tx, honest_tx);
    // Ownership oracle: the winning transaction was signed by the subject's key.
    assert_eq!(weave.get(&resolved.tx).unwrap().owner, keys::address_of(&alice));
    assert_eq!(resolved.document.version_sequence, 0);
}

#[test]
fn forged_revocation_list_is_ignored() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    let weave = Arc::new(WeaveStore::default());
    let dids = DidRegistry::new(weave.clone());
    let issuer = keys::generate(&mut rng);
    let mallory = keys::generate(&mut rng);
    let doc = create_document(&[issuer.verifying_key()], &[], Vec::new(), None).unwrap();
    dids.publish(&doc, &issuer).unwrap();
    weave.mine_block().unwrap();

    let credential = "urn:permadid:some-credential";
    let revoked: BTreeSet<String> = [credential.to_owned()].into();
    let forged = RevocationList::signed(&doc.id, revoked.clone(), 7, &mallory);
    assert!(forged.signature_valid());
    weave
        .submit(&mallory, vec![Tag::new(REVOCATION_TAG, doc.id.to_string())], encoding::canonical_json(&forged))
        .unwrap();
    weave.mine_block().unwrap();
    assert!(!is_revoked(&dids, &doc.id, credential));

    permadid::credentials::revoke(&dids, &doc.id, &issuer, credential).unwrap();
    weave.mine_block().unwrap();
    // Set-membership oracle over the authoritative list.
    let (_, list) = permadid::credentials::current_list(&dids, &doc.id).unwrap();
    assert_eq!(list.revoked, revoked);
    assert!(is_revoked(&dids, &doc.id, credential));
}
