use std::collections::HashSet;

use permadid::encoding;
use permadid::keys;
use permadid::weave::{recall_index, Tag, Violation, WeaveConfig, WeaveStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

fn seeded_weave(rng: &mut ChaCha20Rng, blocks: usize, per_block: usize) -> WeaveStore {
    let weave = WeaveStore::default();
    let key = keys::generate(rng);
    for b in 0..blocks {
        for t in 0..per_block {
            let data = format!("block {b} tx {t} {}", rng.gen::<u64>()).into_bytes();
            weave.submit(&key, vec![Tag::new("App", "test")], data).unwrap();
        }
        weave.mine_block().unwrap();
    }
    weave
}

#[test]
fn recall_index_matches_independent_hash() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let weave = seeded_weave(&mut rng, 6, 1);
    let prev = weave.block(4).unwrap().block_id;
    // Oracle: SHA-256 of the raw id, big-endian, mod 5, via a 64-bit fold.
    let digest = Sha256::digest(prev.digest());
    let expected = digest.iter().fold(0u64, |acc, &b| (acc * 256 + u64::from(b)) % 5);
    assert_eq!(recall_index(&prev, 5), expected);
    assert!(expected < 5);
    let block5 = weave.block(5).unwrap();
    assert_eq!(block5.recall_id, Some(weave.block(expected).unwrap().block_id));
}

#[test]
fn tx_id_is_content_hash_and_stable() {
    let key = keys::SigningKey::from_bytes(&[42u8; 32]);
    let weave = WeaveStore::default();
    let id = weave.submit(&key, vec![Tag::new("k", "v")], b"payload".to_vec()).unwrap();
    let tx = weave.get(&id).unwrap();
    let expected = encoding::b64url(&Sha256::digest(tx.canonical_bytes()));
    assert_eq!(id.as_str(), expected);
    assert_eq!(id.as_str().len(), 43);

    let again = WeaveStore::default()
        .submit(&key, vec![Tag::new("k", "v")], b"payload".to_vec())
        .unwrap();
    assert_eq!(again, id);
}

#[test]
fn no_id_collisions_over_ten_thousand_submissions() {
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let weave = WeaveStore::default();
    let keys: Vec<_> = (0..8).map(|_| keys::generate(&mut rng)).collect();
    let mut ids = HashSet::new();
    for i in 0..10_000 {
        let mut data = vec![0u8; rng.gen_range(0..48)];
        rng.fill(&mut data[..]);
        data.extend_from_slice(&(i as u32).to_be_bytes());
        let id = weave.submit(&keys[i % keys.len()], Vec::new(), data).unwrap();
        assert!(encoding::is_id43(id.as_str()));
        assert!(ids.insert(id));
    }
    assert_eq!(ids.len(), 10_000);
}

#[test]
fn bundles_are_transparent() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let key = keys::generate(&mut rng);
    for size in [1usize, 2, 7, 50, 100] {
        let items: Vec<(Vec<Tag>, Vec<u8>)> = (0..size)
            .map(|i| (vec![Tag::new("Item", i.to_string())], format!("item {i} {}", rng.gen::<u32>()).into_bytes()))
            .collect();
        let bundled = WeaveStore::default();
        let (_, item_ids) = bundled.bundle_submit(&key, items.clone()).unwrap();
        bundled.mine_block().unwrap();

        let direct = WeaveStore::default();
        for ((tags, data), item_id) in items.into_iter().zip(&item_ids) {
            let direct_id = direct.submit(&key, tags.clone(), data.clone()).unwrap();
            assert_eq!(&direct_id, item_id);
            let got = bundled.get(item_id).unwrap();
            assert_eq!(got.data, data);
            assert_eq!(got.tags, tags);
            assert_eq!(got.owner, keys::address_of(&key));
            assert!(bundled.is_sealed(item_id));
        }
    }
}

#[test]
fn overwritten_recall_is_reported_at_its_height() {
    let mut rng = ChaCha20Rng::seed_from_u64(24);
    let weave = seeded_weave(&mut rng, 8, 2);
    let target = weave.block(6).unwrap();
    let prev = target.prev_id.clone().unwrap();
    let recall = target.recall_id.clone().unwrap();
    let wrong = (0..6)
        .map(|h| weave.block(h).unwrap().block_id)
        .find(|id| *id != recall)
        .unwrap();

    let mut bytes = weave.snapshot_bytes();
    let needle = [&[1u8][..], &prev.digest(), &[1u8], &recall.digest()].concat();
    let at = bytes.windows(needle.len()).position(|w| w == needle).expect("link fields present") + 34;
    bytes[at..at + 32].copy_from_slice(&wrong.digest());

    let report = permadid::weave::verify_snapshot(&bytes);
    assert!(!report.is_ok());
    assert!(report.violations.contains(&Violation::RecallMismatch { height: 6 }), "{:?}", report.violations);
    assert!(WeaveStore::from_snapshot(&bytes, WeaveConfig::default()).is_err());
}

#[test]
fn snapshot_roundtrip_preserves_digest() {
    let mut rng = ChaCha20Rng::seed_from_u64(25);
    let weave = seeded_weave(&mut rng, 5, 3);
    let bytes = weave.snapshot_bytes();
    let restored = WeaveStore::from_snapshot(&bytes, WeaveConfig::default()).unwrap();
    assert_eq!(restored.snapshot_digest(), weave.snapshot_digest());
    assert!(restored.verify_weave());
    assert_eq!(restored.stats(), weave.stats());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_single_byte_mutation_is_detected(seed in any::<u64>(), pos in any::<usize>(), flip in 1u8..=255) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed % 4);
        let weave = seeded_weave(&mut rng, 6, 2);
        let mut bytes = weave.snapshot_bytes();
        let i = pos % bytes.len();
        bytes[i] ^= flip;
        let restored = WeaveStore::from_snapshot(&bytes, WeaveConfig::default());
        prop_assert!(restored.is_err());
        prop_assert!(!permadid::weave::verify_snapshot(&bytes).is_ok());
    }

    #[test]
    fn query_returns_sealed_matches_in_seal_order(tags in proptest::collection::vec(0u8..3, 1..30)) {
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let key = keys::generate(&mut rng);
        let weave = WeaveStore::default();
        let mut expected = Vec::new();
        for (i, t) in tags.iter().enumerate() {
            let id = weave.submit(&key, vec![Tag::new("T", t.to_string())], i.to_be_bytes().to_vec()).unwrap();
            if *t == 1 {
                expected.push(id);
            }
            if i % 4 == 3 {
                weave.mine_block().unwrap();
            }
        }
        let pending_tail = tags.len() % 4;
        let sealed_count = expected.len() - tags[tags.len() - pending_tail..].iter().filter(|t| **t == 1).count();
        prop_assert_eq!(weave.query(&[Tag::new("T", "1")]), expected[..sealed_count].to_vec());
    }
}
