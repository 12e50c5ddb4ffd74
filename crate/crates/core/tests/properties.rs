//! Property tests for the algebraic invariants: the set-difference lemma,
//! secret-sharing round-trips, incremental-vs-batch similarity, and ledger
//! chain integrity.

use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recaudit::ledger::{commit, Chain, ChainStatus, EntryKind, TransactionEntry};
use recaudit::mpc::{
    beaver_multiply, deal_triple, decode_fixed, encode_fixed, reconstruct, share, FieldElement,
    FIELD_PRIME,
};
use recaudit::probing::lemma_check;
use recaudit::similarity::{build_similarity_from_records, SimilarityMap};
use recaudit::types::{ItemId, RatingRecord};

fn item_set(max_id: u8) -> impl Strategy<Value = BTreeSet<ItemId>> {
    vec(0..max_id, 0..20).prop_map(|ids| ids.into_iter().map(|i| format!("i{:02}", i)).collect())
}

proptest! {
    #[test]
    fn lemma_matches_brute_force_union(
        a in item_set(40),
        b in item_set(40),
        extra in 0usize..15,
    ) {
        let b: Vec<ItemId> = b.into_iter().collect();
        let s = b.len() + extra;
        let union: BTreeSet<&ItemId> = a.iter().chain(b.iter()).collect();
        prop_assert_eq!(lemma_check(&a, &b, s).unwrap(), union.len() > s);
    }

    #[test]
    fn lemma_never_fires_inside_a_small_true_cluster(
        r_true in item_set(40),
        mask_a in vec(any::<bool>(), 20),
        mask_b in vec(any::<bool>(), 20),
        slack in 0usize..10,
    ) {
        let r: Vec<ItemId> = r_true.into_iter().collect();
        let s = r.len() + slack;
        let a: BTreeSet<ItemId> = r
            .iter()
            .zip(&mask_a)
            .filter(|(_, keep)| **keep)
            .map(|(i, _)| i.clone())
            .collect();
        let b: Vec<ItemId> = r
            .iter()
            .zip(&mask_b)
            .filter(|(_, keep)| **keep)
            .map(|(i, _)| i.clone())
            .collect();
        prop_assert!(!lemma_check(&a, &b, s).unwrap());
    }

    #[test]
    fn share_reconstruct_roundtrip(value in 0u64..FIELD_PRIME, n in 2usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let secret = FieldElement::new(value);
        let shares = share(secret, n, &mut rng).unwrap();
        prop_assert_eq!(shares.shares.len(), n);
        prop_assert_eq!(reconstruct(&shares), secret);
    }

    #[test]
    fn beaver_product_is_exact(
        x in 0u64..FIELD_PRIME,
        y in 0u64..FIELD_PRIME,
        n in 2usize..6,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (FieldElement::new(x), FieldElement::new(y));
        let xs = share(x, n, &mut rng).unwrap();
        let ys = share(y, n, &mut rng).unwrap();
        let triple = deal_triple(n, &mut rng).unwrap();
        prop_assert_eq!(reconstruct(&beaver_multiply(&xs, &ys, &triple)), x.mul(y));
    }

    #[test]
    fn fixed_point_roundtrip_within_half_ulp(x in 0.0f64..=1.0) {
        let encoded = encode_fixed(x).unwrap();
        prop_assert!((decode_fixed(encoded) - x).abs() <= 0.5 / 65536.0);
    }

    #[test]
    fn incremental_similarity_equals_batch(
        raw in vec((0u8..15, 0u8..25, 1u32..=5), 1..80),
    ) {
        // Deduplicate (user, item) pairs: one rating per pair.
        let mut seen = BTreeSet::new();
        let records: Vec<RatingRecord> = raw
            .into_iter()
            .filter(|(u, i, _)| seen.insert((*u, *i)))
            .enumerate()
            .map(|(seq, (u, i, r))| RatingRecord {
                user: format!("u{:02}", u),
                item: format!("i{:02}", i),
                rating: f64::from(r) / 5.0,
                seq: seq as u64,
            })
            .collect();
        let batch = build_similarity_from_records(&records);
        let mut incremental = SimilarityMap::default();
        let mut histories: std::collections::BTreeMap<String, Vec<(String, f64)>> =
            std::collections::BTreeMap::new();
        for rec in &records {
            let prior = histories.entry(rec.user.clone()).or_default();
            for (item, rating) in prior.iter() {
                incremental.add_corating(&rec.item, rec.rating, item, *rating);
            }
            prior.push((rec.item.clone(), rec.rating));
        }
        prop_assert!(incremental.max_abs_diff(&batch) <= 1e-12);
    }

    #[test]
    fn chain_detects_any_commitment_substitution(
        n_entries in 1usize..12,
        victim in 0usize..12,
        byte in 0usize..32,
    ) {
        let entries: Vec<TransactionEntry> = (0..n_entries)
            .map(|i| TransactionEntry {
                kind: EntryKind::Purchase,
                buyer: format!("u{}", i),
                item_id: format!("i{}", i),
                rate: 1.0,
                seq: i as u64,
                payload: Vec::new(),
            })
            .collect();
        let mut chain = Chain::default();
        for entry in &entries {
            chain.append_block(vec![commit(entry).unwrap()]);
        }
        prop_assert_eq!(chain.verify(), ChainStatus::Valid);
        let victim = victim % n_entries;
        chain.blocks[victim].commitments[0].0[byte] ^= 0x01;
        prop_assert_ne!(chain.verify(), ChainStatus::Valid);
    }
}
