//! Privacy-preserving similarity construction.
//!
//! Ratings are fixed-point encoded and additively secret-shared over the
//! field GF(2^61 - 1). Parties aggregate pairwise rating products and squared
//! norms under sharing (Beaver-triple multiplication); only the aggregate
//! sums are reconstructed, and the division/square-root finalization happens
//! in the clear. The plaintext path in [`crate::similarity`] is the oracle.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::similarity::{PairAccum, SimilarityMap};
use crate::types::{ItemId, UserId};

/// Mersenne prime 2^61 - 1.
pub const FIELD_PRIME: u64 = (1 << 61) - 1;
/// Fixed-point scale for encoded ratings; products carry SCALE^2.
pub const SCALE: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldElement(pub u64);

impl FieldElement {
    pub fn new(value: u64) -> Self {
        FieldElement(value % FIELD_PRIME)
    }

    pub fn add(self, other: Self) -> Self {
        FieldElement((self.0 + other.0) % FIELD_PRIME)
    }

    pub fn sub(self, other: Self) -> Self {
        FieldElement((self.0 + FIELD_PRIME - other.0) % FIELD_PRIME)
    }

    pub fn mul(self, other: Self) -> Self {
        FieldElement(((self.0 as u128 * other.0 as u128) % FIELD_PRIME as u128) as u64)
    }

    fn random(rng: &mut impl RngCore) -> Self {
        FieldElement(rng.gen_range(0..FIELD_PRIME))
    }
}

/// round(x * 2^16) as a field element; defined for x in [0, 1].
pub fn encode_fixed(x: f64) -> Result<FieldElement> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::FixedPointRange(x));
    }
    Ok(FieldElement((x * SCALE as f64).round() as u64))
}

pub fn decode_fixed(fe: FieldElement) -> f64 {
    fe.0 as f64 / SCALE as f64
}

/// Decode an aggregate that carries the product scale 2^32.
pub fn decode_product(fe: FieldElement) -> f64 {
    fe.0 as f64 / (SCALE as f64 * SCALE as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareVector {
    pub shares: Vec<FieldElement>,
}

/// Split a secret into n uniformly random additive shares.
pub fn share(secret: FieldElement, n_parties: usize, rng: &mut impl RngCore) -> Result<ShareVector> {
    if n_parties < 2 {
        return Err(Error::TooFewParties(n_parties));
    }
    let mut shares: Vec<FieldElement> = (0..n_parties - 1)
        .map(|_| FieldElement::random(rng))
        .collect();
    let partial = shares
        .iter()
        .fold(FieldElement(0), |acc, s| acc.add(*s));
    shares.push(secret.sub(partial));
    Ok(ShareVector { shares })
}

pub fn reconstruct(vector: &ShareVector) -> FieldElement {
    vector
        .shares
        .iter()
        .fold(FieldElement(0), |acc, s| acc.add(*s))
}

fn add_vectors(x: &ShareVector, y: &ShareVector) -> ShareVector {
    ShareVector {
        shares: x
            .shares
            .iter()
            .zip(&y.shares)
            .map(|(a, b)| a.add(*b))
            .collect(),
    }
}

/// Beaver triple (a, b, c = a·b) in shared form, produced by a seeded dealer.
pub struct BeaverTriple {
    pub a: ShareVector,
    pub b: ShareVector,
    pub c: ShareVector,
}

pub fn deal_triple(n_parties: usize, rng: &mut impl RngCore) -> Result<BeaverTriple> {
    let a = FieldElement::random(rng);
    let b = FieldElement::random(rng);
    let c = a.mul(b);
    Ok(BeaverTriple {
        a: share(a, n_parties, rng)?,
        b: share(b, n_parties, rng)?,
        c: share(c, n_parties, rng)?,
    })
}

/// Shared product of two shared values: open d = x - a and e = y - b, then
/// z_i = c_i + d·b_i + e·a_i (+ d·e on party 0).
pub fn beaver_multiply(
    x: &ShareVector,
    y: &ShareVector,
    triple: &BeaverTriple,
) -> ShareVector {
    let d = reconstruct(x).sub(reconstruct(&triple.a));
    let e = reconstruct(y).sub(reconstruct(&triple.b));
    let shares = triple
        .c
        .shares
        .iter()
        .enumerate()
        .map(|(i, c_i)| {
            let mut z = c_i.add(d.mul(triple.b.shares[i])).add(e.mul(triple.a.shares[i]));
            if i == 0 {
                z = z.add(d.mul(e));
            }
            z
        })
        .collect();
    ShareVector { shares }
}

/// Reconstructed fixed-point sums over the common raters of one item pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAggregates {
    pub dot: f64,
    pub norm_a: f64,
    pub norm_b: f64,
}

/// Aggregate Σ r_a·r_b, Σ r_a², Σ r_b² over the common raters under sharing.
/// Rating values are never individually reconstructed; only who rated what
/// is public.
pub fn secure_pair_aggregates(
    ratings_a: &BTreeMap<UserId, f64>,
    ratings_b: &BTreeMap<UserId, f64>,
    n_parties: usize,
    rng: &mut impl RngCore,
) -> Result<PairAggregates> {
    if n_parties < 2 {
        return Err(Error::TooFewParties(n_parties));
    }
    let common: BTreeSet<&UserId> = ratings_a
        .keys()
        .filter(|u| ratings_b.contains_key(*u))
        .collect();
    let zero = ShareVector {
        shares: vec![FieldElement(0); n_parties],
    };
    let mut dot = zero.clone();
    let mut norm_a = zero.clone();
    let mut norm_b = zero;
    // capacity guard: each product is < 2^33; the field holds sums of up to
    // 2^27 such products without wraparound
    if common.len() as u64 > 1 << 27 {
        return Err(Error::FixedPointOverflow(format!(
            "{} common raters exceed aggregation capacity",
            common.len()
        )));
    }
    for user in common {
        let ra = share(encode_fixed(ratings_a[user])?, n_parties, rng)?;
        let rb = share(encode_fixed(ratings_b[user])?, n_parties, rng)?;
        dot = add_vectors(&dot, &beaver_multiply(&ra, &rb, &deal_triple(n_parties, rng)?));
        norm_a = add_vectors(&norm_a, &beaver_multiply(&ra, &ra, &deal_triple(n_parties, rng)?));
        norm_b = add_vectors(&norm_b, &beaver_multiply(&rb, &rb, &deal_triple(n_parties, rng)?));
    }
    Ok(PairAggregates {
        dot: decode_product(reconstruct(&dot)),
        norm_a: decode_product(reconstruct(&norm_a)),
        norm_b: decode_product(reconstruct(&norm_b)),
    })
}

/// Division and square root applied to the reconstructed aggregates.
pub fn finalize_similarity(agg: &PairAggregates) -> f64 {
    if agg.norm_a <= 0.0 || agg.norm_b <= 0.0 {
        0.0
    } else {
        agg.dot / (agg.norm_a.sqrt() * agg.norm_b.sqrt())
    }
}

/// Per-pair deterministic randomness stream so pairs can be processed in any
/// order (or in parallel) with identical results.
fn pair_rng(seed: u64, a: &str, b: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_be_bytes());
    hasher.update((a.len() as u32).to_be_bytes());
    hasher.update(a.as_bytes());
    hasher.update(b.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Build the similarity map with the shared backend. Matches the plaintext
/// builder entrywise within fixed-point tolerance.
pub fn mpc_build_similarity(
    histories: &BTreeMap<UserId, BTreeMap<ItemId, f64>>,
    n_parties: usize,
    seed: u64,
) -> Result<SimilarityMap> {
    if n_parties < 2 {
        return Err(Error::TooFewParties(n_parties));
    }
    // public purchase incidence: item -> {user: rating} (values stay secret
    // inside secure_pair_aggregates)
    let mut by_item: BTreeMap<&ItemId, BTreeMap<UserId, f64>> = BTreeMap::new();
    let mut pairs: BTreeSet<(&ItemId, &ItemId)> = BTreeSet::new();
    for (user, items) in histories {
        let item_list: Vec<&ItemId> = items.keys().collect();
        for (item, rating) in items {
            by_item.entry(item).or_default().insert(user.clone(), *rating);
        }
        for i in 0..item_list.len() {
            for j in (i + 1)..item_list.len() {
                let (a, b) = if item_list[i] <= item_list[j] {
                    (item_list[i], item_list[j])
                } else {
                    (item_list[j], item_list[i])
                };
                pairs.insert((a, b));
            }
        }
    }
    let mut map = SimilarityMap::new();
    for (a, b) in pairs {
        let mut rng = pair_rng(seed, a, b);
        let agg = secure_pair_aggregates(&by_item[a], &by_item[b], n_parties, &mut rng)?;
        map.set_pair(
            a,
            b,
            PairAccum {
                dot: agg.dot,
                norm_first: agg.norm_a,
                norm_second: agg.norm_b,
            },
        );
    }
    Ok(map)
}
