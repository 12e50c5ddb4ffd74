//! Sparse symmetric item-item similarity map.
//!
//! An entry for a pair (a, b) is the cosine over the raters common to both
//! items, with numerator and denominator sums restricted to that common
//! rater set. Pairs with no common rater are absent and read as 0. Because
//! ratings are positive, every stored similarity lies in (0, 1].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ItemId, RatingRecord, UserId};

/// Running sums over the common-rater set of one item pair.
///
/// `norm_first`/`norm_second` are the squared-rating sums for the
/// lexicographically smaller and larger item of the pair key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairAccum {
    pub dot: f64,
    pub norm_first: f64,
    pub norm_second: f64,
}

impl PairAccum {
    pub fn similarity(&self) -> f64 {
        if self.norm_first <= 0.0 || self.norm_second <= 0.0 {
            0.0
        } else {
            self.dot / (self.norm_first.sqrt() * self.norm_second.sqrt())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PairList(Vec<(ItemId, ItemId, PairAccum)>);

/// Sparse symmetric similarity map. Exists in two roles: the platform's real
/// map and the community's auxiliary map.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "PairList", into = "PairList")]
pub struct SimilarityMap {
    pairs: BTreeMap<(ItemId, ItemId), PairAccum>,
    // item -> neighbor -> current similarity, kept in sync with `pairs`
    adjacency: BTreeMap<ItemId, BTreeMap<ItemId, f64>>,
}

impl From<SimilarityMap> for PairList {
    fn from(map: SimilarityMap) -> Self {
        PairList(
            map.pairs
                .into_iter()
                .map(|((a, b), acc)| (a, b, acc))
                .collect(),
        )
    }
}

impl From<PairList> for SimilarityMap {
    fn from(list: PairList) -> Self {
        let mut map = SimilarityMap::default();
        for (a, b, acc) in list.0 {
            map.set_pair(&a, &b, acc);
        }
        map
    }
}

fn pair_key(a: &str, b: &str) -> (ItemId, ItemId) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl SimilarityMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Account for one user who rated both `a` and `b`.
    pub fn add_corating(&mut self, a: &str, rating_a: f64, b: &str, rating_b: f64) {
        debug_assert!(a != b, "self-pairs are not stored");
        let key = pair_key(a, b);
        let acc = self.pairs.entry(key.clone()).or_default();
        if a <= b {
            acc.norm_first += rating_a * rating_a;
            acc.norm_second += rating_b * rating_b;
        } else {
            acc.norm_first += rating_b * rating_b;
            acc.norm_second += rating_a * rating_a;
        }
        acc.dot += rating_a * rating_b;
        let sim = acc.similarity();
        self.adjacency
            .entry(key.0.clone())
            .or_default()
            .insert(key.1.clone(), sim);
        self.adjacency.entry(key.1).or_default().insert(key.0, sim);
    }

    /// Install externally computed pair sums (used by the shared-computation
    /// backend). Overwrites any existing entry for the pair.
    pub fn set_pair(&mut self, a: &str, b: &str, acc: PairAccum) {
        let key = pair_key(a, b);
        let sim = acc.similarity();
        self.pairs.insert(key.clone(), acc);
        self.adjacency
            .entry(key.0.clone())
            .or_default()
            .insert(key.1.clone(), sim);
        self.adjacency.entry(key.1).or_default().insert(key.0, sim);
    }

    /// Similarity of a pair; absent pairs read as 0.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 0.0;
        }
        self.adjacency
            .get(a)
            .and_then(|n| n.get(b))
            .copied()
            .unwrap_or(0.0)
    }

    /// Neighbors of `item` with their similarities (all nonzero).
    pub fn neighbors(&self, item: &str) -> Option<&BTreeMap<ItemId, f64>> {
        self.adjacency.get(item)
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.adjacency.keys()
    }

    pub fn contains_item(&self, item: &str) -> bool {
        self.adjacency.contains_key(item)
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (&(ItemId, ItemId), f64)> {
        self.pairs.iter().map(|(k, acc)| (k, acc.similarity()))
    }

    /// Largest entrywise absolute difference over the union of stored pairs.
    pub fn max_abs_diff(&self, other: &SimilarityMap) -> f64 {
        let mut worst: f64 = 0.0;
        for (key, acc) in &self.pairs {
            let a = acc.similarity();
            let b = other.pairs.get(key).map(|p| p.similarity()).unwrap_or(0.0);
            worst = worst.max((a - b).abs());
        }
        for (key, acc) in &other.pairs {
            if !self.pairs.contains_key(key) {
                worst = worst.max(acc.similarity().abs());
            }
        }
        worst
    }
}

/// Batch cosine construction from per-user rating histories.
pub fn build_similarity(histories: &BTreeMap<UserId, BTreeMap<ItemId, f64>>) -> SimilarityMap {
    let mut map = SimilarityMap::new();
    for items in histories.values() {
        let entries: Vec<(&ItemId, &f64)> = items.iter().collect();
        for i in 0..entries.len() {
            for j in (i + 1)..entries.len() {
                map.add_corating(entries[i].0, *entries[i].1, entries[j].0, *entries[j].1);
            }
        }
    }
    map
}

/// Group records into per-user item->rating histories.
pub fn histories_from_records(records: &[RatingRecord]) -> BTreeMap<UserId, BTreeMap<ItemId, f64>> {
    let mut histories: BTreeMap<UserId, BTreeMap<ItemId, f64>> = BTreeMap::new();
    for rec in records {
        histories
            .entry(rec.user.clone())
            .or_default()
            .insert(rec.item.clone(), rec.rating);
    }
    histories
}

pub fn build_similarity_from_records(records: &[RatingRecord]) -> SimilarityMap {
    build_similarity(&histories_from_records(records))
}

/// Predicted preference of a user (given their history) for `candidate`:
/// similarity-weighted mean of the user's ratings. Zero denominator reads 0.
pub fn score_item(
    history: &[(ItemId, f64)],
    map: &SimilarityMap,
    candidate: &str,
) -> Result<f64> {
    if history.iter().any(|(item, _)| item == candidate) {
        return Err(Error::CandidateInHistory(candidate.to_owned()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (item, rating) in history {
        let sim = map.similarity(item, candidate);
        num += sim * rating;
        den += sim.abs();
    }
    if den == 0.0 {
        Ok(0.0)
    } else {
        Ok(num / den)
    }
}
