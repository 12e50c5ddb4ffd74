//! Simulated recommendation platform.
//!
//! Maintains the real similarity map over user purchase records, produces
//! scored top-S recommendation clusters with partial random disclosure, and
//! either honors or ignores stop-requests depending on the configured mode.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{build_similarity, SimilarityMap};
use crate::types::{ItemId, Seq, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Honest,
    Violating,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub mode: Mode,
    #[serde(rename = "cluster_size_S")]
    pub cluster_size_s: usize,
    pub disclose_k: usize,
    pub seed: u64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            mode: Mode::Violating,
            cluster_size_s: 10,
            disclose_k: 7,
            seed: 0,
        }
    }
}

impl PlatformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_size_s == 0 {
            return Err(Error::Config("cluster_size_s must be positive".into()));
        }
        if self.disclose_k == 0 || self.disclose_k > self.cluster_size_s {
            return Err(Error::Config(format!(
                "disclose_k {} must be in 1..={}",
                self.disclose_k, self.cluster_size_s
            )));
        }
        Ok(())
    }
}

/// The `disclose_k`-item subset of the full recommendation cluster handed to
/// the buyer after a purchase, in cluster-ranking order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disclosure {
    pub user: UserId,
    pub trigger_seq: Seq,
    pub items: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item: ItemId,
    pub rating: f64,
    pub seq: Seq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformState {
    pub config: PlatformConfig,
    pub histories: BTreeMap<UserId, Vec<HistoryEntry>>,
    pub real_map: SimilarityMap,
    /// user -> seq at which the stop-request was received (both modes log it).
    pub stopped: BTreeMap<UserId, Seq>,
    next_seq: Seq,
    rng: ChaCha8Rng,
}

impl PlatformState {
    pub fn new(config: PlatformConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(PlatformState {
            config,
            histories: BTreeMap::new(),
            real_map: SimilarityMap::default(),
            stopped: BTreeMap::new(),
            next_seq: 0,
            rng,
        })
    }

    pub fn next_seq(&self) -> Seq {
        self.next_seq
    }

    /// The history the platform is entitled to use for `user`: the full
    /// history in violating mode or absent a stop-request; only post-request
    /// purchases in honest mode once a stop-request arrived.
    pub fn effective_history(&self, user: &str) -> Vec<(ItemId, f64)> {
        let Some(history) = self.histories.get(user) else {
            return Vec::new();
        };
        let cutoff = match (self.config.mode, self.stopped.get(user)) {
            (Mode::Honest, Some(&req_seq)) => Some(req_seq),
            _ => None,
        };
        history
            .iter()
            .filter(|e| cutoff.map_or(true, |c| e.seq > c))
            .map(|e| (e.item.clone(), e.rating))
            .collect()
    }

    fn effective_histories(&self) -> BTreeMap<UserId, BTreeMap<ItemId, f64>> {
        self.histories
            .keys()
            .map(|user| {
                (
                    user.clone(),
                    self.effective_history(user).into_iter().collect(),
                )
            })
            .collect()
    }

    /// Append a purchase, update the real map incrementally, and return the
    /// partial disclosure for the fresh recommendation cluster.
    pub fn record_purchase(
        &mut self,
        user: &str,
        item: &str,
        rating: f64,
    ) -> Result<Disclosure> {
        if !(rating > 0.0 && rating <= 1.0) {
            return Err(Error::RatingOutOfRange {
                value: rating,
                max: 1.0,
            });
        }
        if let Some(history) = self.histories.get(user) {
            if history.iter().any(|e| e.item == item) {
                return Err(Error::DuplicatePurchase {
                    user: user.to_owned(),
                    item: item.to_owned(),
                });
            }
        }
        // The buyer becomes a common rater of (item, b) for every item b the
        // platform may still use from the buyer's history.
        for (prior, prior_rating) in self.effective_history(user) {
            self.real_map.add_corating(item, rating, &prior, prior_rating);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.histories
            .entry(user.to_owned())
            .or_default()
            .push(HistoryEntry {
                item: item.to_owned(),
                rating,
                seq,
            });
        let cluster = self.full_recommendation_cluster(user)?;
        let items = disclose(&cluster, self.config.disclose_k, &mut self.rng);
        Ok(Disclosure {
            user: user.to_owned(),
            trigger_seq: seq,
            items,
        })
    }

    /// Register a stop-request. Honest mode rebuilds the real map without the
    /// user's pre-request records; violating mode merely logs the request.
    pub fn stop_request(&mut self, user: &str) -> Result<Seq> {
        if !self.histories.contains_key(user) {
            return Err(Error::UnknownUser(user.to_owned()));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stopped.insert(user.to_owned(), seq);
        if self.config.mode == Mode::Honest {
            self.real_map = build_similarity(&self.effective_histories());
        }
        Ok(seq)
    }

    /// The full R cluster: top-S positive-score candidates outside the user's
    /// effective history, score descending, item identifier ascending on ties.
    pub fn full_recommendation_cluster(&self, user: &str) -> Result<Vec<ItemId>> {
        let history = self.effective_history(user);
        if history.is_empty() {
            return Err(Error::EmptyHistory(user.to_owned()));
        }
        let in_history: std::collections::BTreeSet<&str> =
            history.iter().map(|(i, _)| i.as_str()).collect();
        // Accumulate the score numerator/denominator candidate-wise over the
        // neighbors of history items; items with no similarity to the history
        // score 0 and can never enter the cluster.
        let mut acc: BTreeMap<&ItemId, (f64, f64)> = BTreeMap::new();
        for (h, rating) in &history {
            if let Some(neighbors) = self.real_map.neighbors(h) {
                for (candidate, &sim) in neighbors {
                    if in_history.contains(candidate.as_str()) {
                        continue;
                    }
                    let (num, den) = acc.entry(candidate).or_insert((0.0, 0.0));
                    *num += sim * rating;
                    *den += sim.abs();
                }
            }
        }
        let mut scored: Vec<(ItemId, f64)> = Vec::new();
        for (candidate, (num, den)) in acc {
            if den > 0.0 {
                let score = num / den;
                if score > 0.0 {
                    scored.push((candidate.clone(), score));
                }
            }
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("scores are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(self.config.cluster_size_s);
        Ok(scored.into_iter().map(|(item, _)| item).collect())
    }

    /// Batch-recomputed map over the records the platform may use; oracle for
    /// the incremental `real_map`.
    pub fn recompute_real_map(&self) -> SimilarityMap {
        build_similarity(&self.effective_histories())
    }
}

/// Uniform random k-subset of the cluster without replacement, order
/// preserved from the cluster ranking. `k >= |cluster|` discloses everything.
pub fn disclose(cluster: &[ItemId], k: usize, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
    if k >= cluster.len() {
        return cluster.to_vec();
    }
    let mut picked = sample(rng, cluster.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| cluster[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn platform(mode: Mode) -> PlatformState {
        PlatformState::new(PlatformConfig {
            mode,
            ..PlatformConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn first_purchase_in_empty_platform_discloses_nothing() {
        let mut p = platform(Mode::Violating);
        let d = p.record_purchase("u1", "a", 1.0).unwrap();
        assert!(d.items.is_empty());
        assert_eq!(d.trigger_seq, 0);
    }

    #[test]
    fn duplicate_purchase_rejected() {
        let mut p = platform(Mode::Violating);
        p.record_purchase("u1", "a", 1.0).unwrap();
        assert!(matches!(
            p.record_purchase("u1", "a", 0.5),
            Err(Error::DuplicatePurchase { .. })
        ));
    }

    #[test]
    fn corating_creates_similarity() {
        let mut p = platform(Mode::Violating);
        p.record_purchase("u1", "a", 1.0).unwrap();
        p.record_purchase("u1", "b", 1.0).unwrap();
        assert_eq!(p.real_map.similarity("a", "b"), 1.0);
        // u2 shares a with u1 and then buys c: disclosure can surface b.
        p.record_purchase("u2", "a", 1.0).unwrap();
        let cluster = p.full_recommendation_cluster("u2").unwrap();
        assert_eq!(cluster, vec!["b".to_string()]);
    }

    #[test]
    fn incremental_matches_batch_after_every_prefix() {
        let mut p = platform(Mode::Violating);
        let events = [
            ("u1", "a", 1.0),
            ("u1", "b", 0.8),
            ("u2", "a", 0.6),
            ("u2", "b", 0.4),
            ("u2", "c", 1.0),
            ("u3", "c", 0.2),
            ("u3", "a", 1.0),
        ];
        for (user, item, rating) in events {
            p.record_purchase(user, item, rating).unwrap();
            assert!(p.real_map.max_abs_diff(&p.recompute_real_map()) < 1e-12);
        }
    }

    #[test]
    fn honest_stop_removes_sole_corater_influence() {
        let mut p = platform(Mode::Honest);
        p.record_purchase("u1", "a", 1.0).unwrap();
        p.record_purchase("u1", "b", 1.0).unwrap();
        assert_eq!(p.real_map.similarity("a", "b"), 1.0);
        p.stop_request("u1").unwrap();
        assert_eq!(p.real_map.similarity("a", "b"), 0.0);
        assert!(p.effective_history("u1").is_empty());
    }

    #[test]
    fn violating_stop_changes_nothing() {
        let mut p = platform(Mode::Violating);
        p.record_purchase("u1", "a", 1.0).unwrap();
        p.record_purchase("u1", "b", 1.0).unwrap();
        let before = serde_json::to_string(&p.real_map).unwrap();
        p.stop_request("u1").unwrap();
        assert_eq!(serde_json::to_string(&p.real_map).unwrap(), before);
        assert_eq!(p.effective_history("u1").len(), 2);
    }

    #[test]
    fn honest_post_request_probe_is_usable() {
        let mut p = platform(Mode::Honest);
        for item in ["a", "b", "c", "d", "e"] {
            p.record_purchase("u1", item, 1.0).unwrap();
        }
        p.stop_request("u1").unwrap();
        p.record_purchase("u1", "probe", 1.0).unwrap();
        let history = p.effective_history("u1");
        assert_eq!(history, vec![("probe".to_string(), 1.0)]);
    }

    #[test]
    fn cluster_truncates_to_s_and_breaks_ties_lexicographically() {
        let mut p = PlatformState::new(PlatformConfig {
            mode: Mode::Violating,
            cluster_size_s: 3,
            disclose_k: 2,
            seed: 1,
        })
        .unwrap();
        // u1 buys hub then 5 equal-rated items: all candidates score 1.0 for
        // u2 after u2 buys hub, so the 3 lexicographically smallest win.
        p.record_purchase("u1", "hub", 1.0).unwrap();
        for item in ["e", "d", "c", "b", "a"] {
            p.record_purchase("u1", item, 1.0).unwrap();
        }
        p.record_purchase("u2", "hub", 1.0).unwrap();
        let cluster = p.full_recommendation_cluster("u2").unwrap();
        assert_eq!(cluster, vec!["a".to_string(), "b".into(), "c".into()]);
    }

    #[test]
    fn disclosure_is_subset_and_deterministic() {
        let cluster: Vec<ItemId> = (0..10).map(|i| format!("i{}", i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d1 = disclose(&cluster, 7, &mut rng);
        assert_eq!(d1.len(), 7);
        assert!(d1.iter().all(|i| cluster.contains(i)));
        // ranking order preserved
        let positions: Vec<usize> = d1
            .iter()
            .map(|i| cluster.iter().position(|c| c == i).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(disclose(&cluster, 7, &mut rng2), d1);
        let mut rng3 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(disclose(&cluster, 99, &mut rng3), cluster);
    }

    #[test]
    fn empty_history_cluster_errors() {
        let p = platform(Mode::Violating);
        assert!(matches!(
            p.full_recommendation_cluster("nobody"),
            Err(Error::EmptyHistory(_))
        ));
    }
}
