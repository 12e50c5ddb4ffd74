//! Evidence-side community state: auxiliary similarity map, per-item clusters
//! with provenance tags, observed-recommendation log, and user grouping.
//!
//! The same state machine doubles as the evaluation-only "oracle" community:
//! in [`MapMode::Mirror`] the map is fed from the platform's real map instead
//! of being built from member records, while cluster maintenance is unchanged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::HistoryEntry;
use crate::similarity::SimilarityMap;
use crate::types::{ItemId, RatingRecord, Seq, UserId};

/// How a cluster member earned its membership. Members keep the earliest tag
/// they were inserted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceTag {
    Init,
    Update,
    Grown,
}

#[derive(Serialize, Deserialize)]
struct MemberEntry {
    item: ItemId,
    tag: ProvenanceTag,
}

#[derive(Serialize, Deserialize)]
struct ClusterRepr {
    item: ItemId,
    members: Vec<MemberEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ClusterRepr", into = "ClusterRepr")]
pub struct PerItemCluster {
    pub anchor: ItemId,
    members: BTreeMap<ItemId, ProvenanceTag>,
}

impl From<ClusterRepr> for PerItemCluster {
    fn from(repr: ClusterRepr) -> Self {
        let mut cluster = PerItemCluster::new(repr.item);
        for m in repr.members {
            cluster.insert(&m.item, m.tag);
        }
        cluster
    }
}

impl From<PerItemCluster> for ClusterRepr {
    fn from(cluster: PerItemCluster) -> Self {
        ClusterRepr {
            item: cluster.anchor,
            members: cluster
                .members
                .into_iter()
                .map(|(item, tag)| MemberEntry { item, tag })
                .collect(),
        }
    }
}

impl PerItemCluster {
    pub fn new(anchor: impl Into<ItemId>) -> Self {
        PerItemCluster {
            anchor: anchor.into(),
            members: BTreeMap::new(),
        }
    }

    /// Insert under the earliest-tag rule: re-insertion never changes an
    /// existing tag, and the anchor is never a member of itself.
    pub fn insert(&mut self, item: &str, tag: ProvenanceTag) {
        if item == self.anchor {
            return;
        }
        self.members.entry(item.to_owned()).or_insert(tag);
    }

    pub fn contains(&self, item: &str) -> bool {
        self.members.contains_key(item)
    }

    pub fn tag(&self, item: &str) -> Option<ProvenanceTag> {
        self.members.get(item).copied()
    }

    pub fn members(&self) -> impl Iterator<Item = (&ItemId, ProvenanceTag)> {
        self.members.iter().map(|(item, &tag)| (item, tag))
    }

    pub fn member_set(&self) -> BTreeSet<ItemId> {
        self.members.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn has_grown_member(&self) -> bool {
        self.members.values().any(|&t| t == ProvenanceTag::Grown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapMode {
    /// Map built from members' records only (the community's real situation).
    Aux,
    /// Map injected from outside (evaluation against the platform's map).
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserGroup {
    GroupOne,
    GroupTwo,
}

/// One platform response as seen by the community. `contained` records
/// whether every disclosed item was already in the purchased item's cluster
/// when the response arrived, making classification recomputable later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub user: UserId,
    pub item: ItemId,
    pub disclosed: Vec<ItemId>,
    pub contained: bool,
    pub seq: Seq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunityState {
    pub members: BTreeSet<UserId>,
    pub map: SimilarityMap,
    pub map_mode: MapMode,
    pub clusters: BTreeMap<ItemId, PerItemCluster>,
    pub histories: BTreeMap<UserId, Vec<HistoryEntry>>,
    pub observed: Vec<Observation>,
    pub first_purchase: BTreeMap<UserId, ItemId>,
}

impl CommunityState {
    /// Community at inception: the auxiliary map is built from the members'
    /// shared pre-inception records and every purchased item gets a cluster
    /// seeded with its nonzero-similarity neighbors.
    pub fn init_from_histories(
        members: BTreeSet<UserId>,
        initial_records: &[RatingRecord],
        map_mode: MapMode,
        initial_map: Option<SimilarityMap>,
    ) -> Result<Self> {
        let mut histories: BTreeMap<UserId, Vec<HistoryEntry>> = BTreeMap::new();
        let mut first_purchase = BTreeMap::new();
        for rec in initial_records {
            if !members.contains(&rec.user) {
                return Err(Error::NotMember(rec.user.clone()));
            }
            first_purchase
                .entry(rec.user.clone())
                .or_insert_with(|| rec.item.clone());
            histories.entry(rec.user.clone()).or_default().push(HistoryEntry {
                item: rec.item.clone(),
                rating: rec.rating,
                seq: rec.seq,
            });
        }
        let map = match (map_mode, initial_map) {
            (_, Some(map)) => map,
            (MapMode::Mirror, None) => {
                return Err(Error::Config(
                    "mirror-mode community needs an initial map".into(),
                ))
            }
            (MapMode::Aux, None) => {
                let by_user: BTreeMap<UserId, BTreeMap<ItemId, f64>> = histories
                    .iter()
                    .map(|(user, hist)| {
                        (
                            user.clone(),
                            hist.iter().map(|e| (e.item.clone(), e.rating)).collect(),
                        )
                    })
                    .collect();
                crate::similarity::build_similarity(&by_user)
            }
        };
        let mut state = CommunityState {
            members,
            map,
            map_mode,
            clusters: BTreeMap::new(),
            histories,
            observed: Vec::new(),
            first_purchase,
        };
        let items: BTreeSet<ItemId> = state
            .histories
            .values()
            .flat_map(|h| h.iter().map(|e| e.item.clone()))
            .collect();
        for item in items {
            state.create_cluster(&item);
        }
        Ok(state)
    }

    /// Replace the map (mirror mode); cluster membership never shrinks even
    /// if similarity values do.
    pub fn set_map(&mut self, map: SimilarityMap) {
        self.map = map;
    }

    fn create_cluster(&mut self, anchor: &str) {
        if self.clusters.contains_key(anchor) {
            return;
        }
        let mut cluster = PerItemCluster::new(anchor);
        if let Some(neighbors) = self.map.neighbors(anchor) {
            for (other, &sim) in neighbors {
                if sim > 0.0 {
                    cluster.insert(other, ProvenanceTag::Init);
                }
            }
        }
        self.clusters.insert(anchor.to_owned(), cluster);
    }

    fn merge_into(&mut self, anchor: &str, items: &[ItemId], tag: ProvenanceTag) {
        if let Some(cluster) = self.clusters.get_mut(anchor) {
            for item in items {
                cluster.insert(item, tag);
            }
        }
    }

    /// Apply a member's purchase of `item` together with the platform's
    /// disclosure for it.
    pub fn on_member_purchase(
        &mut self,
        user: &str,
        item: &str,
        rating: f64,
        seq: Seq,
        disclosed: &[ItemId],
    ) -> Result<()> {
        if !self.members.contains(user) {
            return Err(Error::NotMember(user.to_owned()));
        }
        // Containment is judged against the cluster as it stood when the
        // recommendation arrived, before this event's own merges.
        let contained = match self.clusters.get(item) {
            Some(cluster) => disclosed.iter().all(|d| cluster.contains(d)),
            None => disclosed.is_empty(),
        };
        let prior: Vec<(ItemId, f64)> = self
            .histories
            .get(user)
            .map(|h| h.iter().map(|e| (e.item.clone(), e.rating)).collect())
            .unwrap_or_default();
        // Seed the cluster from the map as it stood before this event, so
        // this buyer's own history links arrive as updates, not init seeds.
        self.create_cluster(item);
        if !prior.is_empty() && self.map_mode == MapMode::Aux {
            // The buyer is now a common rater of (item, p) for each prior p.
            for (p, p_rating) in &prior {
                self.map.add_corating(item, rating, p, *p_rating);
            }
        }
        if !prior.is_empty() {
            // Non-first purchase: cross-link the buyer's history.
            let prior_items: Vec<ItemId> = prior.iter().map(|(p, _)| p.clone()).collect();
            self.merge_into(item, &prior_items, ProvenanceTag::Update);
            for p in &prior_items {
                self.create_cluster(p);
                let mut additions: Vec<ItemId> = vec![item.to_owned()];
                additions.extend(prior_items.iter().filter(|q| *q != p).cloned());
                self.merge_into(p, &additions, ProvenanceTag::Update);
            }
        }
        let disclosed_vec = disclosed.to_vec();
        self.merge_into(item, &disclosed_vec, ProvenanceTag::Update);
        // Growing: the new recommendations reach every other cluster that
        // already contains the purchased item.
        let hosts: Vec<ItemId> = self
            .clusters
            .iter()
            .filter(|(anchor, cluster)| anchor.as_str() != item && cluster.contains(item))
            .map(|(anchor, _)| anchor.clone())
            .collect();
        for host in hosts {
            self.merge_into(&host, &disclosed_vec, ProvenanceTag::Grown);
        }
        self.first_purchase
            .entry(user.to_owned())
            .or_insert_with(|| item.to_owned());
        self.histories.entry(user.to_owned()).or_default().push(HistoryEntry {
            item: item.to_owned(),
            rating,
            seq,
        });
        self.observed.push(Observation {
            user: user.to_owned(),
            item: item.to_owned(),
            disclosed: disclosed_vec,
            contained,
            seq,
        });
        Ok(())
    }

    /// Group one: every observed disclosure for the user was already
    /// contained in the purchased item's cluster at observation time.
    pub fn classify_user(&self, user: &str) -> Result<UserGroup> {
        if !self.members.contains(user) {
            return Err(Error::NotMember(user.to_owned()));
        }
        let mut seen = false;
        for obs in self.observed.iter().filter(|o| o.user == user) {
            seen = true;
            if !obs.contained {
                return Ok(UserGroup::GroupTwo);
            }
        }
        if !seen {
            return Err(Error::NoObservations(user.to_owned()));
        }
        Ok(UserGroup::GroupOne)
    }

    /// Union of the user's purchased items with their clusters.
    pub fn history_cluster(&self, user: &str) -> Result<BTreeSet<ItemId>> {
        if !self.members.contains(user) {
            return Err(Error::NotMember(user.to_owned()));
        }
        let mut out = BTreeSet::new();
        if let Some(history) = self.histories.get(user) {
            for entry in history {
                out.insert(entry.item.clone());
                if let Some(cluster) = self.clusters.get(&entry.item) {
                    out.extend(cluster.member_set());
                }
            }
        }
        Ok(out)
    }

    pub fn cluster_snapshot(&self, item: &str) -> Result<PerItemCluster> {
        self.clusters
            .get(item)
            .cloned()
            .ok_or_else(|| Error::UnknownItem(item.to_owned()))
    }

    /// Items the user purchased before `seq` (their rating values), used for
    /// target criteria and overlap checks with pre-request history.
    pub fn history_before(&self, user: &str, seq: Seq) -> Vec<(ItemId, f64)> {
        self.histories
            .get(user)
            .map(|h| {
                h.iter()
                    .filter(|e| e.seq < seq)
                    .map(|e| (e.item.clone(), e.rating))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Batch oracle for the auxiliary map (aux mode only).
    pub fn recompute_map(&self) -> SimilarityMap {
        let by_user: BTreeMap<UserId, BTreeMap<ItemId, f64>> = self
            .histories
            .iter()
            .map(|(user, hist)| {
                (
                    user.clone(),
                    hist.iter().map(|e| (e.item.clone(), e.rating)).collect(),
                )
            })
            .collect();
        crate::similarity::build_similarity(&by_user)
    }
}
