//! Evidence generation: target-item selection (criteria applied in the order
//! C1, C4, C3, C2), seeded probing rounds against the platform, the set-size
//! violation test, and the corroborating history-overlap check.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::{CommunityState, PerItemCluster};
use crate::error::{Error, Result};
use crate::ledger::{commit, Chain, EntryKind, EntryStore, TransactionEntry};
use crate::platform::PlatformState;
use crate::types::{ItemId, Seq, UserId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetItem {
    pub item: ItemId,
    /// Non-victim member whose first purchase this item was.
    pub owner: UserId,
    pub cluster_at_selection: PerItemCluster,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub victim: UserId,
    pub probe: ItemId,
    #[serde(rename = "A")]
    pub a: BTreeSet<ItemId>,
    #[serde(rename = "B")]
    pub b: Vec<ItemId>,
    #[serde(rename = "S")]
    pub s: usize,
    pub undisclosed: usize,
    pub lemma_triggered: bool,
    pub overlap: BTreeSet<ItemId>,
    /// Ledger positions: stop-request, cluster snapshot, probe purchase,
    /// disclosure — in that order.
    pub ledger_refs: Vec<u64>,
    pub round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    ViolationProven,
    Inconclusive,
    Exhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub status: ProbeStatus,
    pub rounds_used: u32,
    pub evidences: Vec<Evidence>,
}

/// Violation test: more of the committed cluster lies outside the disclosure
/// than there are undisclosed slots, equivalently |A ∪ B| > S.
pub fn lemma_check(a: &BTreeSet<ItemId>, b: &[ItemId], s: usize) -> Result<bool> {
    let b_set: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    if b_set.len() > s {
        return Err(Error::OversizedDisclosure {
            disclosed: b_set.len(),
            cluster_size: s,
        });
    }
    let a_minus_b = a.iter().filter(|x| !b_set.contains(x.as_str())).count();
    Ok(a_minus_b > s - b_set.len())
}

/// Disclosed items that also appear in the victim's pre-request history —
/// corroborating, never conclusive.
pub fn overlap_check(b: &[ItemId], victim_history: &BTreeSet<ItemId>) -> BTreeSet<ItemId> {
    b.iter()
        .filter(|i| victim_history.contains(*i))
        .cloned()
        .collect()
}

/// Items that are the first purchase of some non-victim member (criterion
/// applied first), then: zero auxiliary similarity to the victim's whole
/// history, no grown-tagged cluster member, and all observed disclosures for
/// the item contained in its cluster.
pub fn select_target_items(
    community: &CommunityState,
    victim: &str,
) -> Result<Vec<TargetItem>> {
    if !community.members.contains(victim) {
        return Err(Error::NotMember(victim.to_owned()));
    }
    let victim_items: BTreeSet<&str> = community
        .histories
        .get(victim)
        .map(|h| h.iter().map(|e| e.item.as_str()).collect())
        .unwrap_or_default();
    let candidates = first_purchase_candidates(community, Some(victim));
    let mut targets = Vec::new();
    for (item, owner) in candidates {
        let zero_sim = victim_items
            .iter()
            .all(|h| community.map.similarity(&item, h) == 0.0);
        if !zero_sim {
            continue;
        }
        if !grown_free(community, &item) || !all_observations_contained(community, &item) {
            continue;
        }
        targets.push(TargetItem {
            cluster_at_selection: community.cluster_snapshot(&item)?,
            item,
            owner,
        });
    }
    Ok(targets)
}

/// Victim-independent variant used by report tables that have no victim in
/// scope: first-purchase, grown-free, contained-observations items.
pub fn select_table_targets(community: &CommunityState) -> Vec<TargetItem> {
    first_purchase_candidates(community, None)
        .into_iter()
        .filter(|(item, _)| grown_free(community, item) && all_observations_contained(community, item))
        .map(|(item, owner)| TargetItem {
            cluster_at_selection: community
                .cluster_snapshot(&item)
                .expect("first purchases have clusters"),
            item,
            owner,
        })
        .collect()
}

fn first_purchase_candidates(
    community: &CommunityState,
    exclude: Option<&str>,
) -> Vec<(ItemId, UserId)> {
    let mut map: std::collections::BTreeMap<ItemId, UserId> = std::collections::BTreeMap::new();
    for (user, item) in &community.first_purchase {
        if exclude == Some(user.as_str()) {
            continue;
        }
        // smallest owner id wins for determinism when shared
        match map.get(item) {
            Some(existing) if existing <= user => {}
            _ => {
                map.insert(item.clone(), user.clone());
            }
        }
    }
    // items first-purchased by the excluded victim are not candidates at all
    if let Some(victim) = exclude {
        if let Some(vf) = community.first_purchase.get(victim) {
            map.remove(vf);
        }
    }
    map.into_iter().collect()
}

fn grown_free(community: &CommunityState, item: &str) -> bool {
    community
        .clusters
        .get(item)
        .map_or(false, |c| !c.has_grown_member())
}

fn all_observations_contained(community: &CommunityState, item: &str) -> bool {
    community
        .observed
        .iter()
        .filter(|o| o.item == item)
        .all(|o| o.contained)
}

pub fn find_stop_ref(store: &EntryStore, victim: &str) -> Option<u64> {
    store
        .entries
        .iter()
        .position(|e| e.kind == EntryKind::StopRequest && e.buyer == victim)
        .map(|p| p as u64)
}

/// Issue and commit a stop-request; returns its ledger position.
pub fn commit_stop_request(
    platform: &mut PlatformState,
    chain: &mut Chain,
    store: &mut EntryStore,
    user: &str,
) -> Result<u64> {
    let seq = platform.stop_request(user)?;
    let entry = TransactionEntry {
        kind: EntryKind::StopRequest,
        buyer: user.to_owned(),
        item_id: String::new(),
        rate: 0.0,
        seq,
        payload: Vec::new(),
    };
    chain.append_block(vec![commit(&entry)?]);
    Ok(store.push(entry))
}

/// One probing round: snapshot the target's cluster, commit it, purchase the
/// target at rating 1.0, commit purchase and disclosure, and assemble the
/// evidence.
#[allow(clippy::too_many_arguments)]
pub fn probe_round(
    platform: &mut PlatformState,
    community: &mut CommunityState,
    chain: &mut Chain,
    store: &mut EntryStore,
    victim: &str,
    target: &str,
    round: u32,
) -> Result<Evidence> {
    let Some(&stop_seq) = platform.stopped.get(victim) else {
        return Err(Error::NoStopRequest(victim.to_owned()));
    };
    let stop_ref =
        find_stop_ref(store, victim).ok_or_else(|| Error::NoStopRequest(victim.to_owned()))?;
    // A is frozen and committed before the probe purchase so the probe's own
    // disclosure cannot contaminate it.
    let a: BTreeSet<ItemId> = community.cluster_snapshot(target)?.member_set();
    let probe_seq: Seq = platform.next_seq();
    let snapshot_entry = TransactionEntry {
        kind: EntryKind::ClusterSnapshot,
        buyer: victim.to_owned(),
        item_id: target.to_owned(),
        rate: 0.0,
        seq: probe_seq,
        payload: a.iter().cloned().collect(),
    };
    chain.append_block(vec![commit(&snapshot_entry)?]);
    let snapshot_ref = store.push(snapshot_entry);

    let disclosure = platform.record_purchase(victim, target, 1.0)?;
    community.on_member_purchase(victim, target, 1.0, disclosure.trigger_seq, &disclosure.items)?;

    let purchase_entry = TransactionEntry {
        kind: EntryKind::Purchase,
        buyer: victim.to_owned(),
        item_id: target.to_owned(),
        rate: 1.0,
        seq: disclosure.trigger_seq,
        payload: Vec::new(),
    };
    let disclosure_entry = TransactionEntry {
        kind: EntryKind::Disclosure,
        buyer: victim.to_owned(),
        item_id: target.to_owned(),
        rate: 1.0,
        seq: disclosure.trigger_seq,
        payload: disclosure.items.clone(),
    };
    chain.append_block(vec![commit(&purchase_entry)?, commit(&disclosure_entry)?]);
    let purchase_ref = store.push(purchase_entry);
    let disclosure_ref = store.push(disclosure_entry);

    let s = platform.config.cluster_size_s;
    let b = disclosure.items;
    let lemma_triggered = lemma_check(&a, &b, s)?;
    let pre_request: BTreeSet<ItemId> = community
        .history_before(victim, stop_seq)
        .into_iter()
        .map(|(item, _)| item)
        .collect();
    let overlap = overlap_check(&b, &pre_request);
    let undisclosed = s - b.iter().collect::<BTreeSet<_>>().len();
    Ok(Evidence {
        victim: victim.to_owned(),
        probe: target.to_owned(),
        a,
        b,
        s,
        undisclosed,
        lemma_triggered,
        overlap,
        ledger_refs: vec![stop_ref, snapshot_ref, purchase_ref, disclosure_ref],
        round,
    })
}

/// Probe seeded-uniformly over targets without replacement until the lemma
/// triggers, rounds run out, or targets are exhausted.
#[allow(clippy::too_many_arguments)]
pub fn probe_until_success(
    platform: &mut PlatformState,
    community: &mut CommunityState,
    chain: &mut Chain,
    store: &mut EntryStore,
    victim: &str,
    max_rounds: u32,
    seed: u64,
) -> Result<ProbeOutcome> {
    let mut targets = select_target_items(community, victim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    targets.shuffle(&mut rng);
    let mut evidences = Vec::new();
    let mut rounds_used = 0;
    for target in targets.iter().take(max_rounds as usize) {
        rounds_used += 1;
        let evidence = probe_round(
            platform, community, chain, store, victim, &target.item, rounds_used,
        )?;
        let triggered = evidence.lemma_triggered;
        evidences.push(evidence);
        if triggered {
            return Ok(ProbeOutcome {
                status: ProbeStatus::ViolationProven,
                rounds_used,
                evidences,
            });
        }
    }
    let status = if (rounds_used as usize) < targets.len() || rounds_used == max_rounds {
        if rounds_used == 0 {
            ProbeStatus::Exhausted
        } else {
            ProbeStatus::Inconclusive
        }
    } else {
        ProbeStatus::Exhausted
    };
    Ok(ProbeOutcome {
        status,
        rounds_used,
        evidences,
    })
}

/// Evaluate every target once on discarded forks; returns (M, N) where M of
/// the N targets trigger the violation test in a single round.
pub fn one_round_success_rate(
    platform: &PlatformState,
    community: &CommunityState,
    chain: &Chain,
    store: &EntryStore,
    victim: &str,
) -> Result<(usize, usize)> {
    let targets = select_target_items(community, victim)?;
    if targets.is_empty() {
        return Err(Error::NoTargets(victim.to_owned()));
    }
    let mut m = 0;
    for target in &targets {
        let mut p = platform.clone();
        let mut c = community.clone();
        let mut ch = chain.clone();
        let mut st = store.clone();
        if !p.stopped.contains_key(victim) {
            commit_stop_request(&mut p, &mut ch, &mut st, victim)?;
        }
        let evidence = probe_round(&mut p, &mut c, &mut ch, &mut st, victim, &target.item, 1)?;
        if evidence.lemma_triggered {
            m += 1;
        }
    }
    Ok((m, targets.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<ItemId> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn vecs(items: &[&str]) -> Vec<ItemId> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn lemma_boundary_cases() {
        // B ⊆ A with |A| = S: exactly fills the cluster, no violation.
        let a = set(&["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"]);
        let b = vecs(&["1", "2", "3", "4", "5", "6", "7"]);
        assert!(!lemma_check(&a, &b, 10).unwrap());
        // one disclosed item outside A: |A\B| = 4 > 3.
        let b2 = vecs(&["1", "2", "3", "4", "5", "6", "x"]);
        assert!(lemma_check(&a, &b2, 10).unwrap());
        // empty A never triggers
        assert!(!lemma_check(&BTreeSet::new(), &b, 10).unwrap());
        // oversized disclosure is a metadata error
        assert!(lemma_check(&a, &vecs(&["1", "2", "3"]), 2).is_err());
    }

    #[test]
    fn lemma_equals_union_size_form() {
        let a = set(&["p", "q", "r"]);
        let b = vecs(&["q", "s"]);
        let union = a.union(&set(&["q", "s"])).count();
        assert_eq!(lemma_check(&a, &b, 3).unwrap(), union > 3);
        assert_eq!(lemma_check(&a, &b, 4).unwrap(), union > 4);
    }

    #[test]
    fn overlap_check_examples() {
        let history = set(&["a", "b"]);
        assert!(overlap_check(&vecs(&["x", "y"]), &history).is_empty());
        assert_eq!(overlap_check(&vecs(&["a", "x"]), &history), set(&["a"]));
        assert_eq!(overlap_check(&vecs(&["a", "b"]), &history), history);
    }

    mod end_to_end {
        use super::*;
        use crate::community::{CommunityState, MapMode};
        use crate::platform::{Mode, PlatformConfig, PlatformState};
        use crate::types::RatingRecord;
        use std::collections::BTreeSet as Set;

        fn rec(user: &str, item: &str, seq: u64) -> RatingRecord {
            RatingRecord {
                user: user.into(),
                item: item.into(),
                rating: 1.0,
                seq,
            }
        }

        /// Owner and one co-member establish a 3-item clique around the
        /// target; the victim's history lives elsewhere on the platform.
        fn scenario(mode: Mode) -> (PlatformState, CommunityState, Chain, EntryStore) {
            let mut platform = PlatformState::new(PlatformConfig {
                mode,
                cluster_size_s: 4,
                disclose_k: 3,
                seed: 5,
            })
            .unwrap();
            let mut records = Vec::new();
            let mut seq = 0;
            let mut buy = |platform: &mut PlatformState, user: &str, item: &str| {
                platform.record_purchase(user, item, 1.0).unwrap();
                records.push(rec(user, item, seq));
                seq += 1;
            };
            // community members m1, m2 co-purchase target + mids pre-inception
            for user in ["m1", "m2"] {
                for item in ["t", "mid1", "mid2"] {
                    buy(&mut platform, user, item);
                }
            }
            // popular pool a1..a6 densely co-purchased by the crowd; the
            // victim's pre-request history covers only a1, a2, leaving four
            // popular candidates that outrank the mids lexicographically
            for item in ["a1", "a2"] {
                buy(&mut platform, "victim", item);
            }
            for user in ["w1", "w2"] {
                for item in ["a1", "a2", "a3", "a4", "a5", "a6"] {
                    buy(&mut platform, user, item);
                }
            }
            let member_records: Vec<RatingRecord> = records
                .iter()
                .filter(|r| ["m1", "m2", "victim"].contains(&r.user.as_str()))
                .cloned()
                .collect();
            let members: Set<String> =
                ["m1", "m2", "victim"].iter().map(|s| s.to_string()).collect();
            let community =
                CommunityState::init_from_histories(members, &member_records, MapMode::Aux, None)
                    .unwrap();
            (platform, community, Chain::default(), EntryStore::default())
        }

        #[test]
        fn criteria_filter_and_modes_differ() {
            let (_, community, _, _) = scenario(Mode::Violating);
            let targets = select_target_items(&community, "victim").unwrap();
            // t, mid1, mid2 are all first-purchase candidates of m1/m2;
            // m1's first purchase is t, so t qualifies; mids are non-first.
            let names: Vec<&str> = targets.iter().map(|t| t.item.as_str()).collect();
            assert_eq!(names, vec!["t"]);
            assert_eq!(targets[0].owner, "m1");
            assert_eq!(targets[0].cluster_at_selection.member_set(), set(&["mid1", "mid2"]));
            // the victim's own first purchase never qualifies
            assert!(!names.contains(&"a1"));
        }

        #[test]
        fn violating_probe_triggers_honest_does_not() {
            for (mode, expect) in [(Mode::Violating, true), (Mode::Honest, false)] {
                let (mut platform, mut community, mut chain, mut store) = scenario(mode);
                commit_stop_request(&mut platform, &mut chain, &mut store, "victim").unwrap();
                let ev = probe_round(
                    &mut platform,
                    &mut community,
                    &mut chain,
                    &mut store,
                    "victim",
                    "t",
                    1,
                )
                .unwrap();
                // violating: scores driven by the victim's pre-request
                // popular history rank a3..a6 ahead of the mids, so B is
                // disjoint from A = {mid1, mid2} and |A\B| = 2 > S - |B| = 1.
                // honest: only post-request data, so B ⊆ {mid1, mid2} = A.
                assert_eq!(ev.lemma_triggered, expect, "mode {:?}", mode);
                assert_eq!(ev.s, 4);
                assert_eq!(ev.a, set(&["mid1", "mid2"]));
                assert!(ev.overlap.is_empty());
                assert_eq!(ev.ledger_refs.len(), 4);
                assert_eq!(chain.verify(), crate::ledger::ChainStatus::Valid);
            }
        }

        #[test]
        fn probe_requires_stop_request() {
            let (mut platform, mut community, mut chain, mut store) = scenario(Mode::Violating);
            assert!(matches!(
                probe_round(
                    &mut platform,
                    &mut community,
                    &mut chain,
                    &mut store,
                    "victim",
                    "t",
                    1
                ),
                Err(Error::NoStopRequest(_))
            ));
        }

        #[test]
        fn success_rate_and_outcome() {
            let (mut platform, mut community, mut chain, mut store) = scenario(Mode::Violating);
            commit_stop_request(&mut platform, &mut chain, &mut store, "victim").unwrap();
            let (m, n) =
                one_round_success_rate(&platform, &community, &chain, &store, "victim").unwrap();
            assert_eq!((m, n), (1, 1));
            let outcome = probe_until_success(
                &mut platform,
                &mut community,
                &mut chain,
                &mut store,
                "victim",
                3,
                11,
            )
            .unwrap();
            assert_eq!(outcome.status, ProbeStatus::ViolationProven);
            assert_eq!(outcome.rounds_used, 1);
        }

        #[test]
        fn evidence_serializes_with_spec_keys() {
            let (mut platform, mut community, mut chain, mut store) = scenario(Mode::Violating);
            commit_stop_request(&mut platform, &mut chain, &mut store, "victim").unwrap();
            let ev = probe_round(
                &mut platform,
                &mut community,
                &mut chain,
                &mut store,
                "victim",
                "t",
                1,
            )
            .unwrap();
            let json = serde_json::to_value(&ev).unwrap();
            for key in [
                "victim",
                "probe",
                "A",
                "B",
                "S",
                "undisclosed",
                "lemma_triggered",
                "overlap",
                "ledger_refs",
                "round",
            ] {
                assert!(json.get(key).is_some(), "missing key {}", key);
            }
        }
    }
}
