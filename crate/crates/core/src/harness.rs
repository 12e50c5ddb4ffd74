//! Experiment driver: dataset preparation, deterministic replay with ledger
//! commitment, end-to-end audits (stop-request, probing, verdict), report
//! tables, and the plaintext-vs-shared similarity benchmark.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::{CommunityState, MapMode, UserGroup};
use crate::error::{Error, Result};
use crate::ingest::{self, RecordFormat};
use crate::judge::{adjudicate, re_execute_detector, verify_evidence, ReExecution, Verdict};
use crate::ledger::{commit, Chain, EntryKind, EntryStore, TransactionEntry};
use crate::mpc::mpc_build_similarity;
use crate::platform::{PlatformConfig, PlatformState};
use crate::probing::{
    commit_stop_request, one_round_success_rate, probe_until_success, select_table_targets,
    select_target_items, ProbeOutcome,
};
use crate::similarity::{build_similarity, histories_from_records};
use crate::types::{ItemId, RatingRecord, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Plaintext,
    Shared,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    /// Real dataset on disk (`user,item,rating,ts`), ratings on a raw scale.
    File {
        path: String,
        format: RecordFormat,
        #[serde(default = "default_raw_max")]
        raw_max: f64,
    },
    /// Generic sparse synthetic dataset with Zipf item popularity.
    Zipf {
        n_users: usize,
        n_items: usize,
        n_records: usize,
        #[serde(default = "default_levels")]
        rating_levels: u32,
        #[serde(default = "default_exponent")]
        zipf_exponent: f64,
        seed: u64,
    },
    /// Structured audit family: a popular pool, per-target item cohorts, a
    /// hub item, and designated victims — built so detection dynamics are
    /// analyzable (see `audit_scenario`).
    Audit { seed: u64 },
}

fn default_raw_max() -> f64 {
    5.0
}
fn default_levels() -> u32 {
    5
}
fn default_exponent() -> f64 {
    1.1
}
fn default_fractions() -> Vec<f64> {
    vec![0.02, 0.05, 0.10, 0.20]
}
fn default_parties() -> usize {
    3
}
fn default_rounds() -> u32 {
    2
}
fn default_backend() -> Backend {
    Backend::Plaintext
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DatasetSource,
    #[serde(default = "default_fractions")]
    pub community_fractions: Vec<f64>,
    #[serde(default)]
    pub community_seed: u64,
    pub platform: PlatformConfig,
    #[serde(default = "default_backend")]
    pub similarity_backend: Backend,
    #[serde(default = "default_parties")]
    pub n_parties: usize,
    #[serde(default = "default_rounds")]
    pub max_probe_rounds: u32,
    /// Fraction of the record stream treated as pre-inception member history
    /// (file/zipf sources; the audit family fixes its own split).
    #[serde(default)]
    pub inception_fraction: f64,
    /// Maintain the evaluation-only community that sees the platform's map.
    #[serde(default)]
    pub maintain_oracle: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.platform.validate()?;
        for f in &self.community_fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::FractionOutOfRange(*f));
            }
        }
        if !(0.0..=1.0).contains(&self.inception_fraction) {
            return Err(Error::FractionOutOfRange(self.inception_fraction));
        }
        if self.max_probe_rounds == 0 {
            return Err(Error::Config("max_probe_rounds must be positive".into()));
        }
        Ok(())
    }
}

/// Audit-family scenario constants.
const N_USERS: usize = 500;
const N_ITEMS: usize = 5000;
const N_POPULAR: usize = 60;
/// Popular items reserved as the universal top-S pool: the lexicographically
/// smallest `CLUSTER_S` popular ids, never purchased by members.
const RESERVED_POOL: usize = 10;
const N_COHORTS: usize = 30;
const MIDS_PER_COHORT: usize = 5;
const N_VICTIMS: usize = 20;
const N_ENRICHERS: usize = 15;
const N_CROWD: usize = 10;

pub struct AuditScenario {
    /// Records before community inception (member histories shared at setup).
    pub pre_inception: Vec<RatingRecord>,
    /// Records replayed after inception (observed by the community).
    pub post_inception: Vec<RatingRecord>,
    pub members: BTreeSet<UserId>,
    pub victims: Vec<UserId>,
    pub declared_users: usize,
    pub declared_items: usize,
}

/// Deterministic-by-seed synthetic family sized for a 500-user, 5000-item
/// universe at sparsity above 0.999.
///
/// Structure: a 60-item popular pool densely co-purchased by a crowd and
/// fillers; 30 cohorts of two members, each buying one dedicated target item
/// first and then five dedicated mid items; victims and enrichers whose first
/// purchase is a unique tail item followed by popular items outside the
/// reserved pool; and a hub item they all buy after inception. Every rating
/// is 1.0 so recommendation scores tie and the top-S cluster is decided by
/// the lexicographic tie rule — which makes the detection dynamics exact:
/// the reserved popular pool wins every recommendation slot for hub and
/// probe purchases, while each target's cluster holds only its five mids.
pub fn audit_scenario(seed: u64) -> AuditScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let popular = |i: usize| format!("i{:04}", i);
    let mid = |c: usize, j: usize| format!("i{:04}", 1000 + c * MIDS_PER_COHORT + j);
    let target = |c: usize| format!("i{:04}", 4000 + c);
    let hub = "i2000".to_string();
    let victim_tail = |v: usize| format!("i{:04}", 3000 + v);
    let enricher_tail = |e: usize| format!("i{:04}", 3500 + e);

    let mut pre: Vec<(UserId, ItemId)> = Vec::new();
    let mut members = BTreeSet::new();
    // cohorts: target first, then the mids
    for c in 0..N_COHORTS {
        for m in 0..2 {
            let user = format!("m{:03}", c * 2 + m);
            members.insert(user.clone());
            pre.push((user.clone(), target(c)));
            for j in 0..MIDS_PER_COHORT {
                pre.push((user.clone(), mid(c, j)));
            }
        }
    }
    // victims and enrichers: unique tail first, then popular items drawn
    // outside the reserved pool
    let draw_populars = |rng: &mut ChaCha8Rng, k: usize| -> Vec<usize> {
        let mut picks: Vec<usize> = (RESERVED_POOL..N_POPULAR).collect();
        picks.shuffle(rng);
        picks.truncate(k);
        picks.sort_unstable();
        picks
    };
    let mut victims = Vec::new();
    for v in 0..N_VICTIMS {
        let user = format!("victim{:02}", v);
        members.insert(user.clone());
        victims.push(user.clone());
        pre.push((user.clone(), victim_tail(v)));
        for p in draw_populars(&mut rng, 4) {
            pre.push((user.clone(), popular(p)));
        }
    }
    let mut enrichers = Vec::new();
    for e in 0..N_ENRICHERS {
        let user = format!("enr{:02}", e);
        members.insert(user.clone());
        enrichers.push(user.clone());
        pre.push((user.clone(), enricher_tail(e)));
        for p in draw_populars(&mut rng, 3) {
            pre.push((user.clone(), popular(p)));
        }
    }
    // crowd: every popular item, making the whole pool pairwise similar
    for w in 0..N_CROWD {
        let user = format!("crowd{:03}", w);
        for p in 0..N_POPULAR {
            pre.push((user.clone(), popular(p)));
        }
    }
    // fillers: one popular purchase each, padding the user universe
    let n_fillers = N_USERS - N_CROWD - members.len();
    for f in 0..n_fillers {
        pre.push((format!("fill{:03}", f), popular(f % N_POPULAR)));
    }
    // post-inception: enrichers seed the hub's cluster with the reserved
    // pool before any victim buys the hub
    let mut post: Vec<(UserId, ItemId)> = Vec::new();
    for user in &enrichers {
        post.push((user.clone(), hub.clone()));
    }
    for user in &victims {
        post.push((user.clone(), hub.clone()));
    }
    let to_records = |rows: &[(UserId, ItemId)], base: usize| {
        rows.iter()
            .enumerate()
            .map(|(i, (user, item))| RatingRecord {
                user: user.clone(),
                item: item.clone(),
                rating: 1.0,
                seq: (base + i) as u64,
            })
            .collect::<Vec<_>>()
    };
    AuditScenario {
        post_inception: to_records(&post, pre.len()),
        pre_inception: to_records(&pre, 0),
        members,
        victims,
        declared_users: N_USERS,
        declared_items: N_ITEMS,
    }
}

pub struct PreparedDataset {
    pub records: Vec<RatingRecord>,
    pub inception_index: usize,
    /// Fixed membership (audit family); otherwise sampled per fraction.
    pub members: Option<BTreeSet<UserId>>,
    pub victims: Vec<UserId>,
    pub declared_users: usize,
    pub declared_items: usize,
}

pub fn prepare_dataset(config: &ExperimentConfig) -> Result<PreparedDataset> {
    match &config.source {
        DatasetSource::File {
            path,
            format,
            raw_max,
        } => {
            let bytes = std::fs::read(path)?;
            let records = ingest::normalize_ratings(ingest::parse_records(&bytes, *format)?, *raw_max)?;
            let stats = ingest::sparsity_stats(&records)?;
            let inception_index =
                (config.inception_fraction * records.len() as f64).round() as usize;
            Ok(PreparedDataset {
                inception_index,
                members: None,
                victims: Vec::new(),
                declared_users: stats.n_users,
                declared_items: stats.n_items,
                records,
            })
        }
        DatasetSource::Zipf {
            n_users,
            n_items,
            n_records,
            rating_levels,
            zipf_exponent,
            seed,
        } => {
            let records = ingest::synthesize_dataset(
                *n_users,
                *n_items,
                *n_records,
                *rating_levels,
                *zipf_exponent,
                *seed,
            )?;
            let inception_index =
                (config.inception_fraction * records.len() as f64).round() as usize;
            Ok(PreparedDataset {
                inception_index,
                members: None,
                victims: Vec::new(),
                declared_users: *n_users,
                declared_items: *n_items,
                records,
            })
        }
        DatasetSource::Audit { seed } => {
            let scenario = audit_scenario(*seed);
            let inception_index = scenario.pre_inception.len();
            let mut records = scenario.pre_inception;
            records.extend(scenario.post_inception);
            Ok(PreparedDataset {
                records,
                inception_index,
                members: Some(scenario.members),
                victims: scenario.victims,
                declared_users: scenario.declared_users,
                declared_items: scenario.declared_items,
            })
        }
    }
}

/// Everything one replay produces; ready for probing, reporting, or judging.
pub struct Session {
    pub platform: PlatformState,
    pub community: CommunityState,
    pub oracle: Option<CommunityState>,
    pub chain: Chain,
    pub store: EntryStore,
    pub victims: Vec<UserId>,
    pub config: ExperimentConfig,
}

fn commit_purchase_event(
    chain: &mut Chain,
    store: &mut EntryStore,
    user: &str,
    item: &str,
    rating: f64,
    seq: u64,
    disclosed: &[ItemId],
) -> Result<()> {
    let purchase = TransactionEntry {
        kind: EntryKind::Purchase,
        buyer: user.to_owned(),
        item_id: item.to_owned(),
        rate: rating,
        seq,
        payload: Vec::new(),
    };
    let disclosure = TransactionEntry {
        kind: EntryKind::Disclosure,
        buyer: user.to_owned(),
        item_id: item.to_owned(),
        rate: rating,
        seq,
        payload: disclosed.to_vec(),
    };
    chain.append_block(vec![commit(&purchase)?, commit(&disclosure)?]);
    store.push(purchase);
    store.push(disclosure);
    Ok(())
}

/// Replay the dataset: pre-inception records build the platform and the
/// members' shared histories; at inception the community (and optionally the
/// oracle twin) is initialized; every post-inception purchase is committed
/// to the ledger and member purchases are observed by the community.
pub fn run_replay(config: &ExperimentConfig, fraction: f64) -> Result<Session> {
    config.validate()?;
    let prepared = prepare_dataset(config)?;
    let members = match &prepared.members {
        Some(m) => m.clone(),
        None => {
            ingest::sample_community(&prepared.records, fraction, config.community_seed)?.members
        }
    };
    let mut platform = PlatformState::new(config.platform.clone())?;
    let mut chain = Chain::default();
    let mut store = EntryStore::default();
    let (pre, post) = prepared.records.split_at(prepared.inception_index);
    for rec in pre {
        let disclosure = platform.record_purchase(&rec.user, &rec.item, rec.rating)?;
        commit_purchase_event(
            &mut chain,
            &mut store,
            &rec.user,
            &rec.item,
            rec.rating,
            disclosure.trigger_seq,
            &disclosure.items,
        )?;
    }
    let member_pre: Vec<RatingRecord> = pre
        .iter()
        .filter(|r| members.contains(&r.user))
        .cloned()
        .collect();
    let initial_map = match config.similarity_backend {
        Backend::Plaintext => None,
        Backend::Shared => Some(mpc_build_similarity(
            &histories_from_records(&member_pre),
            config.n_parties,
            config.community_seed,
        )?),
    };
    let mut community =
        CommunityState::init_from_histories(members.clone(), &member_pre, MapMode::Aux, initial_map)?;
    let mut oracle = if config.maintain_oracle {
        Some(CommunityState::init_from_histories(
            members.clone(),
            &member_pre,
            MapMode::Mirror,
            Some(platform.real_map.clone()),
        )?)
    } else {
        None
    };
    for rec in post {
        let disclosure = platform.record_purchase(&rec.user, &rec.item, rec.rating)?;
        commit_purchase_event(
            &mut chain,
            &mut store,
            &rec.user,
            &rec.item,
            rec.rating,
            disclosure.trigger_seq,
            &disclosure.items,
        )?;
        if members.contains(&rec.user) {
            community.on_member_purchase(
                &rec.user,
                &rec.item,
                rec.rating,
                disclosure.trigger_seq,
                &disclosure.items,
            )?;
            if let Some(oracle) = oracle.as_mut() {
                oracle.set_map(platform.real_map.clone());
                oracle.on_member_purchase(
                    &rec.user,
                    &rec.item,
                    rec.rating,
                    disclosure.trigger_seq,
                    &disclosure.items,
                )?;
            }
        }
    }
    Ok(Session {
        platform,
        community,
        oracle,
        chain,
        store,
        victims: prepared.victims,
        config: config.clone(),
    })
}

/// Result of one full audit of a victim: the probing outcome, the judge's
/// verdict over all produced evidence, and the judge's re-execution of the
/// detector from the committed community export.
pub struct AuditResult {
    pub outcome: ProbeOutcome,
    pub verdict: Verdict,
    pub re_execution: ReExecution,
}

/// Stop-request, committed state export, seeded probing, then judgment.
pub fn run_audit(session: &mut Session, victim: &str, probe_seed: u64) -> Result<AuditResult> {
    commit_stop_request(
        &mut session.platform,
        &mut session.chain,
        &mut session.store,
        victim,
    )?;
    let export_entry = TransactionEntry {
        kind: EntryKind::StateExport,
        buyer: victim.to_owned(),
        item_id: String::new(),
        rate: 0.0,
        seq: session.platform.next_seq(),
        payload: vec![serde_json::to_string(&session.community)?],
    };
    let export_commitment = commit(&export_entry)?;
    session.chain.append_block(vec![export_commitment]);
    session.store.push(export_entry.clone());
    let outcome = probe_until_success(
        &mut session.platform,
        &mut session.community,
        &mut session.chain,
        &mut session.store,
        victim,
        session.config.max_probe_rounds,
        probe_seed,
    )?;
    let s = session.config.platform.cluster_size_s;
    let basis = outcome
        .evidences
        .iter()
        .enumerate()
        .map(|(i, ev)| verify_evidence(i, ev, &session.chain, &session.store, s))
        .collect();
    let verdict = adjudicate(basis, s);
    let re_execution =
        re_execute_detector(&export_entry, &export_commitment, victim, &outcome.evidences, s)?;
    Ok(AuditResult {
        outcome,
        verdict,
        re_execution,
    })
}

/// Members classified group one (members without observations are skipped).
pub fn group_one_members(community: &CommunityState) -> Vec<UserId> {
    community
        .members
        .iter()
        .filter(|m| matches!(community.classify_user(m), Ok(UserGroup::GroupOne)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let fmt_row = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{:<width$}", c, width = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("# {}\n{}\n", self.name, fmt_row(&self.headers));
        for row in &self.rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }
}

fn pct(num: usize, den: usize) -> String {
    if den == 0 {
        "n/a".into()
    } else {
        format!("{:.1}%", 100.0 * num as f64 / den as f64)
    }
}

/// Target items whose auxiliary cluster equals the oracle (real-map) cluster,
/// plus average cluster sizes.
pub fn table_cluster_agreement(aux: &CommunityState, oracle: &CommunityState) -> ReportTable {
    let targets = select_table_targets(aux);
    let mut same = 0usize;
    let mut aux_sizes = 0usize;
    let mut oracle_sizes = 0usize;
    let mut same_sizes = 0usize;
    for t in &targets {
        let aux_members = t.cluster_at_selection.member_set();
        let oracle_members = oracle
            .clusters
            .get(&t.item)
            .map(|c| c.member_set())
            .unwrap_or_default();
        aux_sizes += aux_members.len();
        oracle_sizes += oracle_members.len();
        if aux_members == oracle_members {
            same += 1;
            same_sizes += aux_members.len();
        }
    }
    let avg = |total: usize, n: usize| {
        if n == 0 {
            "n/a".to_string()
        } else {
            format!("{:.1}", total as f64 / n as f64)
        }
    };
    ReportTable {
        name: "cluster-agreement".into(),
        headers: vec![
            "target_items".into(),
            "same_clusters".into(),
            "same_pct".into(),
            "avg_aux_size".into(),
            "avg_real_size".into(),
            "avg_size_same_only".into(),
        ],
        rows: vec![vec![
            targets.len().to_string(),
            same.to_string(),
            pct(same, targets.len()),
            avg(aux_sizes, targets.len()),
            avg(oracle_sizes, targets.len()),
            avg(same_sizes, same),
        ]],
    }
}

/// Share of classifiable members in group one, with history-length stats of
/// the group-one population.
pub fn table_group_proportions(community: &CommunityState) -> ReportTable {
    let mut classified = 0usize;
    let mut ones: Vec<usize> = Vec::new();
    for member in &community.members {
        match community.classify_user(member) {
            Ok(UserGroup::GroupOne) => {
                classified += 1;
                ones.push(community.histories.get(member).map_or(0, |h| h.len()));
            }
            Ok(UserGroup::GroupTwo) => classified += 1,
            Err(_) => {}
        }
    }
    let (min, max, avg) = if ones.is_empty() {
        ("n/a".into(), "n/a".into(), "n/a".to_string())
    } else {
        (
            ones.iter().min().unwrap().to_string(),
            ones.iter().max().unwrap().to_string(),
            format!("{:.1}", ones.iter().sum::<usize>() as f64 / ones.len() as f64),
        )
    };
    ReportTable {
        name: "groups".into(),
        headers: vec![
            "classified_members".into(),
            "group_one".into(),
            "group_one_pct".into(),
            "min_len".into(),
            "max_len".into(),
            "avg_len".into(),
        ],
        rows: vec![vec![
            classified.to_string(),
            ones.len().to_string(),
            pct(ones.len(), classified),
            min,
            max,
            avg,
        ]],
    }
}

/// Mean single-round detection rate treating every group-one member as the
/// victim, reported both per-victim-averaged and pooled.
pub fn table_success_rate(session: &Session) -> Result<ReportTable> {
    let victims = group_one_members(&session.community);
    let mut per_victim_rates = Vec::new();
    let mut pooled_m = 0usize;
    let mut pooled_n = 0usize;
    for victim in &victims {
        match one_round_success_rate(
            &session.platform,
            &session.community,
            &session.chain,
            &session.store,
            victim,
        ) {
            Ok((m, n)) => {
                per_victim_rates.push(m as f64 / n as f64);
                pooled_m += m;
                pooled_n += n;
            }
            Err(Error::NoTargets(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let mean = if per_victim_rates.is_empty() {
        "n/a".to_string()
    } else {
        format!(
            "{:.3}",
            per_victim_rates.iter().sum::<f64>() / per_victim_rates.len() as f64
        )
    };
    Ok(ReportTable {
        name: "success-rate".into(),
        headers: vec![
            "group_one_victims".into(),
            "mean_rate".into(),
            "pooled_success".into(),
            "pooled_trials".into(),
            "pooled_rate".into(),
        ],
        rows: vec![vec![
            per_victim_rates.len().to_string(),
            mean,
            pooled_m.to_string(),
            pooled_n.to_string(),
            pct(pooled_m, pooled_n),
        ]],
    })
}

/// Share of victim-selected probing items whose cluster is disjoint from the
/// victim's purchase-history cluster.
pub fn table_disjointness(community: &CommunityState) -> Result<ReportTable> {
    let victims = group_one_members(community);
    let mut disjoint = 0usize;
    let mut total = 0usize;
    for victim in &victims {
        let history_cluster = community.history_cluster(victim)?;
        for target in select_target_items(community, victim)? {
            total += 1;
            let members = target.cluster_at_selection.member_set();
            let overlaps = members.iter().any(|m| history_cluster.contains(m))
                || history_cluster.contains(&target.item);
            if !overlaps {
                disjoint += 1;
            }
        }
    }
    Ok(ReportTable {
        name: "disjointness".into(),
        headers: vec![
            "victims".into(),
            "probing_items".into(),
            "disjoint".into(),
            "disjoint_pct".into(),
        ],
        rows: vec![vec![
            victims.len().to_string(),
            total.to_string(),
            disjoint.to_string(),
            pct(disjoint, total),
        ]],
    })
}

/// Wall-clock comparison of the plaintext and shared similarity builders on
/// the members' records, with the entrywise deviation between the two maps.
pub fn bench_mpc(config: &ExperimentConfig, fraction: f64) -> Result<ReportTable> {
    let prepared = prepare_dataset(config)?;
    let members = match &prepared.members {
        Some(m) => m.clone(),
        None => {
            ingest::sample_community(&prepared.records, fraction, config.community_seed)?.members
        }
    };
    let member_records: Vec<RatingRecord> = prepared
        .records
        .iter()
        .filter(|r| members.contains(&r.user))
        .cloned()
        .collect();
    let histories = histories_from_records(&member_records);
    let t0 = Instant::now();
    let plain = build_similarity(&histories);
    let plain_ms = t0.elapsed().as_secs_f64() * 1000.0;
    let t1 = Instant::now();
    let shared = mpc_build_similarity(&histories, config.n_parties, config.community_seed)?;
    let shared_ms = t1.elapsed().as_secs_f64() * 1000.0;
    Ok(ReportTable {
        name: "bench-mpc".into(),
        headers: vec![
            "member_records".into(),
            "pairs".into(),
            "plaintext_ms".into(),
            "shared_ms".into(),
            "slowdown".into(),
            "max_deviation".into(),
        ],
        rows: vec![vec![
            member_records.len().to_string(),
            plain.pair_count().to_string(),
            format!("{:.1}", plain_ms),
            format!("{:.1}", shared_ms),
            if plain_ms > 0.0 {
                format!("{:.1}x", shared_ms / plain_ms)
            } else {
                "n/a".into()
            },
            format!("{:.2e}", shared.max_abs_diff(&plain)),
        ]],
    })
}

/// Random lemma instance generator shared by property and acceptance tests:
/// item sets of size ≤ 20 with S ≥ |B|.
pub fn random_lemma_instance(
    rng: &mut ChaCha8Rng,
) -> (BTreeSet<ItemId>, Vec<ItemId>, usize) {
    let universe: Vec<ItemId> = (0..40).map(|i| format!("x{:02}", i)).collect();
    let a_len = rng.gen_range(0..=20);
    let b_len = rng.gen_range(0..=20);
    let mut pool = universe.clone();
    pool.shuffle(rng);
    let a: BTreeSet<ItemId> = pool.iter().take(a_len).cloned().collect();
    pool.shuffle(rng);
    let b: Vec<ItemId> = pool.iter().take(b_len).cloned().collect();
    let s = rng.gen_range(b_len..=b_len + 15);
    (a, b, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::Mode;
    use crate::probing::ProbeStatus;

    fn audit_config(mode: Mode, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            source: DatasetSource::Audit { seed },
            community_fractions: vec![1.0],
            community_seed: seed,
            platform: PlatformConfig {
                mode,
                cluster_size_s: 10,
                disclose_k: 7,
                seed,
            },
            similarity_backend: Backend::Plaintext,
            n_parties: 3,
            max_probe_rounds: 2,
            inception_fraction: 0.0,
            maintain_oracle: false,
        }
    }

    #[test]
    fn audit_scenario_shape() {
        let s = audit_scenario(1);
        let total = s.pre_inception.len() + s.post_inception.len();
        let users: BTreeSet<&str> = s
            .pre_inception
            .iter()
            .chain(&s.post_inception)
            .map(|r| r.user.as_str())
            .collect();
        assert_eq!(users.len(), s.declared_users);
        let sparsity =
            crate::ingest::sparsity_for(s.declared_users, s.declared_items, total);
        assert!(sparsity >= 0.999, "sparsity {}", sparsity);
        assert_eq!(s.members.len(), 95);
        assert_eq!(s.victims.len(), 20);
        // determinism
        let again = audit_scenario(1);
        assert_eq!(s.pre_inception, again.pre_inception);
        assert_eq!(s.post_inception, again.post_inception);
    }

    #[test]
    fn violating_audit_replay_detects_and_convicts() {
        let config = audit_config(Mode::Violating, 7);
        let mut session = run_replay(&config, 1.0).unwrap();
        // every target's cluster is the five cohort mids, untouched by growth
        let victim = session.victims[0].clone();
        let targets = select_target_items(&session.community, &victim).unwrap();
        assert_eq!(targets.len(), 30);
        for t in &targets {
            assert!(t.item.starts_with("i4"));
            assert_eq!(t.cluster_at_selection.len(), 5);
            assert!(!t.cluster_at_selection.has_grown_member());
        }
        // the designated victims classify group one
        let ones = group_one_members(&session.community);
        for v in &session.victims {
            assert!(ones.contains(v), "{} not group one", v);
        }
        let result = run_audit(&mut session, &victim, 99).unwrap();
        assert_eq!(result.outcome.status, ProbeStatus::ViolationProven);
        assert_eq!(result.outcome.rounds_used, 1);
        assert_eq!(
            result.verdict.decision,
            crate::judge::Decision::Violation
        );
        assert!(result.re_execution.evidences[0].is_target);
    }

    #[test]
    fn honest_audit_replay_never_convicts() {
        let config = audit_config(Mode::Honest, 7);
        let mut session = run_replay(&config, 1.0).unwrap();
        for (i, victim) in session.victims.clone().iter().enumerate() {
            let result = run_audit(&mut session, victim, i as u64).unwrap();
            assert_ne!(result.outcome.status, ProbeStatus::ViolationProven);
            assert_eq!(
                result.verdict.decision,
                crate::judge::Decision::NotProven,
                "victim {}",
                victim
            );
        }
    }

    #[test]
    fn success_rate_table_is_perfect_on_violating_audit() {
        let config = audit_config(Mode::Violating, 3);
        let session = run_replay(&config, 1.0).unwrap();
        let table = table_success_rate(&session).unwrap();
        assert_eq!(table.rows[0][1], "1.000");
    }

    #[test]
    fn oracle_agreement_and_disjointness_are_total_on_audit_family() {
        let mut config = audit_config(Mode::Violating, 5);
        config.maintain_oracle = true;
        let session = run_replay(&config, 1.0).unwrap();
        let oracle = session.oracle.as_ref().unwrap();
        let agreement = table_cluster_agreement(&session.community, oracle);
        assert_eq!(agreement.rows[0][0], "30");
        assert_eq!(agreement.rows[0][2], "100.0%");
        let disjoint = table_disjointness(&session.community).unwrap();
        let row = &disjoint.rows[0];
        assert_eq!(row[3], "100.0%");
        let groups = table_group_proportions(&session.community);
        assert!(groups.rows[0][1].parse::<usize>().unwrap() >= 20);
    }

    #[test]
    fn replay_is_deterministic() {
        let config = audit_config(Mode::Violating, 11);
        let a = run_replay(&config, 1.0).unwrap();
        let b = run_replay(&config, 1.0).unwrap();
        assert_eq!(a.chain.head_hash(), b.chain.head_hash());
        assert_eq!(
            serde_json::to_string(&a.community).unwrap(),
            serde_json::to_string(&b.community).unwrap()
        );
    }

    #[test]
    fn zipf_replay_keeps_incremental_maps_consistent() {
        let config = ExperimentConfig {
            source: DatasetSource::Zipf {
                n_users: 40,
                n_items: 120,
                n_records: 300,
                rating_levels: 5,
                zipf_exponent: 1.1,
                seed: 2,
            },
            community_fractions: vec![0.25],
            community_seed: 2,
            platform: PlatformConfig::default(),
            similarity_backend: Backend::Plaintext,
            n_parties: 3,
            max_probe_rounds: 2,
            inception_fraction: 0.5,
            maintain_oracle: true,
        };
        let session = run_replay(&config, 0.25).unwrap();
        assert!(session
            .platform
            .real_map
            .max_abs_diff(&session.platform.recompute_real_map())
            < 1e-12);
        assert!(session
            .community
            .map
            .max_abs_diff(&session.community.recompute_map())
            < 1e-12);
        assert_eq!(session.chain.verify(), crate::ledger::ChainStatus::Valid);
    }

    #[test]
    fn shared_backend_replay_close_to_plaintext() {
        let mut config = audit_config(Mode::Violating, 1);
        config.similarity_backend = Backend::Shared;
        // shrink work: shared inception map only
        let shared = run_replay(&config, 1.0).unwrap();
        config.similarity_backend = Backend::Plaintext;
        let plain = run_replay(&config, 1.0).unwrap();
        assert!(shared.community.map.max_abs_diff(&plain.community.map) <= 1e-4);
    }

    #[test]
    fn bench_table_reports_equivalence() {
        let mut config = audit_config(Mode::Violating, 1);
        config.similarity_backend = Backend::Shared;
        let table = bench_mpc(&config, 1.0).unwrap();
        let deviation: f64 = table.rows[0][5].parse().unwrap();
        assert!(deviation <= 1e-4);
    }

    #[test]
    fn report_table_rendering() {
        let table = ReportTable {
            name: "demo".into(),
            headers: vec!["a".into(), "long_header".into()],
            rows: vec![vec!["1".into(), "2".into()]],
        };
        assert_eq!(table.to_csv(), "a,long_header\n1,2\n");
        assert!(table.to_text().contains("# demo"));
    }

    #[test]
    fn config_round_trips_spec_keys() {
        let json = r#"{
            "source": {"kind": "audit", "seed": 4},
            "platform": {"mode":"honest","cluster_size_S":10,"disclose_k":7,"seed":4}
        }"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.platform.cluster_size_s, 10);
        assert_eq!(config.community_fractions, vec![0.02, 0.05, 0.10, 0.20]);
        assert_eq!(config.max_probe_rounds, 2);
        assert!(config.validate().is_ok());
    }
}
