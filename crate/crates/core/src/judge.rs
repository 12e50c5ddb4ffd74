//! Independent verification of submitted evidence: ledger integrity,
//! commitment validation, re-execution of the detection logic, and the final
//! verdict.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::community::CommunityState;
use crate::error::{Error, Result};
use crate::ledger::{verify_disclosure, Chain, ChainStatus, Commitment, EntryKind, EntryStore, TransactionEntry};
use crate::probing::{lemma_check, select_target_items, Evidence};
use crate::types::{ItemId, UserId};

/// Outcome of the four ordered checks for one piece of evidence. A failed
/// check short-circuits the rest and is named in `failed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub evidence: usize,
    pub chain_valid: bool,
    pub refs_valid: bool,
    pub lemma_consistent: bool,
    pub snapshot_precedes_probe: bool,
    pub failed: Option<String>,
    /// Violation test recomputed from the committed snapshot and disclosure.
    pub lemma_triggered: bool,
    /// Corroborating overlap claimed by the evidence (never conclusive).
    pub overlap_recorded: bool,
}

impl CheckResult {
    pub fn all_pass(&self) -> bool {
        self.failed.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Violation,
    NotProven,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub basis: Vec<CheckResult>,
    #[serde(rename = "metadata_S")]
    pub metadata_s: usize,
}

fn fail(evidence: usize, stage: &str, done: [bool; 3]) -> CheckResult {
    CheckResult {
        evidence,
        chain_valid: done[0],
        refs_valid: done[1],
        lemma_consistent: done[2],
        snapshot_precedes_probe: false,
        failed: Some(stage.to_owned()),
        lemma_triggered: false,
        overlap_recorded: false,
    }
}

/// Run the ordered checks: (1) the chain verifies, (2) every ledger
/// reference resolves to cleartext matching its commitment, with a
/// stop-request predating the probe purchase, (3) the violation test
/// recomputed from committed data matches the claim, (4) the cluster
/// snapshot was committed before the probe purchase.
pub fn verify_evidence(
    evidence_index: usize,
    evidence: &Evidence,
    chain: &Chain,
    store: &EntryStore,
    metadata_s: usize,
) -> CheckResult {
    if chain.verify() != ChainStatus::Valid {
        return fail(evidence_index, "chain", [false, false, false]);
    }
    let mut stop: Option<&TransactionEntry> = None;
    let mut purchase: Option<(u64, &TransactionEntry)> = None;
    let mut disclosure: Option<&TransactionEntry> = None;
    let mut snapshot: Option<(u64, &TransactionEntry)> = None;
    for &pos in &evidence.ledger_refs {
        let Ok(entry) = store.get_transaction(chain, pos) else {
            return fail(evidence_index, "refs", [true, false, false]);
        };
        match entry.kind {
            EntryKind::StopRequest if entry.buyer == evidence.victim => stop = Some(entry),
            EntryKind::Purchase
                if entry.buyer == evidence.victim && entry.item_id == evidence.probe =>
            {
                purchase = Some((pos, entry))
            }
            EntryKind::Disclosure
                if entry.buyer == evidence.victim && entry.item_id == evidence.probe =>
            {
                disclosure = Some(entry)
            }
            EntryKind::ClusterSnapshot if entry.item_id == evidence.probe => {
                snapshot = Some((pos, entry))
            }
            _ => {}
        }
    }
    let (Some(stop), Some((purchase_pos, purchase)), Some(disclosure), Some((snapshot_pos, snapshot))) =
        (stop, purchase, disclosure, snapshot)
    else {
        return fail(evidence_index, "refs", [true, false, false]);
    };
    if stop.seq >= purchase.seq {
        return fail(evidence_index, "refs", [true, false, false]);
    }
    let committed_a: BTreeSet<ItemId> = snapshot.payload.iter().cloned().collect();
    let recomputed = match lemma_check(&committed_a, &disclosure.payload, metadata_s) {
        Ok(v) => v,
        Err(_) => return fail(evidence_index, "lemma", [true, true, false]),
    };
    if recomputed != evidence.lemma_triggered {
        return fail(evidence_index, "lemma", [true, true, false]);
    }
    if snapshot_pos >= purchase_pos {
        return fail(evidence_index, "ordering", [true, true, true]);
    }
    CheckResult {
        evidence: evidence_index,
        chain_valid: true,
        refs_valid: true,
        lemma_consistent: true,
        snapshot_precedes_probe: true,
        failed: None,
        lemma_triggered: recomputed,
        overlap_recorded: !evidence.overlap.is_empty(),
    }
}

/// Violation iff some evidence passed every check and its recomputed
/// violation test is true; overlap alone never convicts.
pub fn adjudicate(basis: Vec<CheckResult>, metadata_s: usize) -> Verdict {
    let decision = if basis.iter().any(|c| c.all_pass() && c.lemma_triggered) {
        Decision::Violation
    } else {
        Decision::NotProven
    };
    Verdict {
        decision,
        basis,
        metadata_s,
    }
}

/// One evidence line of the re-executed detector run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReExecutedEvidence {
    pub probe: ItemId,
    /// Whether the probe passes the target criteria in the committed
    /// community state.
    pub is_target: bool,
    pub lemma_triggered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReExecution {
    pub victim: UserId,
    pub targets: Vec<ItemId>,
    pub evidences: Vec<ReExecutedEvidence>,
}

/// Deterministically recompute the detector's target selection and violation
/// tests from a committed community-state export.
pub fn re_execute_detector(
    export_entry: &TransactionEntry,
    commitment: &Commitment,
    victim: &str,
    evidences: &[Evidence],
    metadata_s: usize,
) -> Result<ReExecution> {
    if export_entry.kind != EntryKind::StateExport || !verify_disclosure(export_entry, commitment)
    {
        return Err(Error::Integrity(
            "community export does not match its commitment".into(),
        ));
    }
    let json = export_entry
        .payload
        .first()
        .ok_or_else(|| Error::Integrity("empty community export".into()))?;
    let community: CommunityState = serde_json::from_str(json)?;
    let targets: Vec<ItemId> = select_target_items(&community, victim)?
        .into_iter()
        .map(|t| t.item)
        .collect();
    let mut re_evidences = Vec::new();
    for evidence in evidences {
        re_evidences.push(ReExecutedEvidence {
            probe: evidence.probe.clone(),
            is_target: targets.contains(&evidence.probe),
            lemma_triggered: lemma_check(&evidence.a, &evidence.b, metadata_s)?,
        });
    }
    Ok(ReExecution {
        victim: victim.to_owned(),
        targets,
        evidences: re_evidences,
    })
}
