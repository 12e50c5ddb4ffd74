//! Dataset parsing, normalization, characterization, community sampling and
//! synthetic data generation.
//!
//! Input formats: JSON Lines (`{"user","item","rating","ts"}`) and CSV with
//! header `user,item,rating,ts`. Records are sorted by timestamp, ties broken
//! by (user, item), and assigned replay positions 0..n-1.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RatingRecord, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_records: usize,
    pub sparsity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunitySample {
    pub members: BTreeSet<UserId>,
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
struct RawRow {
    user: String,
    item: String,
    rating: f64,
    ts: u64,
}

fn validate_raw(row: &RawRow, line: usize) -> Result<()> {
    if row.user.is_empty() || row.item.is_empty() {
        return Err(Error::MalformedRow {
            row: line,
            reason: "empty user or item identifier".into(),
        });
    }
    if !row.rating.is_finite() || row.rating <= 0.0 {
        return Err(Error::MalformedRow {
            row: line,
            reason: format!("rating {} not a positive finite number", row.rating),
        });
    }
    Ok(())
}

/// Parse raw records. Ratings are kept on their raw scale; call
/// [`normalize_ratings`] afterwards. Output is sorted by timestamp with
/// (user, item) tie-breaking and `seq` assigned 0..n-1 in that order.
pub fn parse_records(source: &[u8], format: RecordFormat) -> Result<Vec<RatingRecord>> {
    let mut rows: Vec<RawRow> = Vec::new();
    match format {
        RecordFormat::Jsonl => {
            for (idx, line) in source.lines().enumerate() {
                let line = line.map_err(|e| Error::MalformedRow {
                    row: idx + 1,
                    reason: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: RawRow =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                        row: idx + 1,
                        reason: e.to_string(),
                    })?;
                validate_raw(&row, idx + 1)?;
                rows.push(row);
            }
        }
        RecordFormat::Csv => {
            let mut reader = csv::Reader::from_reader(source);
            for (idx, record) in reader.deserialize::<RawRow>().enumerate() {
                let row = record.map_err(|e| Error::MalformedRow {
                    row: idx + 2, // header occupies line 1
                    reason: e.to_string(),
                })?;
                validate_raw(&row, idx + 2)?;
                rows.push(row);
            }
        }
    }
    rows.sort_by(|a, b| {
        a.ts.cmp(&b.ts)
            .then_with(|| a.user.cmp(&b.user))
            .then_with(|| a.item.cmp(&b.item))
    });
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(seq, row)| RatingRecord {
            user: row.user,
            item: row.item,
            rating: row.rating,
            seq: seq as u64,
        })
        .collect())
}

/// Serialize records as JSON Lines with `ts` equal to the replay position,
/// so that `parse_records` round-trips its own output.
pub fn write_jsonl(records: &[RatingRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(
            &serde_json::json!({
                "user": rec.user,
                "item": rec.item,
                "rating": rec.rating,
                "ts": rec.seq,
            })
            .to_string(),
        );
        out.push('\n');
    }
    out
}

/// Divide every rating by `raw_max`, mapping the raw scale onto (0, 1].
pub fn normalize_ratings(records: Vec<RatingRecord>, raw_max: f64) -> Result<Vec<RatingRecord>> {
    if !(raw_max > 0.0) {
        return Err(Error::RatingOutOfRange {
            value: raw_max,
            max: raw_max,
        });
    }
    records
        .into_iter()
        .map(|mut rec| {
            if rec.rating <= 0.0 || rec.rating > raw_max {
                return Err(Error::RatingOutOfRange {
                    value: rec.rating,
                    max: raw_max,
                });
            }
            rec.rating /= raw_max;
            Ok(rec)
        })
        .collect()
}

/// Distinct-count statistics of a record set. Sparsity is computed from the
/// distinct user and item counts actually present in the records.
pub fn sparsity_stats(records: &[RatingRecord]) -> Result<DatasetStats> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let users: BTreeSet<&str> = records.iter().map(|r| r.user.as_str()).collect();
    let items: BTreeSet<&str> = records.iter().map(|r| r.item.as_str()).collect();
    Ok(DatasetStats {
        n_users: users.len(),
        n_items: items.len(),
        n_records: records.len(),
        sparsity: sparsity_for(users.len(), items.len(), records.len()),
    })
}

pub fn sparsity_for(n_users: usize, n_items: usize, n_records: usize) -> f64 {
    let cells = n_users as f64 * n_items as f64;
    if cells == 0.0 {
        0.0
    } else {
        1.0 - n_records as f64 / cells
    }
}

/// Uniform random community of round(fraction * n_users) distinct users,
/// deterministic for a fixed seed.
pub fn sample_community(
    records: &[RatingRecord],
    fraction: f64,
    seed: u64,
) -> Result<CommunitySample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let users: Vec<&str> = {
        let set: BTreeSet<&str> = records.iter().map(|r| r.user.as_str()).collect();
        set.into_iter().collect()
    };
    let size = (fraction * users.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = sample(&mut rng, users.len(), size.min(users.len()))
        .into_iter()
        .map(|i| users[i].to_owned())
        .collect();
    Ok(CommunitySample {
        members,
        fraction,
        seed,
    })
}

/// Synthesize a sparse dataset with Zipf-like item popularity. Lower item
/// indices are more popular. All (user, item) pairs are distinct, ratings are
/// drawn uniformly from {1/levels, ..., 1.0}, and output is byte-stable per
/// seed.
pub fn synthesize_dataset(
    n_users: usize,
    n_items: usize,
    n_records: usize,
    rating_levels: u32,
    zipf_exponent: f64,
    seed: u64,
) -> Result<Vec<RatingRecord>> {
    if n_users == 0 || n_items == 0 || rating_levels == 0 {
        return Err(Error::InfeasibleSynthesis(
            "users, items and rating levels must be positive".into(),
        ));
    }
    if n_records > n_users * n_items {
        return Err(Error::InfeasibleSynthesis(format!(
            "{} records exceed {} x {} cells",
            n_records, n_users, n_items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = Zipf::new(n_items as u64, zipf_exponent)
        .map_err(|e| Error::InfeasibleSynthesis(e.to_string()))?;
    let mut taken: HashSet<(usize, usize)> = HashSet::with_capacity(n_records);
    let mut records = Vec::with_capacity(n_records);
    let mut attempts: usize = 0;
    let max_attempts = n_records.saturating_mul(200).max(10_000);
    while records.len() < n_records && attempts < max_attempts {
        attempts += 1;
        let user = rng.gen_range(0..n_users);
        let rank = zipf.sample(&mut rng) as usize; // 1-based popularity rank
        let item = rank - 1;
        if !taken.insert((user, item)) {
            continue;
        }
        let level = rng.gen_range(1..=rating_levels);
        records.push(RatingRecord {
            user: format!("u{:05}", user),
            item: format!("i{:05}", item),
            rating: level as f64 / rating_levels as f64,
            seq: records.len() as u64,
        });
    }
    // Fill deterministically if rejection sampling stalled near capacity.
    if records.len() < n_records {
        'outer: for user in 0..n_users {
            for item in 0..n_items {
                if records.len() == n_records {
                    break 'outer;
                }
                if taken.insert((user, item)) {
                    let level = rng.gen_range(1..=rating_levels);
                    records.push(RatingRecord {
                        user: format!("u{:05}", user),
                        item: format!("i{:05}", item),
                        rating: level as f64 / rating_levels as f64,
                        seq: records.len() as u64,
                    });
                }
            }
        }
    }
    Ok(records)
}
