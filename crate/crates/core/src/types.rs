//! Shared domain identifiers and the replay record atom.

use serde::{Deserialize, Serialize};

pub type UserId = String;
pub type ItemId = String;

/// Logical replay position. Unique across a dataset; purchases and stop
/// requests share one counter during replay.
pub type Seq = u64;

/// One timestamped purchase event after normalization: rating in (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub seq: Seq,
}
