use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("rating {value} outside (0, {max}]")]
    RatingOutOfRange { value: f64, max: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("infeasible synthesis: {0}")]
    InfeasibleSynthesis(String),
    #[error("user {user} already purchased item {item}")]
    DuplicatePurchase { user: String, item: String },
    #[error("user {0} has no effective purchase history")]
    EmptyHistory(String),
    #[error("candidate {0} already in history")]
    CandidateInHistory(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("user {0} is not a community member")]
    NotMember(String),
    #[error("user {0} has no observed disclosures")]
    NoObservations(String),
    #[error("no cluster for item {0}")]
    UnknownItem(String),
    #[error("disclosed set size {disclosed} exceeds declared cluster size {cluster_size}")]
    OversizedDisclosure {
        disclosed: usize,
        cluster_size: usize,
    },
    #[error("user {0} has not issued a stop request")]
    NoStopRequest(String),
    #[error("no target items available for victim {0}")]
    NoTargets(String),
    #[error("victim {0} is not a group-one user")]
    NotGroupOne(String),
    #[error("need at least 2 parties, got {0}")]
    TooFewParties(usize),
    #[error("value {0} outside [0, 1]")]
    FixedPointRange(f64),
    #[error("fixed-point capacity exceeded: {0}")]
    FixedPointOverflow(String),
    #[error("ledger position {0} out of range")]
    LedgerIndexOutOfRange(u64),
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
