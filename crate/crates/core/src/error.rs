use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "slot ({identity}, {camera}) outside table of {identities} identities x {cameras} cameras"
    )]
    SlotOutOfRange {
        identity: usize,
        camera: usize,
        identities: usize,
        cameras: usize,
    },

    #[error("no initialized pooled-table slot for identity {0}")]
    NoPositive(usize),

    #[error("no eligible negative for identity {0}")]
    NoNegative(usize),

    #[error("need {needed} distinct identities, only {available} available")]
    NotEnoughIdentities { needed: usize, available: usize },

    #[error("triplet batch needs at least two identities")]
    SingleIdentityBatch,

    #[error("cannot build a {p}x{k} batch: {reason}")]
    BatchConstruction { p: usize, k: usize, reason: String },

    #[error("no triplet could be constructed for this batch")]
    NoTriplets,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("vector is not L2-normalized (norm {0})")]
    NotNormalized(f64),

    #[error("no center for identity {0}")]
    MissingCenter(usize),

    #[error("triplet record violates identity constraint: {0}")]
    InvalidTriplet(String),

    #[error("query {query} has no positive gallery entry after exclusion")]
    NoQueryPositive { query: usize },

    #[error("identity {identity} of query {query} is absent from the gallery")]
    QueryIdentityMissing { query: usize, identity: usize },

    #[error("identity {0} is observed under a single camera")]
    SingleCamera(usize),

    #[error("data has zero variance; projection undefined")]
    RankDeficient,

    #[error("activation cache does not match the current parameters")]
    StaleCache,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
