use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("item {0:?} is present in only one of the two clusterings")]
    MissingItem(String),
    #[error("item {0:?} appears more than once")]
    DuplicateItem(String),
    #[error("item {id:?} has weight {weight}, weights must be positive and finite")]
    NonPositiveWeight { id: String, weight: f64 },
    #[error("item {id:?} has weight {base} in the base source but {exp} in the exp source")]
    WeightMismatch { id: String, base: f64, exp: f64 },
    #[error("the item population is empty")]
    EmptyPopulation,
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("cannot lift a metric over an empty item set")]
    EmptySet,
    #[error("no equivalence answer for pair ({i:?}, {j:?})")]
    OracleIncomplete { i: String, j: String },
    #[error("({i:?}, {j:?}) is not a pair: {j:?} is in neither Base({i:?}) nor Exp({i:?})")]
    NotAPair { i: String, j: String },
    #[error("stratum {0} has draws but no pairs to draw from")]
    EmptyStratum(String),
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
    #[error("pair ({i:?}, {j:?}) is not in the sample")]
    UnknownPair { i: String, j: String },
    #[error("conflicting verdicts for pair ({i:?}, {j:?})")]
    ConflictingVerdicts { i: String, j: String },
    #[error("class {0} has no usable judged draws")]
    UnestimableClass(String),
    #[error("delta precision needs a single-stratum sample over all pairs")]
    StratifiedSampleUnsupported,
    #[error("sample does not cover the population: {0}")]
    SampleCoverage(String),
    #[error("empty sample")]
    EmptySample,
    #[error("instance has {pairs} pairs, more than the limit of {limit}")]
    InstanceTooLarge { pairs: u64, limit: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("truth table is not a partition: {0}")]
    InvalidTruth(String),
    #[error("unknown attribute key {0:?}")]
    UnknownAttributeKey(String),
    #[error("session incomplete: missing {0}")]
    SessionIncomplete(PathBuf),
    #[error("cannot bind {addr}: {source}")]
    PortUnavailable {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("oracle paths disagree on {metric}: {left} vs {right}")]
    OracleMismatch {
        metric: String,
        left: f64,
        right: f64,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
