use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain has no states")]
    Empty,

    #[error("declared n = {declared} but {found} {what} were given")]
    SizeMismatch {
        declared: usize,
        found: usize,
        what: &'static str,
    },

    #[error("row {row} sums to {sum} (deviation exceeds 1e-12)")]
    RowSum { row: usize, sum: f64 },

    #[error("row {row} has negative or non-finite entry {value} at column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} references state {index} but n = {n}")]
    BadIndex { row: usize, index: usize, n: usize },

    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),

    #[error("unknown state {0:?}")]
    UnknownState(String),

    #[error("distribution is not a probability vector: {0}")]
    BadDistribution(String),

    #[error("stationary distribution is not unique")]
    NotUnique,

    #[error("horizon {horizon} too small: {detail}")]
    HorizonTooSmall { horizon: usize, detail: String },

    #[error("state {to} is not hit with probability 1 from state {from}")]
    Unreachable { from: usize, to: usize },

    #[error("sample path exceeded the cap of {cap} steps")]
    CapExceeded { cap: u64 },

    #[error("chain is not reversible")]
    NotReversible,

    #[error("chain is not irreducible on the class of state {0}")]
    NotIrreducible(usize),

    #[error("start state {0} lies in the killing set")]
    StateInU(usize),

    #[error("spectral tail certificate unavailable (largest nontrivial eigenvalue modulus is 1)")]
    Uncertifiable,

    #[error("mixture weights invalid: {0}")]
    BadWeights(String),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("horizon t = {t} must be at least {min}")]
    BadHorizon { t: usize, min: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("self loop at vertex {0}")]
    SelfLoop(usize),

    #[error("bound not applicable: {0}")]
    NotApplicable(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
