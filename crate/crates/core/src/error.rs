use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distance matrix is not a metric: {reason} at ({i}, {j}, {k})")]
    NotMetric {
        i: usize,
        j: usize,
        k: usize,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("orbit request of {requested} steps exceeds the system horizon {horizon}")]
    HorizonExceeded { requested: usize, horizon: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("order n = {n} outside the table range 1..={n_max}")]
    OrderOutOfRange { n: usize, n_max: usize },

    #[error("scale eps = {0} must lie strictly inside (0, 1)")]
    ScaleOutOfRange(f64),

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("potential `{0}` is not registered with this orbit table")]
    UnknownPotential(String),

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("dictionary member rejected: certificate |{certificate}| exceeds tolerance {tolerance}")]
    MembershipRejected { certificate: f64, tolerance: f64 },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("config error: {0}")]
    Config(String),
}
