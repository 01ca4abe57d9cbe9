use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex count must be at least 1")]
    EmptyGraph,

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("unknown graph generator `{0}`")]
    UnknownGenerator(String),

    #[error("arc ({from}, {to}) lies outside a graph on {n} vertices")]
    ArcOutOfRange { from: usize, to: usize, n: usize },

    #[error("cannot take the union of an empty list of graphs")]
    EmptyUnion,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("weight matrix violates column stochasticity: {0}")]
    InvalidWeights(String),

    #[error("agent {agent} has weight y = {value:e}, at or below the numeric floor")]
    DegenerateWeight { agent: usize, value: f64 },

    #[error("total weight {sum} deviates from n = {n} by more than {tolerance:e}")]
    MassViolation { sum: f64, n: usize, tolerance: f64 },

    #[error("empty range: {0}")]
    EmptyRange(String),

    #[error("stepsize must be finite and nonnegative, got {0}")]
    InvalidStepsize(f64),

    #[error("fixed-horizon stepsize queried at t = {t} >= T = {horizon}")]
    PastHorizon { t: usize, horizon: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("optimal value is unknown for this objective")]
    UnknownOptimum,

    #[error("agent {agent} left the bounding box at t = {t}: {detail}")]
    LeftBox { agent: usize, t: usize, detail: String },

    #[error("invalid bound inputs: {0}")]
    InvalidBoundInputs(String),

    #[error("rate fit needs at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
