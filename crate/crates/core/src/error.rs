use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScrError>;

/// Everything that can go wrong while building, aggregating or allocating a
/// risk tree. Variants name the offending node or matrix entry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScrError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("root `{0}` is not declared in nodes")]
    MissingRoot(String),

    #[error("cycle detected at node `{0}`")]
    Cycle(String),

    #[error("node `{node}` has more than one parent (`{first}`, `{second}`)")]
    MultipleParents {
        node: String,
        first: String,
        second: String,
    },

    #[error("node `{0}` is not reachable from the root")]
    Disconnected(String),

    #[error("matrix order mismatch at `{node}`: expected {expected}, found {found}")]
    MatrixOrderMismatch {
        node: String,
        expected: usize,
        found: usize,
    },

    #[error("internal node `{0}` has no correlation matrix")]
    MissingMatrix(String),

    #[error("matrix attached to `{0}`, which is not an internal node")]
    UnexpectedMatrix(String),

    #[error("asymmetric matrix at `{node}`: entry ({i},{j}) = {upper} but ({j},{i}) = {lower}")]
    AsymmetricMatrix {
        node: String,
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
    },

    #[error("diagonal entry ({i},{i}) of `{node}` is {value}, expected 1")]
    DiagonalNotOne { node: String, i: usize, value: f64 },

    #[error("correlation out of range at `{node}` entry ({i},{j}): {value}")]
    CorrelationOutOfRange {
        node: String,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("negative leaf SCR at `{node}`: {value}")]
    NegativeScr { node: String, value: f64 },

    #[error("negative driver at `{node}`: {value}")]
    NegativeDriver { node: String, value: f64 },

    #[error("non-finite value at `{0}`")]
    NonFinite(String),

    #[error("leaf `{0}` has no scr")]
    MissingScr(String),

    #[error("internal node `{0}` carries an scr; internal values are computed")]
    InternalScr(String),

    #[error("indefinite aggregation at `{node}`: quadratic form is {value}")]
    IndefiniteAggregation { node: String, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot exclude the root `{0}`")]
    ExcludeRoot(String),

    #[error("zero marginal VaR")]
    ZeroMarginalVar,

    #[error("invalid calibration input: {0}")]
    InvalidCalibration(String),

    #[error("{0}: all weights are zero")]
    ZeroWeights(&'static str),

    #[error("negative weight in {what} at position {index}: {value}")]
    NegativeWeight {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("marginal allocation denominator is not positive: {0}")]
    NonPositiveDenominator(f64),

    #[error("zero variance")]
    ZeroVariance,

    #[error("missing parameter `{param}` for node `{node}`")]
    MissingParameter { param: &'static str, node: String },

    #[error("invalid cut: {0}")]
    InvalidCut(String),

    #[error("unknown principle `{0}`")]
    UnknownPrinciple(String),
}

impl ScrError {
    pub(crate) fn at_node(self, id: &str) -> Self {
        match self {
            ScrError::IndefiniteAggregation { value, .. } => ScrError::IndefiniteAggregation {
                node: id.to_string(),
                value,
            },
            other => other,
        }
    }
}
