use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("rule at line {line} has an empty premise")]
    EmptyPremise { line: usize },

    #[error("duplicate rule id {id} at line {line}")]
    DuplicateRuleId { id: usize, line: usize },

    #[error("rule id {found} at line {line} is out of sequence (expected {expected})")]
    RuleIdOutOfSequence {
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("malformed interval at line {line}, column {column}: {message}")]
    MalformedInterval {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid ruleset: {0}")]
    InvalidRuleset(String),

    #[error("feature `{0}` is not present in the sample")]
    MissingFeature(String),

    #[error("feature `{feature}` has non-numeric value `{value}`")]
    NonNumeric { feature: String, value: String },

    #[error("insufficient data: {required} rows required, {available} available")]
    InsufficientData { required: usize, available: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("baseline fingerprint mismatch: baseline {expected}, current {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("need at least {needed} values, have {have}")]
    InsufficientCount { needed: usize, have: usize },

    #[error("interval half-width must be non-negative, got {0}")]
    NegativeHalfwidth(f64),

    #[error("window not full: {fill} of {capacity} samples")]
    WindowNotFull { fill: usize, capacity: usize },

    #[error("dataset has a single class `{0}`; at least two are required")]
    SingleClass(String),

    #[error("dataset has no label column")]
    MissingLabels,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
