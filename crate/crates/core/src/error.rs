use thiserror::Error;

/// Errors raised by model construction, inference and training.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrfError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("min_count must be ≥ 1")]
    ZeroMinCount,
    #[error("empty instance")]
    EmptyInstance,
    #[error("empty label alphabet")]
    EmptyAlphabet,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid label name `{0}`")]
    InvalidLabelName(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label index {index} out of range for alphabet of size {size}")]
    LabelOutOfRange { index: usize, size: usize },
    #[error("position {position} out of range for instance of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid predicate `{0}`: predicates must be non-empty, whitespace-free and must not start with '#'")]
    InvalidPredicate(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("instance {0} is not fully labeled")]
    Unlabeled(usize),
    #[error("instance {instance}: gold segment [{start}, {end}] is longer than the maximum segment length {max_len}")]
    SegmentTooLong {
        instance: usize,
        start: usize,
        end: usize,
        max_len: usize,
    },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error(
        "span [{start}, {end}] exceeds maximum segment length {max_len} or instance length {len}"
    )]
    InvalidSpan {
        start: usize,
        end: usize,
        max_len: usize,
        len: usize,
    },
    #[error("maximum segment length must be ≥ 1")]
    ZeroSegmentLength,
    #[error("order must be ≥ 1")]
    ZeroOrder,
    #[error("root label is not observed in instance {0}")]
    UnobservedRoot(usize),
    #[error("no wrong root label exists for an alphabet with a single label")]
    SingleLabel,
    #[error("templates do not match the instance kind")]
    TemplateMismatch,
    #[error("parameter vector has length {got}, feature index expects {expected}")]
    ParameterMismatch { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mismatched universes: {0} vs {1} tokens")]
    UniverseMismatch(usize, usize),
    #[error("span [{start}, {end}] lies outside a universe of {size} tokens")]
    SpanOutOfUniverse {
        start: usize,
        end: usize,
        size: usize,
    },
    #[error("empty confusion matrix")]
    EmptyConfusion,
    #[error("labeled token count {count} exceeds universe size {size}")]
    KappaOverflow { count: usize, size: usize },
    #[error("malformed model header: {0}")]
    MalformedHeader(String),
    #[error("unsupported model version {0}")]
    VersionMismatch(String),
    #[error("truncated model file")]
    Truncated,
    #[error("malformed model file at line {line}: {message}")]
    MalformedModel { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CrfError>;
