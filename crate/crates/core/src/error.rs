use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("layer `{layer}` of kind {kind} has no FLOPs model")]
    NoFlopsModel { layer: String, kind: String },

    #[error("layer `{layer}` is an unsupported junction ({kind})")]
    UnsupportedJunction { layer: String, kind: String },

    #[error("coupling group {group} has inconsistent channel counts: {detail}")]
    InconsistentGroup { group: usize, detail: String },

    #[error("coupling group {group} is not prunable")]
    NonPrunableGroup { group: usize },

    #[error("plan does not match graph: {0}")]
    PlanMismatch(String),

    #[error("plan keeps no channels in group {group}")]
    EmptyGroup { group: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("layer `{layer}` has no gradient samples")]
    NoSamples { layer: String },

    #[error("no importance scores for layer `{layer}`")]
    MissingImportance { layer: String },

    #[error("no latency measurement for layer `{layer}`")]
    MissingLatency { layer: String },

    #[error("latency for layer `{layer}` must be positive, got {value}")]
    NonPositiveLatency { layer: String, value: f64 },

    #[error("weight list is empty")]
    EmptyWeights,

    #[error("item {index} has zero weight; knapsack weights must be positive")]
    ZeroWeight { index: usize },

    #[error("item {index} has negative value {value}; clamp scores at zero or use a nonnegative importance mode")]
    NegativeValue { index: usize, value: f64 },

    #[error(
        "dynamic programming needs {required} bytes, above the {cap} byte cap; \
         reduce weights with gcd_reduce, raise PRUNEPACK_MEM_CAP_BYTES, or use the greedy solver"
    )]
    MemoryCap { required: u128, cap: u64 },

    #[error("brute force supports at most {max} items, got {n}")]
    TooManyItems { n: usize, max: usize },

    #[error("infeasible budget: target {target} is below the minimum achievable {floor}")]
    InfeasibleBudget { target: f64, floor: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid budget: {0}")]
    InvalidBudget(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("reconstruction system is singular; use a positive ridge strength")]
    SingularSystem,

    #[error("tensor manifest error: {0}")]
    Manifest(String),

    #[error("tensor `{key}` is truncated: needs bytes up to {expected}, file has {actual}")]
    Truncated { key: String, expected: u64, actual: u64 },

    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse { line: err.line(), column: err.column(), message: err.to_string() }
    }

    pub(crate) fn layer(layer: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidLayer { layer: layer.into(), reason: reason.into() }
    }
}
