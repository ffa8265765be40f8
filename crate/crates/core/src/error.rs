use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: no edges found")]
    EmptyInput,
    #[error("malformed line {line}: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("xml parse error: {0}")]
    XmlParseError(String),
    #[error("edge references undeclared node id {0:?}")]
    UnknownNodeRef(String),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("pivot count {pivots} out of range [1, {n}]")]
    PivotCountOutOfRange { pivots: usize, n: usize },
    #[error("nodes {0} and {1} coincide")]
    CoincidentNodes(usize, usize),
    #[error("perplexity {perplexity} out of range [1, {max}]")]
    PerplexityOutOfRange { perplexity: f64, max: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-positive loss value {value} for criterion {index}")]
    NonPositiveLoss { index: usize, value: f64 },
    #[error("non-positive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("backward root must be a scalar, got shape {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("non-finite {criterion} loss on graph {graph}")]
    NonFiniteLoss { graph: String, criterion: String },
    #[error("invalid criterion spec: {0}")]
    InvalidCriteria(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
