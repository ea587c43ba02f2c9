use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("invalid array: {0}")]
    InvalidArray(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("input node {0} is not bound")]
    Unbound(usize),

    #[error("loss node {node} is not a scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token {token} is outside the {side} vocabulary of size {size}")]
    Token {
        token: usize,
        side: &'static str,
        size: usize,
    },

    #[error("empty sequence: {0}")]
    EmptySequence(String),

    #[error("invalid task: {0}")]
    Task(String),

    #[error("rule {rule} is not applicable: {reason}")]
    Inapplicable { rule: String, reason: String },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("missing decode: {0}")]
    MissingDecode(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
