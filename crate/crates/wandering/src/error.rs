use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown arrow label `{0}`")]
    UnknownArrow(String),

    #[error("cannot compose words: target `{left}` does not match origin `{right}`")]
    Composition { left: String, right: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cone violation: {0}")]
    Cone(String),

    #[error("iteration did not contract within {iterations} steps (residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("kind error: {0}")]
    Kind(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("precision error: {0}")]
    Precision(String),

    #[error("no tangency: {0}")]
    NoTangency(String),

    #[error("ambiguous tangency: {count} critical brackets on the fold interval")]
    Ambiguous { count: usize },

    #[error("membership error: {0}")]
    Membership(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver capacity exceeded: {0}")]
    Capacity(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("empty measure")]
    EmptyMeasure,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
