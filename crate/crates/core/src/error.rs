use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("characteristic function pole: {0}")]
    Pole(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration} (component {component}): {detail}")]
    TrainingDiverged {
        iteration: usize,
        component: usize,
        detail: String,
    },

    #[error(
        "stability envelope violated at m={m}, w={w}: |V|={norm:.6e} > bound {bound:.6e}"
    )]
    StabilityViolation { m: usize, w: f64, norm: f64, bound: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
