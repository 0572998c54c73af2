use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error(
        "configuration too close to a Wood anomaly: order {order} has ||alpha_n| - kappa| = {distance:.3e} < {tolerance:.3e}"
    )]
    WoodAnomaly {
        order: i64,
        distance: f64,
        tolerance: f64,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
