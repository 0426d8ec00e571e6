use alloc::boxed::Box;
use alloc::string::String;

use crate::ocp::OcpSolution;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario tree needs {required} leaves, cap is {cap}; reduce the horizon")]
    NodeCapExceeded { required: u128, cap: usize },

    #[error("control tree shape does not match scenario tree (expected {expected} controls, got {found})")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("optimizer stopped after {} iterations with gradient norm {:e}", .0.iterations, .0.gradient_norm)]
    NotConverged(Box<OcpSolution>),
}

impl Error {
    /// Recovers the best iterate carried by [`Error::NotConverged`].
    pub fn into_best_iterate(self) -> Option<OcpSolution> {
        match self {
            Error::NotConverged(best) => Some(*best),
            _ => None,
        }
    }
}

pub(crate) fn invalid_argument(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
