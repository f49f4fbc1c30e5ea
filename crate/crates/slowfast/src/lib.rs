//! File formats, configuration, the convergence harness and the `slowfast`
//! command line, layered over `slowfast-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod harness;
pub mod io;

use slowfast_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateBounds { .. }
            | Error::TooFewNodes { .. }
            | Error::Dimension(_)
            | Error::EmptyControlSet
            | Error::UnknownName(_)
            | Error::Expression(_)
            | Error::InvalidArgument(_)
    )
}

impl AppError {
    /// 2 for usage and configuration problems, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) | AppError::Io(_) => 2,
            AppError::Stage { source, .. } | AppError::Core(source) => {
                if is_input_error(source) {
                    2
                } else {
                    1
                }
            }
        }
    }
}
