use crate::autodiff::AutodiffError;

/// Errors surfaced by the solver, its configuration and its I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(
        "kernel matrix for `{variable}` is not positive definite (pivot {pivot:e} at row {index}); \
         raise the nugget delta or remove duplicate boundary samples"
    )]
    Conditioning { variable: String, index: usize, pivot: f64 },
    #[error("training diverged at epoch {epoch}: {term} is {value}")]
    NonFinite { epoch: usize, term: String, value: f64 },
}
