//! Time-domain speech separation with top-down attention.
//!
//! The crate is organized around a small deterministic tensor engine with
//! reverse-mode differentiation ([`numerics`]), the neural building blocks
//! ([`layers`]), the separation network itself ([`model`]), permutation-invariant
//! SI-SNR training ([`training`]), synthetic mixture simulation ([`datagen`]),
//! and a metric/complexity suite ([`eval`]). The [`cli`] module exposes the
//! same functionality as reproducible commands; see the `examples/` directory
//! for one runnable program per capability.

pub mod cli;
pub mod datagen;
pub mod eval;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod training;

use std::path::PathBuf;

/// Crate-wide error type. Variants map onto the failure classes surfaced by
/// the public API: shape mismatches, bad configuration, bad input data,
/// consumed-tape state errors, malformed files, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("{}: malformed file ({detail})", path.display())]
    Format { path: PathBuf, detail: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code convention: 2 for usage/config/input problems
    /// (including files the user named but that don't exist), 1 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Format { .. } => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
