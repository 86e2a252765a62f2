//! Multi-marginal Wasserstein GAN workbench.
//!
//! Two halves share one set of data types:
//!
//! * an exact discrete multi-marginal optimal-transport engine ([`mmot`]) built on a
//!   dense two-phase simplex solver, used as numerical ground truth for the duality
//!   relations the critic objective relies on;
//! * a toy-scale trainer ([`mwgan`]) with N generators, one shared critic and one
//!   auxiliary domain classifier, running on a small reverse-mode autodiff engine
//!   ([`autodiff`]) that supports the double backward pass needed by the
//!   inter-domain gradient penalty.
//!
//! [`toydata`] produces the 2D datasets, [`nets`] holds the MLPs, Adam and the
//! checkpoint format, and [`eval`] has metrics, value-surface export and the
//! generalization probe.

pub mod autodiff;
pub mod eval;
pub mod mmot;
pub mod mwgan;
pub mod nets;
pub mod toydata;
pub mod verify;

use std::path::PathBuf;

/// Errors surfaced by every module of the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: operand {operand} has shape {found:?}, expected {expected}")]
    Dimension {
        op: &'static str,
        operand: &'static str,
        expected: String,
        found: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance too large: {size} tuples exceeds cap {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors the CLI reports with the I/O exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Json { .. } | Error::Format { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
