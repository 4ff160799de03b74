use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Where in a lattice a construction or labeling problem occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeSite {
    /// Observation index (point node).
    Observation(usize),
    /// Gap index between observations `t` and `t + 1` (path node).
    Gap(usize),
}

impl fmt::Display for LatticeSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeSite::Observation(t) => write!(f, "observation {t}"),
            LatticeSite::Gap(t) => write!(f, "gap {t}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate trajectory {id}: {reason}")]
    DegenerateTrajectory { id: String, reason: String },

    #[error("lattice construction failed for trajectory {trajectory}: no states at {site}")]
    LatticeConstruction {
        trajectory: String,
        site: LatticeSite,
    },

    #[error("trajectory {trajectory} is unlabelable: truth state absent at {site}")]
    Unlabelable {
        trajectory: String,
        site: LatticeSite,
    },

    #[error("inference error: {0}")]
    Inference(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training error: {message} (objective trace: {trace:?})")]
    Training { message: String, trace: Vec<f64> },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an I/O failure with the path it concerns.
    pub fn file(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::File { path, source }
    }
}
