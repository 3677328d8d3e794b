use std::path::PathBuf;

use thiserror::Error;

/// Marker for a deformation gradient with non-positive determinant.
///
/// The stored energy is `+inf` on such states, so callers treat this as a
/// rejection rather than as a numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("non-orientation-preserving deformation (det F = {det})")]
pub struct Inadmissible {
    pub det: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown phase solver `{0}`")]
    UnknownPhaseSolver(String),

    #[error(transparent)]
    Inadmissible(#[from] Inadmissible),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("phase problem has nonzero edge weights; use the coupled solver")]
    UseCoupledSolver,

    #[error("negative edge weight {weight} on edge {edge}")]
    NegativeWeight { edge: usize, weight: f64 },

    #[error("time {t} outside the load program horizon [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },

    #[error("could not draw a balanced initial phase field after {0} attempts")]
    InitialSampling(usize),

    #[error("LP solve failed: {0}")]
    Lp(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
