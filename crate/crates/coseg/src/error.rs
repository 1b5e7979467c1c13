//! Error type shared by all modules.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CosegError>;

#[derive(Debug, thiserror::Error)]
pub enum CosegError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unsupported file content; `detail` names the offending key.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("payload size mismatch in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("volume domains do not match: {0}")]
    DomainMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(
        "deformation field inversion failed: residual {residual_voxels:.3} voxels at voxel \
         ({},{},{})", voxel[0], voxel[1], voxel[2]
    )]
    InversionFailure {
        voxel: [usize; 3],
        residual_voxels: f64,
    },

    #[error("problem too large: {0}")]
    TooLarge(String),
}
