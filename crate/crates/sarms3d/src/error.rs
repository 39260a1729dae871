//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation was handed an out-of-range argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The transmitter/receiver pair (or a queried point) collapses the
    /// ellipsoid geometry, e.g. coincident foci or a point on a focus.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Region-of-interest box with no volume.
    #[error("empty region of interest")]
    EmptyRoi,

    /// Two objects that must share dimensions or sampling do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Normalisation of an image with no nonzero pixel.
    #[error("all-zero image")]
    AllZeroImage,

    /// File does not start with the expected magic bytes.
    #[error("bad magic bytes: not a recognised data file")]
    BadMagic,

    /// File carries an unsupported format version.
    #[error("unsupported format version {0}")]
    VersionMismatch(u32),

    /// Header dimensions overflow or disagree with the payload size.
    #[error("dimension overflow or payload size mismatch")]
    DimsOverflow,

    /// Run-configuration parse failure, with the 1-based source line.
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
