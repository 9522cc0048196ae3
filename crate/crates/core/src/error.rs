use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("unsupported maxval {0} (only 8-bit PGM is accepted)")]
    UnsupportedMaxval(u32),

    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image {width}x{height} is too small: {reason}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("invalid sample position ({x6}, {y6}): resampled pixel is not valid")]
    InvalidSamplePosition { x6: u8, y6: u8 },

    #[error("pattern parse error at line {line}: {msg}")]
    PatternParse { line: usize, msg: String },

    #[error("feature dump error: {0}")]
    FeatureDump(String),

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("underdetermined: {usable} usable observations, at least 3 required")]
    Underdetermined { usable: usize },

    #[error("degenerate geometry: normal-equation condition number {0:e}")]
    DegenerateGeometry(f64),

    #[error("trajectory parse error at line {line}: {msg}")]
    TrajectoryParse { line: usize, msg: String },

    #[error("disjoint trajectories: no timestamp associations within tolerance")]
    DisjointTrajectories,
}
