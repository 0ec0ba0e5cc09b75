use std::path::PathBuf;

use crate::weights::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, parity, finiteness).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Too few pixels to estimate second-order statistics.
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("weight tensor `{0}` is missing from the store")]
    MissingTensor(String),

    #[error("weight tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{what} not found: {}", path.display())]
    NotFound { what: &'static str, path: PathBuf },

    #[error("failed to decode {what} {}: {source}", path.display())]
    Decode {
        what: &'static str,
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{what} {} has zero width or height", path.display())]
    EmptyImage { what: &'static str, path: PathBuf },

    #[error("segmentation map {}x{} does not match image {}x{}", seg.1, seg.0, image.1, image.0)]
    SegmentationSize {
        seg: (usize, usize),
        image: (usize, usize),
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shorthand for building [`Error::Contract`].
macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::error::Error::Contract(format!($($arg)*))
    };
}
pub(crate) use contract;
