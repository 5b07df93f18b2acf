use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to encode {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported sample depth in {path}: only 8-bit images are accepted")]
    UnsupportedDepth { path: PathBuf },

    #[error("image has an alpha channel and dropping it is disabled: {path}")]
    AlphaRejected { path: PathBuf },

    #[error("refusing output format for {path}: obfuscated images are written as lossless PNG only")]
    LossyOutput { path: PathBuf },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("region {x0},{y0} {w}x{h} does not fit in a {width}x{height} image")]
    RegionOutOfBounds {
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("channel {channel} out of range for a {channels}-channel image")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("variance is undefined for a single-pixel region")]
    SinglePixelRegion,

    #[error("region is constant (zero variance); it cannot be standardized")]
    ConstantRegion,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no window size up to {max_ws} reaches target VFE {target}")]
    InfeasibleTarget { target: f64, max_ws: usize },

    #[error("infeasible confidence: alpha {alpha} must satisfy 0 < alpha <= alpha0 = {alpha0} < 1")]
    InfeasibleConfidence { alpha: f64, alpha0: f64 },

    #[error("infeasible window bounds: lower {lower}, upper {upper}, initial window {initial}")]
    InfeasibleBounds {
        lower: usize,
        upper: usize,
        initial: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),

    #[error("objective diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("attack window size {0} refused; only 2 and 3 are tractable")]
    AttackWindowTooLarge(usize),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            detail: detail.into(),
        }
    }
}
