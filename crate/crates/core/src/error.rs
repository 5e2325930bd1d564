use thiserror::Error;

/// Errors produced across the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("unsupported magic number {0:?}")]
    UnsupportedMagic(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward pass requested before a forward pass was recorded")]
    NoForwardRecord,

    #[error("backward record does not match the current inputs: {0}")]
    RecordMismatch(String),

    #[error("loss component {name} is negative ({value})")]
    NegativeLoss { name: &'static str, value: f64 },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("no Gaussian has opacity above {threshold} ({total} Gaussians inspected)")]
    NoOpaqueGaussians { threshold: f64, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric abort at iteration {iteration}: {what}")]
    NumericAbort { iteration: usize, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        });
    }
    Ok(())
}
