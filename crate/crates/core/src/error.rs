use thiserror::Error;

/// Errors produced by the rough-path, solver and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time {0} is not a grid point")]
    NotOnGrid(f64),

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("invalid Hölder exponent {0}: must lie in (1/3, 1/2]")]
    InvalidAlpha(f64),

    #[error("control is not superadditive: w({s},{u}) < w({s},{t}) + w({t},{u})")]
    NotSuperadditive { s: f64, t: f64, u: f64 },

    #[error("controlled paths refer to different rough paths")]
    ReferenceMismatch,

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("singular Jacobian at point {point}: det = {det}")]
    SingularJacobian { point: usize, det: f64 },

    #[error("missing derivative: {0}")]
    MissingDerivative(String),

    #[error("weight overflow: log-weight {0} cannot be exponentiated")]
    WeightOverflow(f64),

    #[error("invalid Monte Carlo parameters: {0}")]
    InvalidMc(String),

    #[error("invalid initial measure: {0}")]
    InvalidSampler(String),

    #[error("stability condition violated: dt = {dt:.3e}, use dt <= {suggested:.3e}")]
    Unstable { dt: f64, suggested: f64 },

    #[error("quadrature tail bound {bound:.3e} exceeds {limit:.3e}; enlarge the box")]
    QuadratureTail { bound: f64, limit: f64 },

    #[error("negative weight {0}")]
    NegativeWeight(f64),

    #[error("expression parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
