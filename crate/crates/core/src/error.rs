use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("eigensolver did not converge at kappa = {kappa}")]
    EigenNonConvergence { kappa: f64 },

    #[error("degenerate eigenvalue for band {band} at kappa = {kappa} (relative gap {rel_gap:e})")]
    Degenerate { band: usize, kappa: f64, rel_gap: f64 },

    #[error("zero frequency for band {band} at kappa = {kappa}; sensitivity undefined")]
    ZeroFrequency { band: usize, kappa: f64 },

    #[error("only {found} of {requested} admissible points found within {scanned} sequence indices")]
    InsufficientAdmissible { found: usize, requested: usize, scanned: u64 },

    #[error("halton dimension {0} exceeds the prime table")]
    HaltonDimension(usize),

    #[error("problem '{0}' has no analytic gradient")]
    MissingAnalyticGradient(String),

    #[error("gradient evaluation failed at training point {index}: {source}")]
    GradientAt {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("need at least {required} gradient samples, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("empty subspace: no principal directions kept and the mean gradient vanishes")]
    EmptySubspace,

    #[error("linear subproblem infeasible at an admissible iterate")]
    InfeasibleStep,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("malformed artifact {file}: {reason}")]
    Artifact { file: String, reason: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
