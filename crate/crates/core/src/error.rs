use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the operator, noise, estimation and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty eigenvalue list")]
    EmptySpectrum,

    #[error("sectoriality violated at mode {index}: shifted eigenvalue {value}")]
    SectorialityViolation { index: usize, value: Complex64 },

    #[error("eigenvalues of a structured basis must be sorted by real part (mode {index})")]
    UnsortedSpectrum { index: usize },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("parameter {name} = {value} outside its admissible range")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("orbit quadrature did not converge: tail bound {tail:e} exceeds tolerance for value {value:e}")]
    QuadratureNotConverged { tail: f64, value: f64 },

    #[error("grid of size {grid_size} aliases the retained modes (need at least {required})")]
    AliasedGrid { grid_size: usize, required: usize },

    #[error("operation not available for basis {0}")]
    UnsupportedBasis(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step {step} declared dependent on increments through step {depends_through}")]
    AdaptednessViolation { step: usize, depends_through: usize },

    #[error("operator is not self-adjoint: mode {index} has a nonzero imaginary part")]
    NotSelfAdjoint { index: usize },

    #[error("insufficient samples: standard error {stderr:e} against value {value:e}")]
    InsufficientSamples { stderr: f64, value: f64 },

    #[error("smallness condition violated: K*L_F + K<>L_B = {0}")]
    SmallnessViolated(f64),

    #[error("Picard iteration did not converge after {iterations} iterations (last ratio {last_ratio}, piece {piece:?})")]
    NoConvergence {
        iterations: usize,
        last_ratio: f64,
        piece: Option<usize>,
    },

    #[error("freezing needs pieces shorter than {required:e} but the grid step is {dt:e}")]
    FreezingFailed { required: f64, dt: f64 },

    #[error("need at least {required} dyadic levels, found {available}")]
    InsufficientLevels { available: usize, required: usize },

    #[error("unknown form `{0}`")]
    UnknownForm(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("path {path}: {source}")]
    Path {
        path: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// The innermost error, skipping path wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Path { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
