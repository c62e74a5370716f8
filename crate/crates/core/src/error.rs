use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("pair (C, A) is not observable (rank {rank} < {n})")]
    NotObservable { rank: usize, n: usize },

    #[error("plant is not jointly observable: unobservable intersection has dimension {dim}")]
    NotJointlyObservable { dim: usize },

    #[error("spectrum assignment failed: {0}")]
    AssignmentFailed(String),

    #[error("{what} residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("subspace is not invariant: residual {residual:.3e} exceeds {tol:.3e}")]
    NotInvariant { residual: f64, tol: f64 },

    #[error("stochastic matrix is not doubly stochastic (mode {mode:?})")]
    NotDoublyStochastic { mode: Option<usize> },

    #[error("matrix is not Hurwitz: spectral abscissa {abscissa:.6e}")]
    NotHurwitz { abscissa: f64 },

    #[error("time {t} outside horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("step {step} too large for mode {mode}: step * |M| = {product:.3}")]
    StepTooLarge { step: f64, mode: usize, product: f64 },

    #[error("degenerate rate fit: only {usable} usable samples")]
    DegenerateFit { usable: usize },

    #[error("signal generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Dimension(_) | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
