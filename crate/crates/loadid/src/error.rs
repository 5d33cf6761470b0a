//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A building specification violates its invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// The mass matrix cannot be inverted.
    #[error("singular mass matrix")]
    SingularMass,

    /// Non-positive time step passed to a discretization or generator.
    #[error("invalid time step: {0}")]
    InvalidStep(f64),

    /// A parameter vector has the wrong length or non-positive entries.
    #[error("invalid parameter vector: {0}")]
    InvalidParameter(String),

    /// A degree-of-freedom index is out of range.
    #[error("DOF index {dof} out of range for {n} stories")]
    InvalidDof { dof: usize, n: usize },

    /// Band edges for the synthetic ground motion are unusable.
    #[error("invalid frequency band: {0}")]
    InvalidBand(String),

    /// An impulse does not fit inside the requested duration.
    #[error("pulse truncated: {0}")]
    PulseTruncated(String),

    /// Numerical integration produced a non-finite state.
    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    /// A channel with zero RMS cannot be noised to a positive target ratio.
    #[error("degenerate channel {channel}: zero RMS with nsr > 0")]
    DegenerateChannel { channel: usize },

    /// Scenario or dataset configuration is unusable.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The innovation covariance could not be solved.
    #[error("ill-conditioned innovation (cond ~ {cond:.3e})")]
    IllConditionedInnovation { cond: f64 },

    /// Sensitivity evaluation returned non-finite values.
    #[error("sensitivity evaluation failed for parameter {index}")]
    SensitivityFailure { index: usize },

    /// The Gauss-Newton normal matrix is singular and no regularization is active.
    #[error("singular normal matrix: regularization (lambda2 > 0) required")]
    RegularizationRequired,

    /// The filter state became non-finite.
    #[error("filter diverged at step {step}")]
    FilterDiverged { step: usize },

    /// Network training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// Tensor or layer dimensions do not line up.
    #[error("shape mismatch in {layer}: {detail}")]
    ShapeMismatch { layer: String, detail: String },

    /// Inputs to a metric are unusable.
    #[error("degenerate metric input: {0}")]
    DegenerateMetric(String),

    /// Sequence lengths do not match.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Configuration file is invalid.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A required input file is missing or malformed.
    #[error("missing or malformed input: {0}")]
    MissingInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// An error annotated with where it happened (stage, sequence id).
    #[error("{context}: {source}")]
    Context {
        context: String,
        source: Box<Error>,
    },
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Unwraps context layers down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 for configuration/input problems,
    /// 3 for numerical divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::InvalidScenario(_)
            | Error::MissingInput(_)
            | Error::InvalidDof { .. }
            | Error::InvalidStep(_)
            | Error::InvalidBand(_)
            | Error::InvalidParameter(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::FilterDiverged { .. }
            | Error::TrainingDiverged { .. }
            | Error::IntegrationDiverged { .. } => 3,
            _ => 1,
        }
    }
}
