use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a transition matrix failed the primitivity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NonPrimitiveCause {
    /// The transition graph is not strongly connected.
    Reducible,
    /// Irreducible, but every cycle length is a multiple of `period > 1`.
    Periodic { period: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),
    #[error("transition matrix is not primitive ({0:?})")]
    NotPrimitive(NonPrimitiveCause),
    #[error("enumerating {requested} words exceeds the cap of {cap}")]
    ResourceLimit { requested: u128, cap: u64 },
    #[error("evaluation at depth {requested} exceeds available depth {available}")]
    DepthExceeded { requested: usize, available: usize },
    #[error("cylinder {word} has zero mass")]
    ZeroMass { word: String },
    #[error("function is not centered: mean {mean:e}")]
    MeanNotZero { mean: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("variance {sigma2:e} is degenerate")]
    DegenerateSigma { sigma2: f64 },
    #[error("inconsistent verdicts: {0}")]
    InconsistentVerdicts(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::NotPrimitive(_) => "not_primitive",
            Error::ResourceLimit { .. } => "resource_limit",
            Error::DepthExceeded { .. } => "depth_exceeded",
            Error::ZeroMass { .. } => "zero_mass",
            Error::MeanNotZero { .. } => "mean_not_zero",
            Error::NonConvergence(_) => "non_convergence",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::SingularSystem(_) => "singular_system",
            Error::DegenerateSigma { .. } => "degenerate_sigma",
            Error::InconsistentVerdicts(_) => "inconsistent_verdicts",
            Error::InvalidInput(_) => "invalid_input",
        }
    }
}
