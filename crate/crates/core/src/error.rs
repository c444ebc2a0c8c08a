use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HuaError {
    /// Cancellation consumed every tracked digit, so the valuation of the
    /// result cannot be certified.
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is singular")]
    SingularMatrix,

    /// The requested integral or series diverges for these parameters.
    #[error("outside the convergence domain: {0}")]
    ConvergenceDomain(String),

    /// `a + z c` is exactly singular, so `z` lies off the chart of the action.
    #[error("base point is singular for this group element")]
    BasePointSingular,

    #[error("level {level} is below the core size {core}")]
    LevelTooSmall { level: usize, core: usize },

    /// A sampler could not certify its output even at the maximal precision.
    #[error("precision escalation failed at {0} digits")]
    PrecisionEscalation(u32),

    #[error("mixed primes {0} and {1}")]
    PrimeMismatch(u64, u64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl HuaError {
    /// Stable machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            HuaError::PrecisionExhausted(_) => "precision_exhausted",
            HuaError::DivisionByZero => "division_by_zero",
            HuaError::ShapeMismatch(_) => "shape_mismatch",
            HuaError::SingularMatrix => "singular_matrix",
            HuaError::ConvergenceDomain(_) => "convergence_domain",
            HuaError::BasePointSingular => "base_point_singular",
            HuaError::LevelTooSmall { .. } => "level_too_small",
            HuaError::PrecisionEscalation(_) => "precision_escalation",
            HuaError::PrimeMismatch(..) => "prime_mismatch",
            HuaError::InvalidInput(_) => "invalid_input",
            HuaError::Unsupported(_) => "unsupported",
        }
    }

    /// Errors caused by the numeric domain of the request rather than by its syntax.
    pub fn is_numeric_domain(&self) -> bool {
        !matches!(self, HuaError::InvalidInput(_) | HuaError::ShapeMismatch(_))
    }
}

pub type Result<T> = std::result::Result<T, HuaError>;
