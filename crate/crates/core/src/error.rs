use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Input problems (parsing, validation) and numerical failures are kept
/// apart so the CLI can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("field `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("missing baseMVA")]
    MissingBaseMva,

    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),

    #[error("{context} references unknown bus {bus}")]
    UnknownBus { context: String, bus: usize },

    #[error("no in-service generator bus")]
    NoGeneratorBus,

    #[error("no load bus")]
    NoLoadBus,

    #[error("network is not connected; island: {island:?}")]
    Island { island: Vec<usize> },

    #[error("branch {from}-{to} is in service with zero series impedance")]
    ZeroImpedance { from: usize, to: usize },

    #[error("load-bus admittance block is singular")]
    SingularAdmittance,

    #[error("matrix is singular or too ill-conditioned to factor")]
    SingularMatrix,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero voltage entry at load position {0}")]
    ZeroEntry(usize),

    #[error("v0 is not a power-flow solution for S0 (residual {residual:.3e})")]
    NotASolution { residual: f64 },

    #[error("certificate precondition violated: gamma + 2*xi*eta = {value} is not < 1")]
    RadiiPrecondition { value: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    FixedPointNonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point iterate approached zero at load position {position}")]
    FixedPointCollapse { position: usize, iteration: usize },

    #[error("converged point lies outside the certified polydisc at load position {position} (excess {excess:.3e})")]
    ContainmentViolated { position: usize, excess: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NewtonNonConvergence { iterations: usize, mismatch: f64 },

    #[error("Wang condition requires xi(S0) < 1, got {0}")]
    WangPrecondition(f64),

    #[error("lower end of the bracket (lambda = {0}) is infeasible")]
    InfeasibleLowerBracket(f64),

    #[error("missing iterate trace")]
    MissingTrace,

    #[error("{0}")]
    Invalid(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::InvalidField { .. }
                | Error::MissingBaseMva
                | Error::DuplicateBus(_)
                | Error::UnknownBus { .. }
                | Error::NoGeneratorBus
                | Error::NoLoadBus
                | Error::Island { .. }
                | Error::ZeroImpedance { .. }
                | Error::Invalid(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::InvalidField { .. } => "invalid_field",
            Error::MissingBaseMva => "missing_base_mva",
            Error::DuplicateBus(_) => "duplicate_bus",
            Error::UnknownBus { .. } => "unknown_bus",
            Error::NoGeneratorBus => "no_generator_bus",
            Error::NoLoadBus => "no_load_bus",
            Error::Island { .. } => "island",
            Error::ZeroImpedance { .. } => "zero_impedance",
            Error::SingularAdmittance => "singular_admittance",
            Error::SingularMatrix => "singular_matrix",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ZeroEntry(_) => "zero_entry",
            Error::NotASolution { .. } => "not_a_solution",
            Error::RadiiPrecondition { .. } => "radii_precondition",
            Error::FixedPointNonConvergence { .. } => "fixed_point_non_convergence",
            Error::FixedPointCollapse { .. } => "fixed_point_collapse",
            Error::ContainmentViolated { .. } => "containment_violated",
            Error::NewtonNonConvergence { .. } => "newton_non_convergence",
            Error::WangPrecondition(_) => "wang_precondition",
            Error::InfeasibleLowerBracket(_) => "infeasible_lower_bracket",
            Error::MissingTrace => "missing_trace",
            Error::Invalid(_) => "invalid",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
