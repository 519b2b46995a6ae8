use crate::fem::SolveReport;
use thiserror::Error;

/// Every failure the toolkit can report, grouped by the pipeline stage that raises it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown symbol `{symbol}` at byte {offset}")]
    UnknownSymbol { symbol: String, offset: usize },

    #[error("division by a constant zero at byte {offset}")]
    ZeroDenominator { offset: usize },

    #[error("non-finite value while evaluating `{expr}` at ({x}, {y})")]
    Evaluation { expr: String, x: f64, y: f64 },

    #[error("ellipticity violated in phase {phase}: smallest eigenvalue {min_eig:e}")]
    Ellipticity { phase: usize, min_eig: f64 },

    #[error("positivity violated in phase {phase}: min of reaction coefficient {min:e}")]
    Positivity { phase: usize, min: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("epsilon {0} is not the reciprocal of an integer")]
    NotReciprocal(f64),

    #[error("micro mesh size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("conflicting constraints: {0}")]
    ConstraintConflict(String),

    #[error("interface twin pairing missing: {0}")]
    MissingTwin(String),

    #[error(
        "COMPAT_VIOLATION: mean of alpha over the interface is {mean:e} (tolerance {tol:e}); \
         a zero interface average is the compatibility condition for unique solvability of the \
         gamma cell problems"
    )]
    CompatViolation { mean: f64, tol: f64 },

    #[error("solver failure ({method}): {message}")]
    Solver {
        method: String,
        message: String,
        report: Option<SolveReport>,
    },

    #[error(
        "INDEFINITE_FORM: micro bilinear form lost coercivity (Ritz smallest eigenvalue {ritz_min:e}, \
         alpha_minus_sup {alpha_minus_sup:e})"
    )]
    IndefiniteForm {
        ritz_min: f64,
        alpha_minus_sup: f64,
        report: SolveReport,
    },

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } | Error::UnknownSymbol { .. } | Error::ZeroDenominator { .. } => {
                "PARSE"
            }
            Error::Evaluation { .. } => "EVALUATION",
            Error::Ellipticity { .. } => "ELLIPTICITY",
            Error::Positivity { .. } => "POSITIVITY",
            Error::Geometry(_) | Error::DegenerateTriangle { .. } => "GEOMETRY",
            Error::NotReciprocal(_) => "NOT_RECIPROCAL",
            Error::SizeCap { .. } => "SIZE_CAP",
            Error::ConstraintConflict(_) => "CONSTRAINT_CONFLICT",
            Error::MissingTwin(_) => "MISSING_TWIN",
            Error::CompatViolation { .. } => "COMPAT_VIOLATION",
            Error::Solver { .. } => "SOLVER",
            Error::IndefiniteForm { .. } => "INDEFINITE_FORM",
            Error::Config { .. } => "CONFIG",
            Error::Stage { source, .. } => source.code(),
            Error::Internal(_) => "INTERNAL",
            Error::Io(_) => "IO",
        }
    }

    /// Process exit code used by the CLI: 2 for invalid input, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Solver { .. } | Error::IndefiniteForm { .. } | Error::Internal(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
