use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix not SPD (non-positive pivot at row {row})")]
    NotSpd { row: usize },

    /// CG hit its iteration cap. Carries the iterate with the smallest residual.
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {0}")]
    DegenerateElement(usize),

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("functions belong to different finite element spaces")]
    SpaceMismatch,

    #[error("inconsistent bounds: lower > upper at {location}")]
    InvalidBounds { location: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Newton iteration cap reached. Carries the last adjoint iterate.
    #[error("semi-smooth Newton did not converge in {iterations} steps (residual {residual:.3e})")]
    NewtonNotConverged {
        iterations: usize,
        residual: f64,
        adjoint: Vec<f64>,
    },

    #[error("globalization stalled (step below {min_step:e})")]
    GlobalizationStalled { min_step: f64 },

    #[error("Bregman iteration {k}: {source}")]
    Iteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown benchmark case '{0}'")]
    UnknownCase(String),

    #[error("config error{}: field '{field}': {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
