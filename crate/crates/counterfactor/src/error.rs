use thiserror::Error;

/// Errors produced by the estimation pipeline.
///
/// The CLI maps these onto process exit codes: configuration problems exit
/// with 1, data problems with 2, and numerical degeneracies with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition (dimension
    /// mismatch, index out of range, empty input, non-finite value).
    #[error("invalid input: {0}")]
    Input(String),

    /// Configuration file or flag problem.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent data file.
    #[error("data error: {0}")]
    Data(String),

    /// The requested factor rank is not supported by the data: the r-th
    /// eigenvalue of X X' is below 1e-12 times the largest.
    #[error("degenerate factor structure: eigenvalue {index} is {ratio:.3e} of the largest (threshold 1e-12)")]
    DegenerateFactors { index: usize, ratio: f64 },

    /// A second-stage design matrix is numerically rank deficient.
    #[error("singular design: smallest singular value is {ratio:.3e} of the largest (threshold 1e-10); near-dependent columns involve the {block}")]
    SingularDesign { ratio: f64, block: String },

    /// The instrument cross-moment matrix is numerically rank deficient.
    #[error("weak instrument: smallest singular value of the instrument cross-moment matrix is {ratio:.3e} of the largest (threshold 1e-10)")]
    WeakInstrument { ratio: f64 },

    /// An error that occurred while processing one unit, tagged with the
    /// unit's identifier.
    #[error("unit {id}: {source}")]
    Unit {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the identifier of the unit it occurred for.
    pub fn for_unit(id: impl Into<String>, source: Error) -> Error {
        Error::Unit { id: id.into(), source: Box::new(source) }
    }
}

impl Error {
    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Input(_) | Error::Data(_) | Error::Io(_) => 2,
            Error::DegenerateFactors { .. }
            | Error::SingularDesign { .. }
            | Error::WeakInstrument { .. } => 3,
            Error::Unit { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
