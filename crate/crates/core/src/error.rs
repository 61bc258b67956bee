use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is not positive (semi)definite: {0}")]
    NotPositiveDefinite(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("binding error: {0}")]
    Binding(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("data error at {location}: {message}")]
    Data { location: String, message: String },

    #[error("unsupported document version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt document: {0}")]
    Corrupt(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("already exists: {0}")]
    AlreadyExists(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
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
    pub fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    pub fn data(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Stable machine-readable code, used by the CLI and HTTP surfaces.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Validation(_) => "validation_failed",
            Error::Precondition(_) => "precondition_failed",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::FitFailure(_) => "fit_failed",
            Error::Numerical(_) => "numerical_failure",
            Error::Binding(_) => "binding_error",
            Error::Unsupported(_) => "unsupported",
            Error::Data { .. } => "data_error",
            Error::Version { .. } => "version_mismatch",
            Error::Json(e) if e.is_io() => "io_error",
            Error::Csv(e) if e.is_io_error() => "io_error",
            Error::Corrupt(_) | Error::Json(_) => "corrupt_document",
            Error::NotFound(_) => "not_found",
            Error::AlreadyExists(_) => "already_exists",
            Error::Io(_) => "io_error",
            Error::Csv(_) => "data_error",
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }

    /// True for errors caused by the caller's input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        if self.code() == "io_error" {
            return false;
        }
        matches!(
            self.root(),
            Error::DimensionMismatch { .. }
                | Error::Validation(_)
                | Error::Precondition(_)
                | Error::Binding(_)
                | Error::Unsupported(_)
                | Error::Data { .. }
                | Error::Version { .. }
                | Error::Corrupt(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
