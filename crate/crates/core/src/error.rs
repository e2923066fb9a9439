use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty aggregation")]
    EmptyAggregation,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("log of non-PD matrix (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("zero-size skeleton")]
    ZeroSizeSkeleton,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A violated streaming-configuration constraint. The message names it.
    #[error("config constraint violated: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch")]
    Checksum,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Short machine-friendly category, used by the CLI's one-line errors.
    pub fn category(&self) -> &'static str {
        match self {
            Error::EmptyAggregation
            | Error::DimensionMismatch(_)
            | Error::NotSymmetric(_)
            | Error::NotPositiveDefinite(_)
            | Error::ZeroSizeSkeleton => "numeric",
            Error::InvalidArgument(_) => "argument",
            Error::Config(_) => "config",
            Error::Stage { source, .. } => source.category(),
            Error::Diverged { .. } => "training",
            Error::Parse(_) => "parse",
            Error::Version { .. } => "version",
            Error::Checksum => "checksum",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
