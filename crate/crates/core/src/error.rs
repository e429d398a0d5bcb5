use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("benchmark `{benchmark}` has no parameter `{param}`")]
    UnknownParameter { benchmark: String, param: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{count} label(s) failed, first indices {indices:?}: {first}")]
    LabelFailures { count: usize, indices: Vec<usize>, first: String },

    #[error("training diverged at width {width}, epoch {epoch}")]
    Diverged { width: usize, epoch: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::LabelFailures { .. } | Error::Diverged { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
