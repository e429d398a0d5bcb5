use flowlearn_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    /// An upstream artifact is missing or was produced from different inputs.
    #[error("stale pipeline: {0}")]
    Stale(String),

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// Process exit status: 2 for configuration or stale inputs, 3 for
    /// numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Stale(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(
                CoreError::InvalidArgument(_) | CoreError::UnknownBenchmark(_) | CoreError::UnknownParameter { .. },
            ) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Stale("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(CoreError::NonFinite("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(CoreError::Diverged { width: 1, epoch: 2 }).exit_code(), 3);
        assert_eq!(CliError::from(CoreError::UnknownBenchmark("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(CoreError::Format("x".into())).exit_code(), 1);
        let io = std::io::Error::other("disk");
        assert_eq!(CliError::io("writing", io).exit_code(), 1);
    }
}
