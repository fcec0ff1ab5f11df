use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario or arguments; nothing was computed.
    #[error("{0}")]
    Validation(String),
    /// The numerics failed (divergence, step-size underflow, nothing to fit).
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// Wraps a core error raised while working on `context`.
    pub fn core(context: &str, err: rendezvous_core::Error) -> Self {
        let msg = format!("{context}: {err}");
        if err.is_numerical() || matches!(err, rendezvous_core::Error::TooFewPoints { .. }) {
            CliError::Numerical(msg)
        } else {
            CliError::Validation(msg)
        }
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}
