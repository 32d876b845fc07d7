//! Error type shared across the crate.

/// Errors reported by model construction, design generation, and the
/// quadrature/analysis engines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A density or grid could not be constructed (non-monotone CDF,
    /// failed normalization, ...).
    #[error("design error: {0}")]
    Design(String),

    /// A value left the mathematical domain of an operation (singular
    /// model on a regular-only path, non-integrable integrand, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The projected work exceeds the kernel-evaluation budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// A configuration file failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// The simulation oracle could not factorize its covariance matrix.
    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the CLI contract: 0 ok, 2 config, 3 budget,
    /// 4 domain/argument, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Budget(_) => 3,
            Error::InvalidArgument(_) | Error::Design(_) | Error::Domain(_) => 4,
            Error::Oracle(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
