use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] peds_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{what}, line {line}: {msg}")]
    Parse { what: String, line: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid input: {0}")]
    Input(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input or configuration, 3 when a solver
    /// or the optimizer fails numerically.
    pub fn exit_code(&self) -> i32 {
        use peds_core::Error as C;
        match self {
            Error::Core(
                C::Singular { .. }
                | C::Residual { .. }
                | C::NewtonDiverged { .. }
                | C::NonFinite(_)
                | C::NonFiniteGradient { .. }
                | C::NonPositiveSigma(_),
            ) => 3,
            _ => 2,
        }
    }
}
