use std::fmt::Display;
use std::path::Path;

/// Errors surfaced by the harness. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 2,
            Error::Numerical(_) => 3,
        }
    }

    fn prefixed(self, what: &dyn Display) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{what}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<cropcast_core::Error> for Error {
    fn from(e: cropcast_core::Error) -> Self {
        match e {
            cropcast_core::Error::InvalidInput(_) => Error::Input(e.to_string()),
            _ => Error::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Input(e.to_string())
    }
}

/// Attach the stage or file that failed to an error.
pub trait Context<T> {
    fn context(self, what: impl Display) -> Result<T>;

    fn in_file(self, path: &Path) -> Result<T>
    where
        Self: Sized,
    {
        self.context(path.display())
    }
}

impl<T, E: Into<Error>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl Display) -> Result<T> {
        self.map_err(|e| e.into().prefixed(&what))
    }
}
