use std::fmt;

pub const EXIT_IO: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_ASSERTION: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(anyhow::Error),
    Solver(String),
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Assertion(_) => EXIT_ASSERTION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(e) => write!(f, "{e:#}"),
            CliError::Solver(m) => write!(f, "solver aborted: {m}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Io(e)
    }
}
