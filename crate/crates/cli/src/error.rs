use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<neuralfmu::Error> for CliError {
    fn from(e: neuralfmu::Error) -> Self {
        let code = match e {
            neuralfmu::Error::Diverged { .. } => EXIT_DIVERGED,
            ref e if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Attaches a path (or other context) to an error message.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError {
                code: e.code,
                message: format!("{what}: {}", e.message),
            }
        })
    }
}
