use std::fmt;

/// CLI failure, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub fn io(path: &str, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{path}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
        }
    }
}

impl From<secord_core::Error> for CliError {
    fn from(e: secord_core::Error) -> Self {
        use secord_core::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::Validation(ref report) => {
                let mut msg = e.to_string();
                for v in report.violations.iter().take(20) {
                    msg.push_str(&format!("\n  {v}"));
                }
                CliError::Validation(msg)
            }
            E::StateOutOfRange { .. } | E::Parse(_) | E::EmptyDataset | E::Csv(_) => CliError::Validation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
