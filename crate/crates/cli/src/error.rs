use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration (flags, config file, paths).
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] idcep::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 malformed config, 2 data validation failure, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use idcep::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Config(_) | E::Domain(_) | E::NotPsd { .. } => 1,
                E::Data(_) | E::Io(_) | E::Csv(_) | E::Json(_) => 2,
                E::Numerical { .. } => 3,
            },
        }
    }

    /// Extra lines printed after the message.
    pub fn diagnostics(&self) -> Option<String> {
        match self {
            CliError::Core(idcep::Error::Numerical { estimate, .. }) => {
                Some(format!("last estimate before giving up: {estimate:.6e}"))
            }
            CliError::Core(idcep::Error::NotPsd { .. }) => {
                Some("lower the cross-arm correlations or choose another frailty structure".to_string())
            }
            _ => None,
        }
    }
}
