use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<mcpd::Error> for CliError {
    fn from(e: mcpd::Error) -> Self {
        let msg = e.to_string();
        match &e {
            _ if e.is_config() => Self::Config(msg),
            _ if e.is_numerical() => Self::Numerical(msg),
            mcpd::Error::Json(j) if !j.is_io() => Self::Config(msg),
            mcpd::Error::Csv(c) if !c.is_io_error() => Self::Config(msg),
            _ => Self::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
