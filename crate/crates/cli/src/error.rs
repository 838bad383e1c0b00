use serde::Serialize;

/// Exit-code contract: 0 success, 1 runtime failure, 2 invalid input.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Invalid(_) => "invalid_input",
            CliError::Runtime(_) => "runtime",
        };
        serde_json::to_string(&ErrorJson {
            error: kind,
            message: self.to_string(),
        })
        .expect("error JSON serializes")
    }
}

impl From<bise::Error> for CliError {
    fn from(e: bise::Error) -> Self {
        use bise::Error as E;
        match e {
            E::Parameter(_) | E::Dimension(_) | E::Format { .. } | E::Io { .. } | E::Json(_) => {
                CliError::Invalid(e.to_string())
            }
            E::Numeric(_) | E::State(_) | E::Training { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("serialization error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
