use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const PREREQUISITE: i32 = 4;
    pub const INTERNAL: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("stage `{stage}` needs {missing}; run `{run_first}` first")]
    MissingPrerequisite {
        stage: &'static str,
        missing: String,
        run_first: &'static str,
    },
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::MissingPrerequisite { .. } => exit::PREREQUISITE,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Data(_) => "data_error",
            CliError::MissingPrerequisite { .. } => "missing_prerequisite",
            CliError::Internal(_) => "internal_error",
        }
    }

    /// One-line JSON error record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(&ErrorRecord {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error record serialization is infallible")
    }
}

pub fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

pub fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<namesquat::ingestion::IngestError> for CliError {
    fn from(e: namesquat::ingestion::IngestError) -> Self {
        use namesquat::ingestion::IngestError;
        match e {
            IngestError::Io(_) => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
