use serde_json::json;

/// Failure of a CLI run, mapped onto a process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    ConfigInvalid(String),
    /// A requested plot kind has no data in the report.
    MissingSeries(String),
    Module(freeflow::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// All declared tolerances passed.
pub const EXIT_OK: i32 = 0;
/// The run completed but some declared tolerance failed.
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODULE: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) | CliError::MissingSeries(_) => EXIT_CONFIG,
            CliError::Module(_) => EXIT_MODULE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::MissingSeries(_) => "MissingSeries",
            CliError::Module(e) => e.kind(),
        }
    }

    /// `{"error": kind, "message": …, "exit_code": …}`.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::ConfigInvalid(m) => write!(f, "invalid configuration: {m}"),
            CliError::MissingSeries(k) => write!(f, "report has no `{k}` series"),
            CliError::Module(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<freeflow::Error> for CliError {
    fn from(e: freeflow::Error) -> Self {
        CliError::Module(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Module(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Module(e.into())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}
