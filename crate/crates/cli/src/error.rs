use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("non-finite value in vector {index} at position {position}")]
    NonFinite { index: usize, position: usize },

    #[error("bad spec: {0}")]
    BadSpec(String),

    /// A reproduction check failed; the report was still written.
    #[error("reproduction gate failed: {0}")]
    Gate(String),

    #[error(transparent)]
    Core(#[from] polyargmax::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Self::Format {
            offset,
            message: message.into(),
        }
    }

    /// 2 for unreadable input or specs, 3 for a failed gate, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Format { .. } | Self::NonFinite { .. } | Self::BadSpec(_) => 2,
            Self::Core(polyargmax::Error::BadSpec(_)) => 2,
            Self::Gate(_) => 3,
            _ => 1,
        }
    }
}
