use std::path::PathBuf;

/// Everything that can stop the lab, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("numerical abort during {stage}: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: l2flow_core::Error,
    },
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    /// 2 for configuration and input problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io { .. } | LabError::Format { .. } => 2,
            LabError::Numerical { .. } => 3,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        LabError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn numerical(stage: impl Into<String>, source: l2flow_core::Error) -> Self {
        LabError::Numerical {
            stage: stage.into(),
            source,
        }
    }
}
