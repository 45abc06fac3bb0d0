use std::fmt;

/// What went wrong, as far as the exit status is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Unreadable or invalid input data, configuration or arguments.
    BadInput,
    /// A stage failed on input it accepted.
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub struct CliError {
    pub stage: String,
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

impl CliError {
    pub fn bad_input(stage: &str, message: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            kind: FailureKind::BadInput,
            message: message.to_string(),
        }
    }

    pub fn internal(stage: &str, message: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            kind: FailureKind::Internal,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::BadInput => 2,
            FailureKind::Internal => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tags library errors with the stage they came from.
pub trait StageContext<T> {
    /// Classifies by error variant: numerical breakdowns are internal,
    /// everything else is blamed on the input.
    fn stage(self, stage: &str) -> CliResult<T>;
    /// Always internal; used for writing outputs.
    fn internal(self, stage: &str) -> CliResult<T>;
}

impl<T> StageContext<T> for flowxai::Result<T> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| match e {
            flowxai::Error::Singular { .. } => CliError::internal(stage, e),
            _ => CliError::bad_input(stage, e),
        })
    }

    fn internal(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::internal(stage, e))
    }
}
