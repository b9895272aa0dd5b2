use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("render error: {0}")]
    Render(String),
    #[error("study subset selection failed: {0}")]
    Selection(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("input shape mismatch: expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("invalid statistical input: {0}")]
    Stats(String),
    #[error("session error: {0}")]
    Session(#[from] crate::study::SessionError),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("model decode error: {0}")]
    Decode(String),
}

pub type Result<T> = core::result::Result<T, Error>;
