use thiserror::Error;

/// Errors produced by plan construction, channel evaluation and scenario handling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency {f_hz} Hz is outside the cable model range (valid up to {valid_f_max_hz} Hz)")]
    ModelRange { f_hz: f64, valid_f_max_hz: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// Configuration text failed to parse or validate. `key` names the offending entry
    /// whenever it can be determined.
    #[error("config error{}: {message}", key.as_ref().map(|k| format!(" at `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl SimError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        SimError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            key: Some(key.into()),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            SimError::Config { .. } | SimError::InvalidParameter { .. } | SimError::InvalidScenario(_)
        )
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
