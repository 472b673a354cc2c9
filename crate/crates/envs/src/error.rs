use softgrad_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown task `{id}`; valid ids: {valid}")]
    UnknownTask { id: String, valid: String },
    #[error("goal has {expected} points but the state has {got}")]
    Correspondence { expected: usize, got: usize },
    #[error("action has {got} components, expected {expected}")]
    ActionShape { expected: usize, got: usize },
    #[error("invalid override: {0}")]
    Override(String),
    #[error("episode already ended at step {horizon}")]
    Finished { horizon: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type EnvResult<T> = std::result::Result<T, EnvError>;

impl From<EnvError> for SimError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Sim(s) => s,
            other => SimError::InvalidConfig(other.to_string()),
        }
    }
}
