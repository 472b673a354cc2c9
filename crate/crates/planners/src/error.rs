use softgrad_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("non-finite gradient at iteration {iteration}, step {step}, index {index}")]
    NanGradient { iteration: usize, step: usize, index: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<softgrad_envs::EnvError> for PlanError {
    fn from(e: softgrad_envs::EnvError) -> Self {
        PlanError::Sim(e.into())
    }
}

pub type PlanResult<T> = std::result::Result<T, PlanError>;
