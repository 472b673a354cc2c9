use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate element: particle {particle} has non-positive volume ratio {det}")]
    DegenerateElement { particle: usize, det: f64 },
    #[error("degenerate spring {spring}: endpoint distance {length} below tolerance")]
    DegenerateSpring { spring: usize, length: f64 },
    #[error("numerical blowup at substep {substep}: non-finite {field}")]
    NumericalBlowup { substep: usize, field: &'static str },
    #[error("active region violation: particle {particle} support leaves region")]
    ActiveRegionViolation { particle: usize },
    #[error("stale tape: {0}")]
    StaleTape(String),
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
}

impl SimError {
    pub fn at_step(self, step: usize) -> Self {
        SimError::Step { step, source: Box::new(self) }
    }

    /// Innermost error, with step wrappers removed.
    pub fn root(&self) -> &SimError {
        match self {
            SimError::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
