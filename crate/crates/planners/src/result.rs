use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome<T> {
    pub actions: Vec<Vec<T>>,
    /// Best score found after each iteration; never decreases.
    pub trace: Vec<T>,
    /// Final-state score of `actions`.
    pub score: T,
    pub wall_clock: f64,
    pub seed: u64,
}
