//! The nine deformable-object manipulation tasks on top of `softgrad-core`.
//!
//! An [`Env`] is an immutable task definition; states are plain values.
//! [`Env::reset`] and [`Env::step_diff`] form a functional gym-style API, and
//! `Env` implements [`StepPair`](softgrad_core::autodiff::StepPair) so whole
//! episodes can be differentiated with the core rollout machinery.

pub mod adjust;
pub mod catalog;
pub mod config;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod plan;
pub mod reward;
pub mod state;
mod tasks;

pub use catalog::{catalog, ActionSpace, CatalogEntry, Family, TaskId};
pub use config::{EnvOverrides, TaskConfig};
pub use env::{make_env, Env, StepInfo, StepRecord, StepResult, CHAMFER_POINTS, OBS_POINTS};
pub use error::{EnvError, EnvResult};
pub use reward::{Correspondence, GoalSpec};
pub use state::{Dynamics, DynamicsCot, EffectorState, EnvCot, EnvState};

macro_rules! precision_aliases {
    ($name:ident, $t:ty) => {
        pub mod $name {
            pub type Env = crate::env::Env<$t>;
            pub type EnvState = crate::state::EnvState<$t>;
            pub type EnvCot = crate::state::EnvCot<$t>;
            pub type StepResult = crate::env::StepResult<$t>;
        }
    };
}

precision_aliases!(f64, f64);
precision_aliases!(f32, f32);
