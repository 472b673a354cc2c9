//! Planning and policy learning over differentiable manipulation tasks.
//!
//! * [`cem_mpc`]: cross-entropy method over action sequences;
//! * [`diff_mpc`]: clipped gradient ascent through the simulator;
//! * [`diff_cem_mpc`]: CEM, then gradient refinement, keeping the better;
//! * [`apg_train`]: analytic policy gradients for a small bounded MLP.
//!
//! Everything runs against the [`Task`] trait, which [`softgrad_envs::Env`]
//! implements. Results are deterministic given the inputs and the
//! [`RngState`](softgrad_core::RngState) key, independent of thread count.

pub mod apg;
pub mod cem;
pub mod error;
pub mod eval;
pub mod policy;
pub mod refine;
pub mod result;
pub mod task;

pub use apg::{apg_train, policy_gradient, ApgConfig, EpochStats};
pub use cem::{cem_mpc, CemConfig, Replan};
pub use error::{PlanError, PlanResult};
pub use eval::{controller_actions, evaluate, Controller, Evaluation};
pub use policy::{PolicyConfig, PolicyParams};
pub use refine::{diff_cem_mpc, diff_mpc, random_actions, refine_plan, score_and_gradient, GradRefineConfig, Objective};
pub use result::PlanOutcome;
pub use task::Task;

macro_rules! precision_aliases {
    ($name:ident, $t:ty) => {
        pub mod $name {
            pub type PlanOutcome = crate::result::PlanOutcome<$t>;
            pub type PolicyParams = crate::policy::PolicyParams<$t>;
        }
    };
}

precision_aliases!(f64, f64);
precision_aliases!(f32, f32);
