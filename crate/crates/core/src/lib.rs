//! Differentiable simulation of deformable objects.
//!
//! Two dynamics back ends share one set of foundations:
//!
//! * [`mpm`]: MLS-MPM for liquids, ropes and elastic solids, with a lazily
//!   sized active grid region;
//! * [`cloth`]: a mass-spring cloth model.
//!
//! Every step function has a hand-written vector–Jacobian product, and
//! [`autodiff`] chains them through whole rollouts with checkpointing. All
//! kernels are generic over [`Real`]; the [`f64`](self::f64) and
//! [`f32`](self::f32) modules hold concrete aliases.

pub mod autodiff;
pub mod cloth;
pub mod collider;
pub mod config;
pub mod error;
pub mod math;
pub mod mpm;
pub mod rng;
pub mod scalar;

pub use collider::{sdf_eval, sdf_project_velocity, Collider, ColliderCot, ColliderSet, Friction, Hold, Kinematics, Pose, Shape};
pub use config::{Precision, SimConfig};
pub use error::{Result, SimError};
pub use math::{Mat3, Vec3};
pub use rng::{rng_split, RngState};
pub use scalar::Real;

macro_rules! precision_aliases {
    ($name:ident, $t:ty) => {
        pub mod $name {
            pub type Vec3 = crate::math::Vec3<$t>;
            pub type Mat3 = crate::math::Mat3<$t>;
            pub type SimConfig = crate::config::SimConfig<$t>;
            pub type Collider = crate::collider::Collider<$t>;
            pub type ColliderSet = crate::collider::ColliderSet<$t>;
            pub type MpmState = crate::mpm::MpmState<$t>;
            pub type MaterialParams = crate::mpm::MaterialParams<$t>;
            pub type ClothMesh = crate::cloth::ClothMesh<$t>;
        }
    };
}

precision_aliases!(f64, f64);
precision_aliases!(f32, f32);
