//! Environment states and their cotangents.

use std::sync::Arc;

use softgrad_core::cloth::ClothMesh;
use softgrad_core::mpm::{MpmCot, MpmState};
use softgrad_core::{Real, RngState, Vec3};

use crate::reward::GoalSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics<T> {
    Mpm(MpmState<T>),
    Cloth(ClothMesh<T>),
}

impl<T: Real> Dynamics<T> {
    /// Particle or vertex positions.
    pub fn points(&self) -> &[Vec3<T>] {
        match self {
            Dynamics::Mpm(s) => &s.x,
            Dynamics::Cloth(m) => &m.x,
        }
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }

    pub fn is_empty(&self) -> bool {
        self.points().is_empty()
    }

    pub fn zero_cotangent(&self) -> DynamicsCot<T> {
        match self {
            Dynamics::Mpm(s) => DynamicsCot::Mpm(MpmCot::zeros(s.len())),
            Dynamics::Cloth(m) => DynamicsCot::Cloth { x: vec![Vec3::zero(); m.len()], v: vec![Vec3::zero(); m.len()] },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectorState<T> {
    pub position: Vec3<T>,
    /// Wrist angle about the task's wrist axis.
    pub angle: T,
    /// Particles rigidly carried by the gripper.
    pub held: Arc<[usize]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState<T> {
    pub dynamics: Dynamics<T>,
    pub effector: EffectorState<T>,
    pub t: usize,
    pub rng: RngState,
    pub seed: u64,
    pub goal: Arc<GoalSpec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DynamicsCot<T> {
    Mpm(MpmCot<T>),
    Cloth { x: Vec<Vec3<T>>, v: Vec<Vec3<T>> },
}

impl<T: Real> DynamicsCot<T> {
    pub fn x_mut(&mut self) -> &mut [Vec3<T>] {
        match self {
            DynamicsCot::Mpm(c) => &mut c.x,
            DynamicsCot::Cloth { x, .. } => x,
        }
    }

    pub fn x(&self) -> &[Vec3<T>] {
        match self {
            DynamicsCot::Mpm(c) => &c.x,
            DynamicsCot::Cloth { x, .. } => x,
        }
    }

    pub fn add_assign(&mut self, o: &Self) {
        match (self, o) {
            (DynamicsCot::Mpm(a), DynamicsCot::Mpm(b)) => a.add_assign(b),
            (DynamicsCot::Cloth { x, v }, DynamicsCot::Cloth { x: bx, v: bv }) => {
                for (a, b) in x.iter_mut().zip(bx) {
                    *a += *b;
                }
                for (a, b) in v.iter_mut().zip(bv) {
                    *a += *b;
                }
            }
            _ => panic!("cotangent kinds differ"),
        }
    }

    /// `⟨self, (x, v)⟩` over the position and velocity fields.
    pub fn dot_xv(&self, d: &Dynamics<T>) -> T {
        let (cx, cv): (&[Vec3<T>], &[Vec3<T>]) = match self {
            DynamicsCot::Mpm(c) => (&c.x, &c.v),
            DynamicsCot::Cloth { x, v } => (x, v),
        };
        let (x, v): (&[Vec3<T>], &[Vec3<T>]) = match d {
            Dynamics::Mpm(s) => (&s.x, &s.v),
            Dynamics::Cloth(m) => (&m.x, &m.v),
        };
        cx.iter().zip(x).map(|(a, b)| a.dot(*b)).sum::<T>() + cv.iter().zip(v).map(|(a, b)| a.dot(*b)).sum::<T>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvCot<T> {
    pub dynamics: DynamicsCot<T>,
    pub effector: Vec3<T>,
    pub angle: T,
}

impl<T: Real> EnvCot<T> {
    pub fn add_assign(&mut self, o: &Self) {
        self.dynamics.add_assign(&o.dynamics);
        self.effector += o.effector;
        self.angle += o.angle;
    }
}
