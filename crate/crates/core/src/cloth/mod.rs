//! Mass-spring cloth: Hooke springs with axial damping, semi-implicit Euler,
//! collider contact and kinematic grasping.

mod mesh;
mod template;

pub use mesh::{build_grid_cloth, build_masked_cloth, ClothParams, ClothTopology, Spring, SpringKind};
pub use template::{parse_template, write_template};

use std::sync::Arc;

use crate::collider::{ColliderCot, ColliderSet};
use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scalar::Real;

/// Springs shorter than this are rejected as degenerate.
pub const EPS_LEN: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ClothMesh<T> {
    pub x: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    pub topo: Arc<ClothTopology<T>>,
}

impl<T: Real> ClothMesh<T> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mass(&self) -> &[T] {
        &self.topo.mass
    }

    pub fn springs(&self) -> &[Spring<T>] {
        &self.topo.springs
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.topo.faces
    }

    /// Kinetic plus spring potential energy, plus gravitational potential
    /// relative to `z = 0`.
    pub fn energy(&self, gravity: Vec3<T>) -> T {
        let half = T::lit(0.5);
        let mut e = T::zero();
        for i in 0..self.len() {
            let m = self.topo.mass[i];
            e += half * m * self.v[i].norm_sq() - m * gravity.dot(self.x[i]);
        }
        for s in self.springs() {
            let l = (self.x[s.i as usize] - self.x[s.j as usize]).norm() - s.rest;
            e += half * s.k * l * l;
        }
        e
    }

    /// Largest stable step `2·√(min mass / max stiffness)·c_stab`.
    pub fn stability_bound(&self, c_stab: T) -> T {
        let mmin = self.mass().iter().copied().fold(T::infinity(), T::min);
        let kmax = self.springs().iter().map(|s| s.k).fold(T::zero(), T::max);
        T::lit(2.0) * (mmin / kmax).sqrt() * c_stab
    }

    pub fn cast<U: Real>(&self) -> ClothMesh<U> {
        ClothMesh {
            x: self.x.iter().map(|v| v.cast()).collect(),
            v: self.v.iter().map(|v| v.cast()).collect(),
            topo: Arc::new(self.topo.cast()),
        }
    }
}

/// Vertices rigidly carried by the gripper, with offsets from the grasp point.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AttachmentSet<T> {
    pub pairs: Vec<(u32, Vec3<T>)>,
}

impl<T: Real> AttachmentSet<T> {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn contains(&self, vertex: u32) -> bool {
        self.pairs.iter().any(|&(i, _)| i == vertex)
    }

    /// Per-vertex membership flags for a mesh with `n` vertices.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &(i, _) in &self.pairs {
            m[i as usize] = true;
        }
        m
    }
}

/// All vertices within `radius` of `point`.
pub fn attach_nearest<T: Real>(mesh: &ClothMesh<T>, point: Vec3<T>, radius: T) -> AttachmentSet<T> {
    let r2 = radius * radius;
    let pairs = mesh
        .x
        .iter()
        .enumerate()
        .filter(|(_, x)| (**x - point).norm_sq() <= r2)
        .map(|(i, x)| (i as u32, *x - point))
        .collect();
    AttachmentSet { pairs }
}

/// Integration settings for [`cloth_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClothConfig<T> {
    pub dt: T,
    pub gravity: Vec3<T>,
    pub damping: T,
    /// Stability safety factor applied to [`ClothMesh::stability_bound`].
    pub c_stab: T,
}

impl<T: Real> ClothConfig<T> {
    pub fn validate(&self, mesh: &ClothMesh<T>) -> Result<()> {
        if !(self.dt >= T::zero()) {
            return Err(SimError::InvalidConfig("cloth dt must be non-negative".into()));
        }
        let bound = mesh.stability_bound(self.c_stab);
        if self.dt > bound {
            return Err(SimError::InvalidConfig(format!("cloth dt {} exceeds stability bound {}", self.dt, bound)));
        }
        Ok(())
    }
}

/// Gripper translation driving attached vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gripper<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
}

#[inline(always)]
fn spring_force<T: Real>(s: &Spring<T>, x: &[Vec3<T>], v: &[Vec3<T>], kd: T, idx: usize) -> Result<Vec3<T>> {
    let (i, j) = (s.i as usize, s.j as usize);
    let d = x[i] - x[j];
    let l = d.norm();
    if !(l > T::lit(EPS_LEN)) {
        return Err(SimError::DegenerateSpring { spring: idx, length: l.as_f64() });
    }
    let n = d / l;
    let vr = (v[i] - v[j]).dot(n);
    Ok(n * -(s.k * (l - s.rest) + kd * vr))
}

/// Net spring and damping force on every vertex.
pub fn spring_forces<T: Real>(mesh: &ClothMesh<T>, kd: T) -> Result<Vec<Vec3<T>>> {
    let topo = &*mesh.topo;
    let per_spring = topo
        .springs
        .iter()
        .enumerate()
        .map(|(k, s)| spring_force(s, &mesh.x, &mesh.v, kd, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(topo.gather(&per_spring))
}

/// VJP of [`spring_forces`]: returns `(x̄, v̄)`.
pub fn spring_forces_vjp<T: Real>(mesh: &ClothMesh<T>, kd: T, f_bar: &[Vec3<T>]) -> (Vec<Vec3<T>>, Vec<Vec3<T>>) {
    let n = mesh.len();
    let topo = &*mesh.topo;
    let (x, v) = (&mesh.x, &mesh.v);
    let mut dbar = Vec::with_capacity(topo.springs.len());
    let mut vrbar = Vec::with_capacity(topo.springs.len());
    for s in topo.springs.iter() {
        let (i, j) = (s.i as usize, s.j as usize);
        let d = x[i] - x[j];
        let l = d.norm();
        let nrm = d / l;
        let dv = v[i] - v[j];
        let mag = s.k * (l - s.rest) + kd * dv.dot(nrm);
        // f_i = −mag·n, f_j = +mag·n
        let g = f_bar[j] - f_bar[i];
        let mag_bar = g.dot(nrm);
        let mut n_bar = g * mag;
        let l_bar = s.k * mag_bar;
        let vr_bar = kd * mag_bar;
        n_bar += dv * vr_bar;
        let d_bar = (n_bar - nrm * nrm.dot(n_bar)) / l + nrm * l_bar;
        dbar.push(d_bar);
        vrbar.push(nrm * vr_bar);
    }
    let xb = topo.gather(&dbar);
    let vb = topo.gather(&vrbar);
    debug_assert_eq!(xb.len(), n);
    (xb, vb)
}

/// One semi-implicit Euler step. Attached vertices move with the gripper;
/// free vertices get collider boundary conditions before the position update.
pub fn cloth_step<T: Real>(
    mesh: &ClothMesh<T>,
    attachments: &AttachmentSet<T>,
    gripper: &Gripper<T>,
    colliders: &ColliderSet<T>,
    config: &ClothConfig<T>,
) -> Result<ClothMesh<T>> {
    let dt = config.dt;
    let f = spring_forces(mesh, config.damping)?;
    let attached = attachments.mask(mesh.len());
    let mut out = mesh.clone();
    for i in 0..mesh.len() {
        let v1 = if attached[i] {
            gripper.velocity
        } else {
            let v = mesh.v[i] + (f[i] / mesh.topo.mass[i] + config.gravity) * dt;
            colliders.apply(mesh.x[i], v)
        };
        let x1 = (mesh.x[i] + v1 * dt).map(|c| c.max(T::zero()).min(T::one()));
        if !(v1.is_finite() && x1.is_finite()) {
            return Err(SimError::NumericalBlowup { substep: 0, field: if v1.is_finite() { "x" } else { "v" } });
        }
        out.v[i] = v1;
        out.x[i] = x1;
    }
    Ok(out)
}

/// Cotangent of a cloth step's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothStepCot<T> {
    pub x: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    pub gripper_velocity: Vec3<T>,
    pub colliders: Vec<ColliderCot<T>>,
}

/// VJP of [`cloth_step`].
pub fn cloth_step_vjp<T: Real>(
    mesh: &ClothMesh<T>,
    attachments: &AttachmentSet<T>,
    gripper: &Gripper<T>,
    colliders: &ColliderSet<T>,
    config: &ClothConfig<T>,
    x_bar: &[Vec3<T>],
    v_bar: &[Vec3<T>],
) -> Result<ClothStepCot<T>> {
    let n = mesh.len();
    let dt = config.dt;
    let f = spring_forces(mesh, config.damping)?;
    let attached = attachments.mask(n);
    let mut cot = ClothStepCot {
        x: vec![Vec3::zero(); n],
        v: vec![Vec3::zero(); n],
        gripper_velocity: Vec3::zero(),
        colliders: vec![ColliderCot::zero(); colliders.colliders.len()],
    };
    let mut f_bar = vec![Vec3::zero(); n];
    for i in 0..n {
        let v1 = if attached[i] {
            gripper.velocity
        } else {
            let v = mesh.v[i] + (f[i] / mesh.topo.mass[i] + config.gravity) * dt;
            colliders.apply(mesh.x[i], v)
        };
        let raw = mesh.x[i] + v1 * dt;
        let mut xb = x_bar[i];
        for a in 0..3 {
            if raw[a] < T::zero() || raw[a] > T::one() {
                xb[a] = T::zero();
            }
        }
        cot.x[i] += xb;
        let v1_bar = v_bar[i] + xb * dt;
        if attached[i] {
            cot.gripper_velocity += v1_bar;
        } else {
            let v = mesh.v[i] + (f[i] / mesh.topo.mass[i] + config.gravity) * dt;
            let (vb, pb) = colliders.apply_vjp(mesh.x[i], v, v1_bar, &mut cot.colliders);
            cot.x[i] += pb;
            cot.v[i] += vb;
            f_bar[i] = vb * (dt / mesh.topo.mass[i]);
        }
    }
    let (xs, vs) = spring_forces_vjp(mesh, config.damping, &f_bar);
    for i in 0..n {
        cot.x[i] += xs[i];
        cot.v[i] += vs[i];
    }
    Ok(cot)
}
