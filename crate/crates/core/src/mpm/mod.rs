//! MLS-MPM for liquids, ropes and elastic solids.
//!
//! One substep is: detect the active region, scatter particle mass and APIC
//! momentum to the region's nodes, update node velocities (gravity, colliders,
//! sticky walls), then gather velocities and velocity gradients back to the
//! particles. [`mpm_step_vjp`] is the exact adjoint of [`mpm_step`].

pub mod kernel;
pub mod material;
pub mod region;
pub mod snapshot;
mod step;

use std::sync::Arc;

pub use kernel::{bspline_weights, Weights};
pub use material::{kirchhoff, kirchhoff_vjp, stress, MaterialKind, MaterialParams};
pub use region::{detect_active_region, ActiveRegion};
pub use step::{g2p, grid_op, mpm_step, mpm_step_in, mpm_step_vjp, p2g, GridBuffer};

use crate::error::{Result, SimError};
use crate::math::{Mat3, Vec3};
use crate::scalar::Real;

/// Particle state. `mass`, `volume0` and `material` never change during a
/// rollout and are shared between copies.
#[derive(Clone, Debug, PartialEq)]
pub struct MpmState<T> {
    pub x: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    pub c: Vec<Mat3<T>>,
    pub f: Vec<Mat3<T>>,
    pub j: Vec<T>,
    pub mass: Arc<[T]>,
    pub volume0: Arc<[T]>,
    pub material: Arc<[u16]>,
}

impl<T: Real> MpmState<T> {
    /// Particles at rest (`C = 0`, `F = I`, `J = 1`).
    pub fn at_rest(x: Vec<Vec3<T>>, mass: Vec<T>, volume0: Vec<T>, material: Vec<u16>) -> Self {
        let n = x.len();
        Self {
            v: vec![Vec3::zero(); n],
            c: vec![Mat3::zero(); n],
            f: vec![Mat3::identity(); n],
            j: vec![T::one(); n],
            x,
            mass: mass.into(),
            volume0: volume0.into(),
            material: material.into(),
        }
    }

    /// Samples `positions` with a per-particle volume and the given material.
    pub fn sampled(positions: Vec<Vec3<T>>, volume: T, material: u16, params: &MaterialParams<T>) -> Self {
        let n = positions.len();
        Self::at_rest(positions, vec![params.density * volume; n], vec![volume; n], vec![material; n])
    }

    /// Concatenates particle sets.
    pub fn merge(parts: &[MpmState<T>]) -> Self {
        let mut out = Self::at_rest(Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut m, mut vol, mut mat) = (Vec::new(), Vec::new(), Vec::new());
        for p in parts {
            out.x.extend_from_slice(&p.x);
            out.v.extend_from_slice(&p.v);
            out.c.extend_from_slice(&p.c);
            out.f.extend_from_slice(&p.f);
            out.j.extend_from_slice(&p.j);
            m.extend_from_slice(&p.mass);
            vol.extend_from_slice(&p.volume0);
            mat.extend_from_slice(&p.material);
        }
        out.mass = m.into();
        out.volume0 = vol.into();
        out.material = mat.into();
        out
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_mass(&self) -> T {
        self.mass.iter().copied().sum()
    }

    /// Σ m (v) — the APIC momentum of the particles.
    pub fn total_momentum(&self) -> Vec3<T> {
        let mut p = Vec3::zero();
        for (v, &m) in self.v.iter().zip(self.mass.iter()) {
            p += *v * m;
        }
        p
    }

    pub fn validate(&self, materials: &[MaterialParams<T>]) -> Result<()> {
        let n = self.len();
        if [self.v.len(), self.c.len(), self.f.len(), self.j.len(), self.mass.len(), self.volume0.len(), self.material.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(SimError::InvalidConfig("particle arrays have mismatched lengths".into()));
        }
        for i in 0..n {
            if !self.x[i].0.iter().all(|&c| c >= T::zero() && c <= T::one()) {
                return Err(SimError::InvalidConfig(format!("particle {i} outside the unit cube")));
            }
            if !(self.mass[i] > T::zero()) {
                return Err(SimError::InvalidConfig(format!("particle {i} has non-positive mass")));
            }
            let mat = materials
                .get(self.material[i] as usize)
                .ok_or_else(|| SimError::InvalidConfig(format!("particle {i} references unknown material")))?;
            if mat.kind == MaterialKind::NeoHookean && !(self.f[i].det() > T::zero()) {
                return Err(SimError::DegenerateElement { particle: i, det: self.f[i].det().as_f64() });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> MpmState<U> {
        MpmState {
            x: self.x.iter().map(|v| v.cast()).collect(),
            v: self.v.iter().map(|v| v.cast()).collect(),
            c: self.c.iter().map(|m| m.cast()).collect(),
            f: self.f.iter().map(|m| m.cast()).collect(),
            j: self.j.iter().map(|&j| U::lit(j.as_f64())).collect(),
            mass: self.mass.iter().map(|&m| U::lit(m.as_f64())).collect(),
            volume0: self.volume0.iter().map(|&m| U::lit(m.as_f64())).collect(),
            material: self.material.clone(),
        }
    }
}

/// Cotangent of the dynamic fields of an [`MpmState`].
#[derive(Clone, Debug, PartialEq)]
pub struct MpmCot<T> {
    pub x: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    pub c: Vec<Mat3<T>>,
    pub f: Vec<Mat3<T>>,
    pub j: Vec<T>,
}

impl<T: Real> MpmCot<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![Vec3::zero(); n],
            v: vec![Vec3::zero(); n],
            c: vec![Mat3::zero(); n],
            f: vec![Mat3::zero(); n],
            j: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn add_assign(&mut self, o: &Self) {
        for i in 0..self.len() {
            self.x[i] += o.x[i];
            self.v[i] += o.v[i];
            self.c[i] += o.c[i];
            self.f[i] += o.f[i];
            self.j[i] += o.j[i];
        }
    }

    pub fn scale(&mut self, s: T) {
        for i in 0..self.len() {
            self.x[i] *= s;
            self.v[i] *= s;
            self.c[i] = self.c[i] * s;
            self.f[i] = self.f[i] * s;
            self.j[i] *= s;
        }
    }

    /// Inner product with a same-shaped state, used by dot-product tests.
    pub fn dot_state(&self, s: &MpmState<T>) -> T {
        let mut acc = T::zero();
        for i in 0..self.len() {
            acc += self.x[i].dot(s.x[i]) + self.v[i].dot(s.v[i]) + self.c[i].ddot(&s.c[i]) + self.f[i].ddot(&s.f[i]) + self.j[i] * s.j[i];
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        (0..self.len()).all(|i| {
            self.x[i].is_finite() && self.v[i].is_finite() && self.c[i].is_finite() && self.f[i].is_finite() && self.j[i].is_finite()
        })
    }
}
