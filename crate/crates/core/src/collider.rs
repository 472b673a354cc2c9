//! Kinematic rigid colliders: signed distances, boundary velocity projection
//! and the vector–Jacobian products of both.
//!
//! Every primitive is evaluated in its local frame. A collider's world pose is
//! `p = c + R q` with `R = rot(axis, angle) · base`, so a wrist rotation spins
//! the collider about a world axis through `c`. Alongside the distance and
//! outward normal, evaluation returns `∂n/∂p`, which the adjoints need to
//! differentiate slip projection with respect to collider pose.

use serde::{Deserialize, Serialize};

use crate::math::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape<T> {
    /// Solid on the side `normal · q < 0` of the plane through the local origin.
    HalfSpace { normal: Vec3<T> },
    Sphere { radius: T },
    /// Segment `a`–`b` swept by `radius`.
    Capsule { a: Vec3<T>, b: Vec3<T>, radius: T },
    Cuboid { half: Vec3<T> },
    /// Open-top box. Local origin at the centre of the inner floor; walls rise
    /// to `height` along local +z.
    Bowl { inner_half_x: T, inner_half_y: T, height: T, thickness: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Friction<T> {
    Sticky,
    Slip { mu: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pose<T> {
    pub position: Vec3<T>,
    pub base: Mat3<T>,
    /// Unit world axis of the wrist rotation.
    pub axis: Vec3<T>,
    pub angle: T,
}

impl<T: Real> Pose<T> {
    pub fn at(position: Vec3<T>) -> Self {
        Self { position, base: Mat3::identity(), axis: Vec3::unit(2), angle: T::zero() }
    }

    pub fn rotation(&self) -> Mat3<T> {
        if self.angle == T::zero() {
            self.base
        } else {
            Mat3::rotation(self.axis, self.angle) * self.base
        }
    }

    pub fn is_rigid(&self) -> bool {
        let r = self.rotation();
        (r * r.transpose() - Mat3::identity()).max_abs() < T::lit(1e-4) && (self.axis.norm() - T::one()).abs() < T::lit(1e-4)
    }
}

/// Linear velocity plus angular speed about the pose's wrist axis.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Kinematics<T> {
    pub linear: Vec3<T>,
    pub angular: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Collider<T> {
    pub shape: Shape<T>,
    pub pose: Pose<T>,
    pub velocity: Kinematics<T>,
    pub friction: Friction<T>,
    /// Points with `distance < margin` are treated as in contact.
    pub margin: T,
    /// Width of the band below `margin` over which the boundary condition is
    /// blended in. Zero gives a hard switch at `margin`.
    pub ramp: T,
    /// Driven by the effector; only these receive pose cotangents.
    pub attached: bool,
}

/// A particle that rigidly follows a collider's velocity field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hold {
    pub particle: usize,
    pub collider: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ColliderSet<T> {
    pub colliders: Vec<Collider<T>>,
    pub held: Vec<Hold>,
}

impl<T: Real> ColliderSet<T> {
    pub fn new(colliders: Vec<Collider<T>>) -> Self {
        Self { colliders, held: Vec::new() }
    }

    /// Applies every collider's boundary condition in order.
    #[inline]
    pub fn apply(&self, p: Vec3<T>, mut v: Vec3<T>) -> Vec3<T> {
        for c in &self.colliders {
            if let Some(out) = c.apply(p, v) {
                v = out;
            }
        }
        v
    }

    /// VJP of [`ColliderSet::apply`]. Collider cotangents are added into `cots`,
    /// which must have one entry per collider. Returns `(v̄, p̄)`.
    pub fn apply_vjp(&self, p: Vec3<T>, v: Vec3<T>, out_bar: Vec3<T>, cots: &mut [ColliderCot<T>]) -> (Vec3<T>, Vec3<T>) {
        let mut inputs = [Vec3::zero(); 8];
        let mut stack = Vec::new();
        let mut cur = v;
        for (k, c) in self.colliders.iter().enumerate() {
            if k < inputs.len() {
                inputs[k] = cur;
            } else {
                stack.push(cur);
            }
            if let Some(out) = c.apply(p, cur) {
                cur = out;
            }
        }
        let mut v_bar = out_bar;
        let mut p_bar = Vec3::zero();
        for (k, c) in self.colliders.iter().enumerate().rev() {
            let vin = if k < inputs.len() { inputs[k] } else { stack[k - inputs.len()] };
            if c.contact(p).is_none() {
                continue;
            }
            let (vb, pb, cot) = c.apply_vjp(p, vin, v_bar);
            v_bar = vb;
            p_bar += pb;
            cots[k].accumulate(&cot);
        }
        (v_bar, p_bar)
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        for (k, c) in self.colliders.iter().enumerate() {
            if !c.pose.is_rigid() {
                return Err(crate::error::SimError::InvalidConfig(format!("collider {k} pose is not rigid")));
            }
            if let Shape::Bowl { thickness, .. } = c.shape {
                if !(thickness > T::zero()) {
                    return Err(crate::error::SimError::InvalidConfig(format!("bowl {k} needs positive wall thickness")));
                }
            }
        }
        Ok(())
    }
}

/// Distance, outward unit normal and normal Jacobian `∂n/∂p` (symmetric).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfSample<T> {
    pub distance: T,
    pub normal: Vec3<T>,
    pub hessian: Mat3<T>,
}

/// Cotangent of a collider's pose and velocity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ColliderCot<T> {
    pub position: Vec3<T>,
    pub angle: T,
    pub linear: Vec3<T>,
    pub angular: T,
}

impl<T: Real> ColliderCot<T> {
    pub fn zero() -> Self {
        Self { position: Vec3::zero(), angle: T::zero(), linear: Vec3::zero(), angular: T::zero() }
    }

    pub fn accumulate(&mut self, o: &Self) {
        self.position += o.position;
        self.angle += o.angle;
        self.linear += o.linear;
        self.angular += o.angular;
    }
}

fn sphere_like<T: Real>(r: Vec3<T>, radius: T, axis_removed: Option<Vec3<T>>) -> SdfSample<T> {
    let l = r.norm();
    if l <= T::epsilon() {
        // medial point: any unit vector is a valid subgradient
        return SdfSample { distance: -radius, normal: Vec3::unit(2), hessian: Mat3::zero() };
    }
    let n = r / l;
    let mut h = Mat3::identity() - Mat3::outer(n, n);
    if let Some(e) = axis_removed {
        h = h - Mat3::outer(e, e);
    }
    SdfSample { distance: l - radius, normal: n, hessian: h * (T::one() / l) }
}

fn cuboid_local<T: Real>(q: Vec3<T>, half: Vec3<T>) -> SdfSample<T> {
    let d = q.map(|v| v.abs()) - half;
    let outside = d.0.iter().any(|&v| v > T::zero());
    if outside {
        let mut r = Vec3::zero();
        let mut proj = Mat3::zero();
        for i in 0..3 {
            if d[i] > T::zero() {
                r[i] = if q[i] < T::zero() { -d[i] } else { d[i] };
                proj.0[i][i] = T::one();
            }
        }
        let l = r.norm();
        let n = r / l;
        SdfSample { distance: l, normal: n, hessian: (proj - Mat3::outer(n, n)) * (T::one() / l) }
    } else {
        let mut k = 0;
        for i in 1..3 {
            if d[i] > d[k] {
                k = i;
            }
        }
        let mut n = Vec3::zero();
        n[k] = if q[k] < T::zero() { -T::one() } else { T::one() };
        SdfSample { distance: d[k], normal: n, hessian: Mat3::zero() }
    }
}

/// The five boxes whose union forms a bowl, as `(centre, half extents)`.
pub fn bowl_parts<T: Real>(ihx: T, ihy: T, height: T, t: T) -> [(Vec3<T>, Vec3<T>); 5] {
    let half = T::lit(0.5);
    let ht = t * half;
    let hh = height * half;
    [
        (Vec3::new(T::zero(), T::zero(), -ht), Vec3::new(ihx + t, ihy + t, ht)),
        (Vec3::new(ihx + ht, T::zero(), hh), Vec3::new(ht, ihy + t, hh)),
        (Vec3::new(-(ihx + ht), T::zero(), hh), Vec3::new(ht, ihy + t, hh)),
        (Vec3::new(T::zero(), ihy + ht, hh), Vec3::new(ihx, ht, hh)),
        (Vec3::new(T::zero(), -(ihy + ht), hh), Vec3::new(ihx, ht, hh)),
    ]
}

impl<T: Real> Shape<T> {
    pub fn eval_local(&self, q: Vec3<T>) -> SdfSample<T> {
        match self {
            Shape::HalfSpace { normal } => {
                SdfSample { distance: normal.dot(q), normal: *normal, hessian: Mat3::zero() }
            }
            Shape::Sphere { radius } => sphere_like(q, *radius, None),
            Shape::Capsule { a, b, radius } => {
                let e = *b - *a;
                let len2 = e.norm_sq();
                let t = if len2 > T::zero() { (q - *a).dot(e) / len2 } else { T::zero() };
                if t <= T::zero() {
                    sphere_like(q - *a, *radius, None)
                } else if t >= T::one() {
                    sphere_like(q - *b, *radius, None)
                } else {
                    let axis = e / len2.sqrt();
                    sphere_like(q - (*a + e * t), *radius, Some(axis))
                }
            }
            Shape::Cuboid { half } => cuboid_local(q, *half),
            Shape::Bowl { inner_half_x, inner_half_y, height, thickness } => {
                let mut best: Option<SdfSample<T>> = None;
                for (c, h) in bowl_parts(*inner_half_x, *inner_half_y, *height, *thickness) {
                    let s = cuboid_local(q - c, h);
                    if best.map_or(true, |b| s.distance < b.distance) {
                        best = Some(s);
                    }
                }
                best.expect("bowl has parts")
            }
        }
    }

    /// Loose local-frame bounding radius, `None` when unbounded.
    pub fn bounding_radius(&self) -> Option<T> {
        match self {
            Shape::HalfSpace { .. } => None,
            Shape::Sphere { radius } => Some(*radius),
            Shape::Capsule { a, b, radius } => Some(a.norm().max(b.norm()) + *radius),
            Shape::Cuboid { half } => Some(half.norm()),
            Shape::Bowl { inner_half_x, inner_half_y, height, thickness } => Some(
                Vec3::new(*inner_half_x + *thickness, *inner_half_y + *thickness, *height + *thickness).norm(),
            ),
        }
    }
}

impl<T: Real> Collider<T> {
    pub fn new(shape: Shape<T>, pose: Pose<T>, friction: Friction<T>) -> Self {
        Self { shape, pose, velocity: Kinematics::default(), friction, margin: T::zero(), ramp: T::zero(), attached: false }
    }

    pub fn with_band(mut self, margin: T, ramp: T) -> Self {
        self.margin = margin;
        self.ramp = ramp;
        self
    }

    /// Blend weight of the boundary condition at signed distance `d` and its
    /// derivative: 1 deep in contact, smoothstep to 0 at `margin`.
    #[inline]
    pub fn blend(&self, d: T) -> (T, T) {
        if d >= self.margin {
            return (T::zero(), T::zero());
        }
        let inner = self.margin - self.ramp;
        if self.ramp <= T::zero() || d <= inner {
            return (T::one(), T::zero());
        }
        let u = (d - inner) / self.ramp;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let s = T::one() - u * u * (three - two * u);
        let ds = -T::lit(6.0) * u * (T::one() - u) / self.ramp;
        (s, ds)
    }

    /// Blended boundary condition `v + s(d)·(project(v) − v)`; `None` outside
    /// the band.
    #[inline]
    pub fn apply(&self, p: Vec3<T>, v: Vec3<T>) -> Option<Vec3<T>> {
        let sample = self.contact(p)?;
        let (s, _) = self.blend(sample.distance);
        let pv = self.project(&sample, p, v);
        Some(if s == T::one() { pv } else { v + (pv - v) * s })
    }

    /// VJP of [`Collider::apply`] for a point inside the band.
    pub fn apply_vjp(&self, p: Vec3<T>, v: Vec3<T>, out_bar: Vec3<T>) -> (Vec3<T>, Vec3<T>, ColliderCot<T>) {
        let sample = match self.contact(p) {
            Some(s) => s,
            None => return (out_bar, Vec3::zero(), ColliderCot::zero()),
        };
        let (s, ds) = self.blend(sample.distance);
        let (pv_bar_v, mut p_bar, mut cot) = self.project_vjp(&sample, p, v, out_bar * s);
        let v_bar = out_bar * (T::one() - s) + pv_bar_v;
        if ds != T::zero() {
            let pv = self.project(&sample, p, v);
            let d_bar = out_bar.dot(pv - v) * ds;
            let n = sample.normal;
            p_bar += n * d_bar;
            cot.position -= n * d_bar;
            cot.angle -= d_bar * n.dot(self.pose.axis.cross(p - self.pose.position));
        }
        (v_bar, p_bar, cot)
    }

    /// World-frame evaluation at `p`.
    pub fn eval(&self, p: Vec3<T>) -> SdfSample<T> {
        let r = self.pose.rotation();
        let q = r.transpose() * (p - self.pose.position);
        let s = self.shape.eval_local(q);
        SdfSample { distance: s.distance, normal: r * s.normal, hessian: r * s.hessian * r.transpose() }
    }

    /// Contact sample when `p` lies inside the margin band, with a cheap
    /// bounding-sphere rejection first.
    #[inline]
    pub fn contact(&self, p: Vec3<T>) -> Option<SdfSample<T>> {
        if let Some(rad) = self.shape.bounding_radius() {
            let reach = rad + self.margin.max(T::zero());
            if (p - self.pose.position).norm_sq() > reach * reach {
                return None;
            }
        }
        let s = self.eval(p);
        (s.distance < self.margin).then_some(s)
    }

    /// Rigid velocity of the collider at world point `p`.
    #[inline]
    pub fn velocity_at(&self, p: Vec3<T>) -> Vec3<T> {
        self.velocity.linear + self.pose.axis.cross(p - self.pose.position) * self.velocity.angular
    }

    /// Boundary condition at a point already known to be in contact.
    pub fn project(&self, sample: &SdfSample<T>, p: Vec3<T>, v: Vec3<T>) -> Vec3<T> {
        let vc = self.velocity_at(p);
        match self.friction {
            Friction::Sticky => vc,
            Friction::Slip { mu } => vc + project_relative(v - vc, sample.normal, mu),
        }
    }

    /// VJP of [`Collider::project`]: returns `(v̄, p̄, pose/velocity cotangent)`.
    pub fn project_vjp(
        &self,
        sample: &SdfSample<T>,
        p: Vec3<T>,
        v: Vec3<T>,
        out_bar: Vec3<T>,
    ) -> (Vec3<T>, Vec3<T>, ColliderCot<T>) {
        let vc = self.velocity_at(p);
        let (v_bar, vc_bar, n_bar) = match self.friction {
            Friction::Sticky => (Vec3::zero(), out_bar, Vec3::zero()),
            Friction::Slip { mu } => {
                let (r_bar, n_bar) = project_relative_vjp(v - vc, sample.normal, mu, out_bar);
                (r_bar, out_bar - r_bar, n_bar)
            }
        };
        let a = self.pose.axis;
        let w = self.velocity.angular;
        let rel = p - self.pose.position;
        let h = sample.hessian;
        let hn = h * n_bar;
        let mut cot = ColliderCot::zero();
        cot.linear = vc_bar;
        cot.angular = vc_bar.dot(a.cross(rel));
        cot.position = a.cross(vc_bar) * w - hn;
        cot.angle = n_bar.dot(a.cross(sample.normal) - h * a.cross(rel));
        let p_bar = hn - a.cross(vc_bar) * w;
        (v_bar, p_bar, cot)
    }
}

/// Removes the approaching normal component of the relative velocity `r` and
/// applies a Coulomb clamp to the tangential remainder.
#[inline]
pub fn project_relative<T: Real>(r: Vec3<T>, n: Vec3<T>, mu: T) -> Vec3<T> {
    let vn = r.dot(n);
    if vn >= T::zero() {
        return r;
    }
    let t = r - n * vn;
    let tn = t.norm();
    if tn <= -mu * vn {
        return Vec3::zero();
    }
    t * (T::one() + mu * vn / tn)
}

/// VJP of [`project_relative`] with respect to `r` and `n`.
pub fn project_relative_vjp<T: Real>(r: Vec3<T>, n: Vec3<T>, mu: T, out_bar: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let vn = r.dot(n);
    if vn >= T::zero() {
        return (out_bar, Vec3::zero());
    }
    let t = r - n * vn;
    let tn = t.norm();
    if tn <= -mu * vn {
        return (Vec3::zero(), Vec3::zero());
    }
    let s = T::one() + mu * vn / tn;
    let mut t_bar = out_bar * s;
    let s_bar = out_bar.dot(t);
    let mut vn_bar = s_bar * mu / tn;
    let tn_bar = -s_bar * mu * vn / (tn * tn);
    t_bar += t * (tn_bar / tn);
    let mut r_bar = t_bar;
    vn_bar -= t_bar.dot(n);
    let mut n_bar = t_bar * (-vn);
    r_bar += n * vn_bar;
    n_bar += r * vn_bar;
    (r_bar, n_bar)
}

/// Signed distance and outward normal of `collider` at `point`.
pub fn sdf_eval<T: Real>(collider: &Collider<T>, point: Vec3<T>) -> (T, Vec3<T>) {
    let s = collider.eval(point);
    (s.distance, s.normal)
}

/// Boundary-condition velocity for `v` at `point`, which must lie in the
/// collider's margin band.
pub fn sdf_project_velocity<T: Real>(collider: &Collider<T>, point: Vec3<T>, v: Vec3<T>) -> Vec3<T> {
    let s = collider.eval(point);
    collider.project(&s, point, v)
}
