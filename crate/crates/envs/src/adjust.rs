//! Contact adjustment: pulls macro start points that miss the object back
//! toward it, so the macro always touches the object and its gradients do not
//! vanish. Both maps are continuous in the input point.

use softgrad_core::{Mat3, Real, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Adjust<T> {
    Unchanged,
    /// Pulled toward object point `nearest` along `u = p − x_nearest`.
    Pick { nearest: usize, u: Vec3<T>, rho: T },
    /// Pulled toward the object's horizontal bounding box grown by `rho`.
    Push { argmin: [usize; 2], argmax: [usize; 2], clamp: [i8; 2], u: Vec3<T>, rho: T },
}

impl<T: Real> Adjust<T> {
    pub fn moved(&self) -> bool {
        !matches!(self, Adjust::Unchanged)
    }
}

/// Radial map `u ↦ s(|u|)·u` and its Jacobian `sI + s′/|u| · u uᵀ`.
fn radial<T: Real>(u: Vec3<T>, d_new: T, d_new_prime: T) -> (T, Mat3<T>) {
    let d = u.norm();
    let s = d_new / d;
    let ds = (d_new_prime * d - d_new) / (d * d);
    (s, Mat3::scaled_identity(s) + Mat3::outer(u, u) * (ds / d))
}

fn pick_map<T: Real>(d: T, rho: T) -> (T, T) {
    let e = rho * (T::one() - d / rho).exp();
    (e, -e / rho)
}

fn push_map<T: Real>(d: T, rho: T) -> (T, T) {
    let e = (-d / rho).exp();
    (rho * (T::one() - e), e)
}

/// Pick points farther than `rho` from every object point are moved onto the
/// ball of radius `ρ·exp(1 − d/ρ)` around the nearest point.
pub fn snap_pick<T: Real>(p: Vec3<T>, points: &[Vec3<T>], rho: T) -> (Vec3<T>, Adjust<T>) {
    let (nearest, d) = crate::reward::tool_distance(p, points);
    if d <= rho {
        return (p, Adjust::Unchanged);
    }
    let u = p - points[nearest];
    let (dn, _) = pick_map(d, rho);
    (points[nearest] + u * (dn / d), Adjust::Pick { nearest, u, rho })
}

/// Push starts outside the object's horizontal bounding box grown by `rho`
/// end up at most `rho` outside it. Height is left alone.
pub fn snap_push<T: Real>(p: Vec3<T>, points: &[Vec3<T>], rho: T) -> (Vec3<T>, Adjust<T>) {
    let mut argmin = [0usize; 2];
    let mut argmax = [0usize; 2];
    for (i, x) in points.iter().enumerate() {
        for a in 0..2 {
            if x[a] < points[argmin[a]][a] {
                argmin[a] = i;
            }
            if x[a] > points[argmax[a]][a] {
                argmax[a] = i;
            }
        }
    }
    let mut q = p;
    let mut clamp = [0i8; 2];
    for a in 0..2 {
        let lo = points[argmin[a]][a] - rho;
        let hi = points[argmax[a]][a] + rho;
        if p[a] < lo {
            q[a] = lo;
            clamp[a] = -1;
        } else if p[a] > hi {
            q[a] = hi;
            clamp[a] = 1;
        }
    }
    let u = p - q;
    let d = u.norm();
    if d == T::zero() {
        return (p, Adjust::Unchanged);
    }
    let (dn, _) = push_map(d, rho);
    (q + u * (dn / d), Adjust::Push { argmin, argmax, clamp, u, rho })
}

/// Returns `p̄` and per-object-point cotangents.
pub fn adjust_vjp<T: Real>(adj: &Adjust<T>, bar: Vec3<T>) -> (Vec3<T>, Vec<(usize, Vec3<T>)>) {
    match *adj {
        Adjust::Unchanged => (bar, Vec::new()),
        Adjust::Pick { nearest, u, rho } => {
            let (dn, dnp) = pick_map(u.norm(), rho);
            let (_, m) = radial(u, dn, dnp);
            let pb = m * bar;
            (pb, vec![(nearest, bar - pb)])
        }
        Adjust::Push { argmin, argmax, clamp, u, rho } => {
            let (dn, dnp) = push_map(u.norm(), rho);
            let (_, m) = radial(u, dn, dnp);
            let ub = m * bar;
            let qb = bar - ub;
            let mut pb = Vec3::new(ub[0], ub[1], bar[2]);
            let mut pts = Vec::new();
            for a in 0..2 {
                match clamp[a] {
                    0 => pb[a] += qb[a],
                    c => {
                        let idx = if c < 0 { argmin[a] } else { argmax[a] };
                        let mut g = Vec3::zero();
                        g[a] = qb[a];
                        pts.push((idx, g));
                    }
                }
            }
            (pb, pts)
        }
    }
}
