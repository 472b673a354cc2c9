//! Goal distances and the exp-distance rewards, with their gradients.

use serde::{Deserialize, Serialize};
use softgrad_core::{Real, Vec3};

use crate::error::{EnvError, EnvResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correspondence {
    /// Point `i` is compared with goal point `i`.
    Corresponded,
    /// Symmetric Chamfer distance between the two sets.
    Unordered,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpec<T> {
    pub points: Vec<Vec3<T>>,
    pub mode: Correspondence,
}

#[inline]
fn unit_or_zero<T: Real>(d: Vec3<T>) -> (T, Vec3<T>) {
    let n = d.norm();
    if n > T::zero() {
        (n, d / n)
    } else {
        (n, Vec3::zero())
    }
}

/// Mean Euclidean distance between corresponding points.
pub fn mean_distance<T: Real>(x: &[Vec3<T>], g: &[Vec3<T>]) -> EnvResult<T> {
    if x.len() != g.len() || x.is_empty() {
        return Err(EnvError::Correspondence { expected: g.len(), got: x.len() });
    }
    let total: T = x.iter().zip(g).map(|(a, b)| (*a - *b).norm()).sum();
    Ok(total / T::from_usize_lossy(x.len()))
}

pub fn mean_distance_vjp<T: Real>(x: &[Vec3<T>], g: &[Vec3<T>], d_bar: T) -> Vec<Vec3<T>> {
    let s = d_bar / T::from_usize_lossy(x.len());
    x.iter().zip(g).map(|(a, b)| unit_or_zero(*a - *b).1 * s).collect()
}

fn nearest<T: Real>(p: Vec3<T>, set: &[Vec3<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (i, q) in set.iter().enumerate() {
        let d = (p - *q).norm_sq();
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// `½ (mean_a min_b |a − b| + mean_b min_a |a − b|)`.
pub fn chamfer<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    let half = T::lit(0.5);
    let fwd: T = a.iter().map(|p| nearest(*p, b).1).sum::<T>() / T::from_usize_lossy(a.len());
    let bwd: T = b.iter().map(|p| nearest(*p, a).1).sum::<T>() / T::from_usize_lossy(b.len());
    half * (fwd + bwd)
}

/// Gradient of [`chamfer`] with respect to `a`, scaled by `d_bar`.
pub fn chamfer_vjp<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>], d_bar: T) -> Vec<Vec3<T>> {
    let half = T::lit(0.5) * d_bar;
    let sa = half / T::from_usize_lossy(a.len());
    let sb = half / T::from_usize_lossy(b.len());
    let mut out = vec![Vec3::zero(); a.len()];
    for (i, p) in a.iter().enumerate() {
        let (j, _) = nearest(*p, b);
        out[i] += unit_or_zero(*p - b[j]).1 * sa;
    }
    for q in b {
        let (i, _) = nearest(*q, a);
        out[i] += unit_or_zero(a[i] - *q).1 * sb;
    }
    out
}

/// `D(points, goal)`. Unordered goals expect `points` already subsampled.
pub fn distance_d<T: Real>(points: &[Vec3<T>], goal: &GoalSpec<T>) -> EnvResult<T> {
    match goal.mode {
        Correspondence::Corresponded => mean_distance(points, &goal.points),
        Correspondence::Unordered => {
            if points.is_empty() || goal.points.is_empty() {
                return Err(EnvError::Correspondence { expected: goal.points.len(), got: points.len() });
            }
            Ok(chamfer(points, &goal.points))
        }
    }
}

pub fn distance_d_vjp<T: Real>(points: &[Vec3<T>], goal: &GoalSpec<T>, d_bar: T) -> Vec<Vec3<T>> {
    match goal.mode {
        Correspondence::Corresponded => mean_distance_vjp(points, &goal.points, d_bar),
        Correspondence::Unordered => chamfer_vjp(points, &goal.points, d_bar),
    }
}

/// `exp(−λ·D)`.
pub fn reward_gt<T: Real>(d: T, lambda: T) -> T {
    (-lambda * d).exp()
}

/// Distance from `tool` to the nearest object point and that point's index.
pub fn tool_distance<T: Real>(tool: Vec3<T>, points: &[Vec3<T>]) -> (usize, T) {
    nearest(tool, points)
}

/// `exp(−min_i |tool − x_i|)`.
pub fn reward_aux<T: Real>(tool: Vec3<T>, points: &[Vec3<T>]) -> T {
    (-tool_distance(tool, points).1).exp()
}

/// Gradient of `w · reward_aux`: `(∂/∂tool, nearest index, ∂/∂x_nearest)`.
pub fn reward_aux_vjp<T: Real>(tool: Vec3<T>, points: &[Vec3<T>], w: T) -> (Vec3<T>, usize, Vec3<T>) {
    let (i, d) = nearest(tool, points);
    let (_, u) = unit_or_zero(tool - points[i]);
    let g = u * (-(-d).exp() * w);
    (g, i, -g)
}
