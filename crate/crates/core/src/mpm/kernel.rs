//! Quadratic B-spline interpolation kernel.

use crate::math::Vec3;
use crate::scalar::Real;

/// Per-axis weights `w[axis][k]` and their derivatives with respect to the
/// fractional coordinate, for the three nodes `base + k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weights<T> {
    pub w: [[T; 3]; 3],
    pub dw: [[T; 3]; 3],
}

impl<T: Real> Weights<T> {
    #[inline(always)]
    pub fn weight(&self, o: [usize; 3]) -> T {
        self.w[0][o[0]] * self.w[1][o[1]] * self.w[2][o[2]]
    }

    /// Gradient of [`Weights::weight`] with respect to the fractional position.
    #[inline(always)]
    pub fn grad(&self, o: [usize; 3]) -> Vec3<T> {
        let (w, dw) = (&self.w, &self.dw);
        Vec3::new(
            dw[0][o[0]] * w[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * dw[1][o[1]] * w[2][o[2]],
            w[0][o[0]] * w[1][o[1]] * dw[2][o[2]],
        )
    }
}

#[inline(always)]
pub fn axis_weights<T: Real>(f: T) -> ([T; 3], [T; 3]) {
    let half = T::lit(0.5);
    let a = T::lit(1.5) - f;
    let b = f - T::one();
    let c = f - half;
    (
        [half * a * a, T::lit(0.75) - b * b, half * c * c],
        [-a, -(b + b), c],
    )
}

/// Kernel weights for a particle whose fractional offset from its base node is
/// `frac`, each component in `[0.5, 1.5)`.
#[inline]
pub fn bspline_weights<T: Real>(frac: Vec3<T>) -> Weights<T> {
    debug_assert!(
        frac.0.iter().all(|&f| f >= T::lit(0.5) && f < T::lit(1.5)),
        "fractional position outside kernel window"
    );
    let (w0, d0) = axis_weights(frac[0]);
    let (w1, d1) = axis_weights(frac[1]);
    let (w2, d2) = axis_weights(frac[2]);
    Weights { w: [w0, w1, w2], dw: [d0, d1, d2] }
}

/// Lower-corner node of a particle's 3³ stencil and its fractional offset.
#[inline(always)]
pub fn base_and_frac<T: Real>(x: Vec3<T>, inv_dx: T) -> ([i64; 3], Vec3<T>) {
    let mut base = [0i64; 3];
    let mut frac = Vec3::zero();
    let half = T::lit(0.5);
    for a in 0..3 {
        let xi = x[a] * inv_dx;
        let b = (xi - half).floor();
        base[a] = b.to_i64().unwrap_or(i64::MIN / 4);
        frac[a] = xi - b;
    }
    (base, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let w = bspline_weights(Vec3::splat(1.0f64)).w[0];
        assert_eq!(w, [0.125, 0.75, 0.125]);
        let w = bspline_weights(Vec3::splat(0.5f64)).w[0];
        assert_eq!(w, [0.5, 0.5, 0.0]);
        let w = bspline_weights(Vec3::splat(1.25f64)).w[0];
        assert_eq!(w, [0.03125, 0.6875, 0.28125]);
    }

    #[test]
    fn derivative_matches_difference() {
        let h: f64 = 1e-6;
        for &f in &[0.6, 0.9, 1.2, 1.45] {
            let (_, d) = axis_weights(f);
            let (wp, _) = axis_weights(f + h);
            let (wm, _) = axis_weights(f - h);
            for k in 0..3 {
                assert!(((wp[k] - wm[k]) / (2.0 * h) - d[k]).abs() < 1e-8);
            }
        }
    }
}
