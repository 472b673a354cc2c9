//! Lazily sized active grid region.

use crate::math::Vec3;
use crate::scalar::Real;

/// Axis-aligned block of grid nodes `[lo, lo + dims)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActiveRegion {
    pub lo: [usize; 3],
    pub dims: [usize; 3],
}

impl ActiveRegion {
    pub fn full(grid_n: usize) -> Self {
        Self { lo: [0; 3], dims: [grid_n; 3] }
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline(always)]
    pub fn index(&self, local: [usize; 3]) -> usize {
        (local[0] * self.dims[1] + local[1]) * self.dims[2] + local[2]
    }

    #[inline(always)]
    pub fn local(&self, index: usize) -> [usize; 3] {
        let k = index % self.dims[2];
        let r = index / self.dims[2];
        [r / self.dims[1], r % self.dims[1], k]
    }

    /// Whether the 3³ stencil starting at global node `base` lies inside.
    #[inline(always)]
    pub fn contains_stencil(&self, base: [i64; 3]) -> bool {
        (0..3).all(|a| base[a] >= self.lo[a] as i64 && base[a] + 3 <= (self.lo[a] + self.dims[a]) as i64)
    }
}

/// Bounding box of the particles' cells grown by `margin` cells, rounded up to
/// a multiple of `block` and clamped to the `grid_n³` grid. With `margin ≥ 2`
/// the result contains every particle's kernel stencil.
pub fn detect_active_region<T: Real>(positions: &[Vec3<T>], margin: usize, block: usize, grid_n: usize) -> ActiveRegion {
    if positions.is_empty() {
        return ActiveRegion { lo: [0; 3], dims: [block.min(grid_n); 3] };
    }
    let block = block.max(1);
    let mut cmin = [i64::MAX; 3];
    let mut cmax = [i64::MIN; 3];
    let inv_dx = T::from_usize_lossy(grid_n);
    for p in positions {
        for a in 0..3 {
            let c = (p[a] * inv_dx).floor().to_i64().unwrap_or(0);
            cmin[a] = cmin[a].min(c);
            cmax[a] = cmax[a].max(c);
        }
    }
    let n = grid_n as i64;
    let m = margin.max(1) as i64;
    let mut lo = [0usize; 3];
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let l = (cmin[a] - (m - 1)).clamp(0, n);
        let h = (cmax[a] + m + 1).clamp(0, n);
        let span = (h - l).max(1);
        let rounded = ((span + block as i64 - 1) / block as i64 * block as i64).min(n);
        let l = if l + rounded > n { n - rounded } else { l };
        lo[a] = l as usize;
        dims[a] = rounded as usize;
    }
    ActiveRegion { lo, dims }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_particle_block() {
        let r = detect_active_region(&[Vec3::splat(0.5f64)], 2, 4, 64);
        assert_eq!(r.dims, [4, 4, 4]);
        assert!(r.contains_stencil(crate::mpm::kernel::base_and_frac(Vec3::splat(0.5f64), 64.0).0));
    }

    #[test]
    fn spanning_particles_clamp_to_grid() {
        let r = detect_active_region(&[Vec3::splat(0.0f64), Vec3::splat(0.999)], 2, 4, 64);
        assert_eq!(r, ActiveRegion::full(64));
    }

    #[test]
    fn index_round_trip() {
        let r = ActiveRegion { lo: [3, 4, 5], dims: [4, 8, 12] };
        for i in 0..r.node_count() {
            assert_eq!(r.index(r.local(i)), i);
        }
    }
}
