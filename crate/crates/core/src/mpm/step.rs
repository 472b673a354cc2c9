use crate::collider::{ColliderCot, ColliderSet};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::math::{Mat3, Vec3};
use crate::mpm::kernel::{base_and_frac, bspline_weights, Weights};
use crate::mpm::material::{kirchhoff_vjp, stress, MaterialKind, MaterialParams};
use crate::mpm::region::{detect_active_region, ActiveRegion};
use crate::mpm::{MpmCot, MpmState};
use crate::scalar::Real;

const OFFSETS: [[usize; 3]; 27] = {
    let mut o = [[0usize; 3]; 27];
    let mut i = 0;
    while i < 27 {
        o[i] = [i / 9, (i / 3) % 3, i % 3];
        i += 1;
    }
    o
};

/// Node fields over an [`ActiveRegion`]. `active` lists, in ascending order,
/// the nodes some particle stencil touches; every other node is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct GridBuffer<T> {
    pub region: ActiveRegion,
    pub mass: Vec<T>,
    pub momentum: Vec<Vec3<T>>,
    pub velocity: Vec<Vec3<T>>,
    pub active: Vec<u32>,
}

impl<T: Real> GridBuffer<T> {
    pub fn total_mass(&self) -> T {
        self.active.iter().map(|&i| self.mass[i as usize]).sum()
    }

    pub fn total_momentum(&self) -> Vec3<T> {
        let mut p = Vec3::zero();
        for &i in &self.active {
            p += self.momentum[i as usize];
        }
        p
    }
}

/// Per-particle quantities shared by the transfers.
struct Prep<T> {
    base: Vec<[i64; 3]>,
    frac: Vec<Vec3<T>>,
    wts: Vec<Weights<T>>,
    affine: Vec<Mat3<T>>,
    mv: Vec<Vec3<T>>,
    cell: Vec<u32>,
}

#[inline(always)]
fn offset_vec<T: Real>(o: [usize; 3]) -> Vec3<T> {
    Vec3::new(T::from_usize_lossy(o[0]), T::from_usize_lossy(o[1]), T::from_usize_lossy(o[2]))
}

fn region_for<T: Real>(state: &MpmState<T>, config: &SimConfig<T>) -> ActiveRegion {
    if config.full_grid {
        ActiveRegion::full(config.grid_n)
    } else {
        detect_active_region(&state.x, config.region_margin, config.region_block, config.grid_n)
    }
}

fn prepare<T: Real>(
    state: &MpmState<T>,
    materials: &[MaterialParams<T>],
    region: &ActiveRegion,
    config: &SimConfig<T>,
) -> Result<Prep<T>> {
    let n = state.len();
    let inv_dx = config.inv_dx();
    let k = T::lit(4.0) * inv_dx * inv_dx;
    let mut prep = Prep {
        base: Vec::with_capacity(n),
        frac: Vec::with_capacity(n),
        wts: Vec::with_capacity(n),
        affine: Vec::with_capacity(n),
        mv: Vec::with_capacity(n),
        cell: Vec::with_capacity(n),
    };
    for p in 0..n {
        let (base, frac) = base_and_frac(state.x[p], inv_dx);
        if !region.contains_stencil(base) {
            return Err(SimError::ActiveRegionViolation { particle: p });
        }
        let mat = &materials[state.material[p] as usize];
        let vt = stress(mat, &state.f[p], state.volume0[p], state.j[p], p)?;
        let m = state.mass[p];
        prep.affine.push(state.c[p] * m + vt * (-config.dt * k));
        prep.mv.push(state.v[p] * m);
        prep.wts.push(bspline_weights(frac));
        prep.cell.push(region.index([
            (base[0] - region.lo[0] as i64) as usize,
            (base[1] - region.lo[1] as i64) as usize,
            (base[2] - region.lo[2] as i64) as usize,
        ]) as u32);
        prep.base.push(base);
        prep.frac.push(frac);
    }
    Ok(prep)
}

/// Gather-based scatter: particles are bucketed by stencil corner, then every
/// node sums its 27 neighbouring buckets in a fixed order. The result does
/// not depend on the region's placement or on any thread schedule.
fn p2g_prepared<T: Real>(prep: &Prep<T>, mass: &[T], region: &ActiveRegion, dx: T) -> GridBuffer<T> {
    let d = region.dims;
    let cells = region.node_count();
    let mut start = vec![0u32; cells + 1];
    for &c in &prep.cell {
        start[c as usize + 1] += 1;
    }
    for i in 0..cells {
        start[i + 1] += start[i];
    }
    let mut cursor = start.clone();
    let mut order = vec![0u32; prep.cell.len()];
    for (p, &c) in prep.cell.iter().enumerate() {
        order[cursor[c as usize] as usize] = p as u32;
        cursor[c as usize] += 1;
    }
    drop(cursor);

    // a node is touched iff one of the buckets at node − {0,1,2}³ is occupied
    let mut touched: Vec<bool> = (0..cells).map(|c| start[c + 1] > start[c]).collect();
    let strides = [d[1] * d[2], d[2], 1];
    for a in 0..3 {
        let s = strides[a];
        let mut next = touched.clone();
        for idx in 0..cells {
            let coord = (idx / s) % d[a];
            if coord >= 1 && touched[idx - s] {
                next[idx] = true;
            }
            if coord >= 2 && touched[idx - 2 * s] {
                next[idx] = true;
            }
        }
        touched = next;
    }

    let mut grid = GridBuffer {
        region: *region,
        mass: vec![T::zero(); cells],
        momentum: vec![Vec3::zero(); cells],
        velocity: vec![Vec3::zero(); cells],
        active: Vec::new(),
    };
    for idx in 0..cells {
        if !touched[idx] {
            continue;
        }
        grid.active.push(idx as u32);
        let node = region.local(idx);
        let mut m = T::zero();
        let mut mom = Vec3::zero();
        for o in OFFSETS {
            if node[0] < o[0] || node[1] < o[1] || node[2] < o[2] {
                continue;
            }
            let cell = region.index([node[0] - o[0], node[1] - o[1], node[2] - o[2]]);
            let ov = offset_vec::<T>(o);
            for q in start[cell]..start[cell + 1] {
                let p = order[q as usize] as usize;
                let w = prep.wts[p].weight(o);
                let dpos = (ov - prep.frac[p]) * dx;
                m += w * mass[p];
                mom += (prep.mv[p] + prep.affine[p] * dpos) * w;
            }
        }
        grid.mass[idx] = m;
        grid.momentum[idx] = mom;
    }
    grid
}

/// Particle-to-grid transfer of mass, APIC momentum and stress impulse.
pub fn p2g<T: Real>(
    state: &MpmState<T>,
    materials: &[MaterialParams<T>],
    region: &ActiveRegion,
    config: &SimConfig<T>,
) -> Result<GridBuffer<T>> {
    let prep = prepare(state, materials, region, config)?;
    Ok(p2g_prepared(&prep, &state.mass, region, config.dx))
}

#[inline(always)]
fn smooth_max<T: Real>(m: T, eps: T) -> (T, T) {
    let r = (m * m + eps * eps).sqrt();
    let half = T::lit(0.5);
    (half * (m + r), half * (T::one() + m / r))
}

fn mass_eps<T: Real>(mass: &[T]) -> T {
    if mass.is_empty() {
        return T::lit(1e-12);
    }
    T::lit(1e-12) * mass.iter().copied().sum::<T>() / T::from_usize_lossy(mass.len())
}

#[inline(always)]
fn is_wall(global: [usize; 3], n: usize, wall: usize) -> bool {
    global.iter().any(|&g| g < wall || g + wall > n)
}

#[inline(always)]
fn node_pos<T: Real>(region: &ActiveRegion, idx: usize, dx: T) -> ([usize; 3], Vec3<T>) {
    let l = region.local(idx);
    let g = [l[0] + region.lo[0], l[1] + region.lo[1], l[2] + region.lo[2]];
    (g, offset_vec::<T>(g) * dx)
}

fn grid_op_in<T: Real>(grid: &mut GridBuffer<T>, colliders: &ColliderSet<T>, config: &SimConfig<T>, eps: T) {
    let dv = config.gravity * config.dt;
    for &i in &grid.active {
        let i = i as usize;
        let m = grid.mass[i];
        if m == T::zero() {
            grid.velocity[i] = Vec3::zero();
            continue;
        }
        let (g, pos) = node_pos(&grid.region, i, config.dx);
        if is_wall(g, config.grid_n, config.wall_cells) {
            grid.velocity[i] = Vec3::zero();
            continue;
        }
        let v = grid.momentum[i] / smooth_max(m, eps).0 + dv;
        grid.velocity[i] = colliders.apply(pos, v);
    }
}

/// Node velocity update: momentum/mass, gravity, collider boundary conditions
/// and sticky walls. `m_eps` guards the division.
pub fn grid_op<T: Real>(mut grid: GridBuffer<T>, colliders: &ColliderSet<T>, config: &SimConfig<T>, m_eps: T) -> GridBuffer<T> {
    grid_op_in(&mut grid, colliders, config, m_eps);
    grid
}

struct G2pOut<T> {
    v: Vec3<T>,
    b: Mat3<T>,
}

#[inline(always)]
fn gather<T: Real>(prep: &Prep<T>, p: usize, grid: &GridBuffer<T>, dx: T) -> G2pOut<T> {
    let r = &grid.region;
    let base = prep.base[p];
    let l = [
        (base[0] - r.lo[0] as i64) as usize,
        (base[1] - r.lo[1] as i64) as usize,
        (base[2] - r.lo[2] as i64) as usize,
    ];
    let mut v = Vec3::zero();
    let mut b = Mat3::zero();
    for o in OFFSETS {
        let idx = r.index([l[0] + o[0], l[1] + o[1], l[2] + o[2]]);
        let w = prep.wts[p].weight(o);
        let vg = grid.velocity[idx] * w;
        let dpos = (offset_vec::<T>(o) - prep.frac[p]) * dx;
        v += vg;
        b += Mat3::outer(vg, dpos);
    }
    G2pOut { v, b }
}

fn held_lookup<T: Real>(colliders: &ColliderSet<T>, n: usize) -> Vec<u32> {
    let mut h = vec![u32::MAX; n];
    for hold in &colliders.held {
        if hold.particle < n {
            h[hold.particle] = hold.collider as u32;
        }
    }
    h
}

fn g2p_prepared<T: Real>(
    state: &MpmState<T>,
    prep: &Prep<T>,
    grid: &GridBuffer<T>,
    materials: &[MaterialParams<T>],
    colliders: &ColliderSet<T>,
    config: &SimConfig<T>,
) -> Result<MpmState<T>> {
    let n = state.len();
    let dt = config.dt;
    let inv_dx = config.inv_dx();
    let k = T::lit(4.0) * inv_dx * inv_dx;
    let lo = T::from_usize_lossy(config.wall_cells) * config.dx;
    let hi = T::one() - lo;
    let held = if colliders.held.is_empty() { Vec::new() } else { held_lookup(colliders, n) };
    let third = T::one() / T::lit(3.0);
    let mut out = state.clone();
    for p in 0..n {
        let g = gather(prep, p, grid, config.dx);
        let c = g.b * k;
        let mut v = g.v;
        if !held.is_empty() && held[p] != u32::MAX {
            v = colliders.colliders[held[p] as usize].velocity_at(state.x[p]);
        }
        let x = (state.x[p] + v * dt).map(|c| c.max(lo).min(hi));
        let j = state.j[p] * (T::one() + dt * c.trace());
        let f = match materials[state.material[p] as usize].kind {
            MaterialKind::NeoHookean => (Mat3::identity() + c * dt) * state.f[p],
            MaterialKind::Fluid => Mat3::scaled_identity(j.powf(third)),
        };
        if !(x.is_finite() && v.is_finite()) {
            return Err(SimError::NumericalBlowup { substep: 0, field: if v.is_finite() { "x" } else { "v" } });
        }
        if !(c.is_finite() && f.is_finite() && j.is_finite()) {
            return Err(SimError::NumericalBlowup { substep: 0, field: "F" });
        }
        out.x[p] = x;
        out.v[p] = v;
        out.c[p] = c;
        out.f[p] = f;
        out.j[p] = j;
    }
    Ok(out)
}

/// Grid-to-particle transfer and particle update.
pub fn g2p<T: Real>(
    state: &MpmState<T>,
    grid: &GridBuffer<T>,
    materials: &[MaterialParams<T>],
    colliders: &ColliderSet<T>,
    config: &SimConfig<T>,
) -> Result<MpmState<T>> {
    let prep = prepare(state, materials, &grid.region, config)?;
    g2p_prepared(state, &prep, grid, materials, colliders, config)
}

/// One substep in an explicitly given region.
pub fn mpm_step_in<T: Real>(
    state: &MpmState<T>,
    materials: &[MaterialParams<T>],
    colliders: &ColliderSet<T>,
    config: &SimConfig<T>,
    region: &ActiveRegion,
) -> Result<MpmState<T>> {
    let prep = prepare(state, materials, region, config)?;
    let mut grid = p2g_prepared(&prep, &state.mass, region, config.dx);
    grid_op_in(&mut grid, colliders, config, mass_eps(&state.mass));
    g2p_prepared(state, &prep, &grid, materials, colliders, config)
}

/// One substep. The grid region is detected from the particles unless
/// `config.full_grid` is set; both give bitwise-identical results.
pub fn mpm_step<T: Real>(
    state: &MpmState<T>,
    materials: &[MaterialParams<T>],
    colliders: &ColliderSet<T>,
    config: &SimConfig<T>,
) -> Result<MpmState<T>> {
    mpm_step_in(state, materials, colliders, config, &region_for(state, config))
}

/// Vector–Jacobian product of [`mpm_step`] at `state`. Returns the state
/// cotangent and one cotangent per collider (pose and velocity).
pub fn mpm_step_vjp<T: Real>(
    state: &MpmState<T>,
    materials: &[MaterialParams<T>],
    colliders: &ColliderSet<T>,
    config: &SimConfig<T>,
    out_bar: &MpmCot<T>,
) -> Result<(MpmCot<T>, Vec<ColliderCot<T>>)> {
    let n = state.len();
    let dt = config.dt;
    let dx = config.dx;
    let inv_dx = config.inv_dx();
    let k = T::lit(4.0) * inv_dx * inv_dx;
    let third = T::one() / T::lit(3.0);
    let lo = T::from_usize_lossy(config.wall_cells) * dx;
    let hi = T::one() - lo;
    let eps = mass_eps(&state.mass);

    let region = region_for(state, config);
    let prep = prepare(state, materials, &region, config)?;
    let mut grid = p2g_prepared(&prep, &state.mass, &region, dx);
    grid_op_in(&mut grid, colliders, config, eps);
    let held = held_lookup(colliders, n);

    let mut cot = MpmCot::zeros(n);
    let mut ccots = vec![ColliderCot::zero(); colliders.colliders.len()];
    // cotangents of the gathered velocity and of B = Σ w v dposᵀ
    let mut vg_bar = vec![Vec3::zero(); n];
    let mut b_bar = vec![Mat3::zero(); n];

    for p in 0..n {
        let g = gather(&prep, p, &grid, dx);
        let c_new = g.b * k;
        let is_held = held[p] != u32::MAX;
        let v_new = if is_held { colliders.colliders[held[p] as usize].velocity_at(state.x[p]) } else { g.v };
        let x_raw = state.x[p] + v_new * dt;
        let mut xb = out_bar.x[p];
        for a in 0..3 {
            if x_raw[a] < lo || x_raw[a] > hi {
                xb[a] = T::zero();
            }
        }
        cot.x[p] += xb;
        let v_tot = out_bar.v[p] + xb * dt;
        if is_held {
            let col = &colliders.colliders[held[p] as usize];
            let a = col.pose.axis;
            let cc = &mut ccots[held[p] as usize];
            cc.linear += v_tot;
            cc.angular += v_tot.dot(a.cross(state.x[p] - col.pose.position));
            let xr = v_tot.cross(a) * col.velocity.angular;
            cot.x[p] += xr;
            cc.position -= xr;
        } else {
            vg_bar[p] = v_tot;
        }

        let j_new = state.j[p] * (T::one() + dt * c_new.trace());
        let mut c_bar = out_bar.c[p];
        let mut j_bar_new = out_bar.j[p];
        match materials[state.material[p] as usize].kind {
            MaterialKind::NeoHookean => {
                let fb = out_bar.f[p];
                cot.f[p] += (Mat3::identity() + c_new * dt).transpose() * fb;
                c_bar += fb * state.f[p].transpose() * dt;
            }
            MaterialKind::Fluid => {
                j_bar_new += out_bar.f[p].trace() * third * j_new.powf(-T::lit(2.0) * third);
            }
        }
        cot.j[p] += j_bar_new * (T::one() + dt * c_new.trace());
        c_bar += Mat3::scaled_identity(j_bar_new * state.j[p] * dt);
        b_bar[p] = c_bar * k;
    }

    // node velocity cotangents
    let mut node_v_bar = vec![Vec3::zero(); region.node_count()];
    for p in 0..n {
        let base = prep.base[p];
        let l = [
            (base[0] - region.lo[0] as i64) as usize,
            (base[1] - region.lo[1] as i64) as usize,
            (base[2] - region.lo[2] as i64) as usize,
        ];
        for o in OFFSETS {
            let idx = region.index([l[0] + o[0], l[1] + o[1], l[2] + o[2]]);
            let w = prep.wts[p].weight(o);
            let dpos = (offset_vec::<T>(o) - prep.frac[p]) * dx;
            node_v_bar[idx] += (vg_bar[p] + b_bar[p] * dpos) * w;
        }
    }

    // grid operator adjoint: cotangents of node momentum and mass
    let mut mom_bar = vec![Vec3::zero(); region.node_count()];
    let mut mass_bar = vec![T::zero(); region.node_count()];
    let dv = config.gravity * dt;
    for &i in &grid.active {
        let i = i as usize;
        let m = grid.mass[i];
        if m == T::zero() {
            continue;
        }
        let (g, pos) = node_pos(&region, i, dx);
        if is_wall(g, config.grid_n, config.wall_cells) {
            continue;
        }
        let (sm, dsm) = smooth_max(m, eps);
        let v_in = grid.momentum[i] / sm + dv;
        let (vb, _) = colliders.apply_vjp(pos, v_in, node_v_bar[i], &mut ccots);
        mom_bar[i] = vb / sm;
        mass_bar[i] = -vb.dot(grid.momentum[i]) / (sm * sm) * dsm;
    }

    // transfer weights, offsets and particle-to-grid inputs
    for p in 0..n {
        let base = prep.base[p];
        let l = [
            (base[0] - region.lo[0] as i64) as usize,
            (base[1] - region.lo[1] as i64) as usize,
            (base[2] - region.lo[2] as i64) as usize,
        ];
        let m = state.mass[p];
        let a = prep.affine[p];
        let at = a.transpose();
        let bt = b_bar[p].transpose();
        let mut a_bar = Mat3::zero();
        let mut v_bar = Vec3::zero();
        let mut x_bar = Vec3::zero();
        for o in OFFSETS {
            let idx = region.index([l[0] + o[0], l[1] + o[1], l[2] + o[2]]);
            let w = prep.wts[p].weight(o);
            let gw = prep.wts[p].grad(o) * inv_dx;
            let dpos = (offset_vec::<T>(o) - prep.frac[p]) * dx;
            let vg = grid.velocity[idx];
            let pb = mom_bar[idx];
            let contrib = prep.mv[p] + a * dpos;
            let w_bar = vg_bar[p].dot(vg) + vg.dot(b_bar[p] * dpos) + mass_bar[idx] * m + pb.dot(contrib);
            let dpos_bar = (bt * vg + at * pb) * w;
            v_bar += pb * (w * m);
            a_bar += Mat3::outer(pb, dpos) * w;
            x_bar += gw * w_bar - dpos_bar;
        }
        cot.x[p] += x_bar;
        cot.v[p] += v_bar;
        cot.c[p] += a_bar * m;
        let tau_bar = a_bar * (-dt * k * state.volume0[p]);
        let mat = &materials[state.material[p] as usize];
        let (fb, jb) = kirchhoff_vjp(mat, &state.f[p], state.j[p], &tau_bar);
        cot.f[p] += fb;
        cot.j[p] += jb;
    }
    Ok((cot, ccots))
}
