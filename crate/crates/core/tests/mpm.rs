use std::collections::HashMap;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softgrad_core::mpm::{
    bspline_weights, detect_active_region, g2p, grid_op, kirchhoff, kirchhoff_vjp, mpm_step, p2g, ActiveRegion, MaterialParams,
    MpmState,
};
use softgrad_core::{Collider, ColliderSet, Friction, Mat3, Pose, Shape, SimConfig, SimError, Vec3};

fn rvec(r: &mut ChaCha8Rng, s: f64) -> Vec3<f64> {
    Vec3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s))
}

fn rmat(r: &mut ChaCha8Rng, s: f64) -> Mat3<f64> {
    Mat3::from_rows(rvec(r, s), rvec(r, s), rvec(r, s))
}

fn elastic() -> Vec<MaterialParams<f64>> {
    vec![MaterialParams::elastic(1.0, 5.0, 0.3), MaterialParams::fluid(1.0, 40.0, 7.0)]
}

fn config(dt: f64) -> SimConfig<f64> {
    SimConfig::with_grid(64, dt, 1)
}

fn random_state(r: &mut ChaCha8Rng, n: usize, stress_free: bool) -> MpmState<f64> {
    let centre = Vec3::splat(0.5) + rvec(r, 0.2);
    let x = (0..n).map(|_| centre + rvec(r, 0.05)).collect();
    let mass = (0..n).map(|_| r.random_range(0.5e-4..2e-4)).collect();
    let mut s = MpmState::at_rest(x, mass, vec![1e-4; n], vec![0; n]);
    for p in 0..n {
        s.v[p] = rvec(r, 1.0);
        s.c[p] = rmat(r, 5.0);
        if !stress_free {
            s.f[p] = Mat3::identity() + rmat(r, 0.1);
        }
    }
    s
}

#[test]
fn partition_of_unity() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let f = Vec3::new(r.random_range(0.5..1.5), r.random_range(0.5..1.5), r.random_range(0.5..1.5));
        let w = bspline_weights(f);
        for a in 0..3 {
            assert!(w.w[a].iter().all(|&x| x >= 0.0));
            assert!((w.w[a].iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        }
    }
}

/// Straight per-particle scatter written independently of the library.
fn naive_p2g(s: &MpmState<f64>, mats: &[MaterialParams<f64>], dt: f64, dx: f64) -> HashMap<[i64; 3], (f64, [f64; 3])> {
    let mut grid: HashMap<[i64; 3], (f64, [f64; 3])> = HashMap::new();
    for p in 0..s.len() {
        let xi: Vec<f64> = (0..3).map(|a| s.x[p][a] / dx).collect();
        let base: Vec<i64> = xi.iter().map(|&v| (v - 0.5).floor() as i64).collect();
        let f: Vec<f64> = (0..3).map(|a| xi[a] - base[a] as f64).collect();
        let w: Vec<[f64; 3]> =
            f.iter().map(|&f| [0.5 * (1.5 - f).powi(2), 0.75 - (f - 1.0).powi(2), 0.5 * (f - 0.5).powi(2)]).collect();
        let tau = kirchhoff(&mats[s.material[p] as usize], &s.f[p], s.j[p]).unwrap();
        let m = s.mass[p];
        let affine = s.c[p] * m - tau * (dt * s.volume0[p] * 4.0 / (dx * dx));
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let weight = w[0][i] * w[1][j] * w[2][k];
                    let dpos = Vec3::new((i as f64 - f[0]) * dx, (j as f64 - f[1]) * dx, (k as f64 - f[2]) * dx);
                    let mom = (s.v[p] * m + affine * dpos) * weight;
                    let e = grid.entry([base[0] + i as i64, base[1] + j as i64, base[2] + k as i64]).or_insert((0.0, [0.0; 3]));
                    e.0 += weight * m;
                    for a in 0..3 {
                        e.1[a] += mom[a];
                    }
                }
            }
        }
    }
    grid
}

#[test]
fn p2g_matches_reference_loop() {
    let mats = elastic();
    let cfg = config(1e-3);
    for seed in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut r, 3, false);
        let region = detect_active_region(&s.x, 2, 4, 64);
        let grid = p2g(&s, &mats, &region, &cfg).unwrap();
        let oracle = naive_p2g(&s, &mats, cfg.dt, cfg.dx);
        let mut seen = 0;
        for &i in &grid.active {
            let l = region.local(i as usize);
            let key = [(l[0] + region.lo[0]) as i64, (l[1] + region.lo[1]) as i64, (l[2] + region.lo[2]) as i64];
            let Some(&(m, mom)) = oracle.get(&key) else {
                assert_eq!(grid.mass[i as usize], 0.0);
                continue;
            };
            seen += 1;
            let gm = grid.mass[i as usize];
            assert!((gm - m).abs() <= 1e-14 * m.abs().max(1e-300), "mass {gm} vs {m}");
            let gp = grid.momentum[i as usize];
            let scale = mom.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            for a in 0..3 {
                assert!((gp[a] - mom[a]).abs() <= 1e-14 * scale.max(m * 1e-3), "momentum {gp:?} vs {mom:?}");
            }
        }
        assert_eq!(seen, oracle.len());
    }
}

#[test]
fn single_particle_transfer() {
    let mats = elastic();
    let cfg = config(1e-3);
    let mut s = MpmState::at_rest(vec![Vec3::new(0.51, 0.47, 0.5)], vec![0.3], vec![1e-4], vec![0]);
    let region = detect_active_region(&s.x, 2, 4, 64);
    let g = p2g(&s, &mats, &region, &cfg).unwrap();
    assert!((g.total_mass() - 0.3).abs() < 1e-15);
    assert_eq!(g.total_momentum(), Vec3::zero());
    s.v[0] = Vec3::new(1.0, 0.0, 0.0);
    let g = p2g(&s, &mats, &region, &cfg).unwrap();
    assert!((g.total_momentum() - Vec3::new(0.3, 0.0, 0.0)).norm() < 1e-15);
}

#[test]
fn conservation_over_random_states() {
    let mats = elastic();
    let cfg = config(1e-3);
    let mut worst_m: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for seed in 0..1000 {
        let mut r = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let n = r.random_range(1..40);
        let s = random_state(&mut r, n, true);
        let region = detect_active_region(&s.x, 2, 4, 64);
        let g = p2g(&s, &mats, &region, &cfg).unwrap();
        worst_m = worst_m.max((g.total_mass() - s.total_mass()).abs() / s.total_mass());
        let pm = s.total_momentum();
        let scale = s.v.iter().zip(s.mass.iter()).map(|(v, m)| v.norm() * m).sum::<f64>();
        worst_p = worst_p.max((g.total_momentum() - pm).norm() / scale);
    }
    assert!(worst_m <= 1e-13, "mass error {worst_m}");
    assert!(worst_p <= 1e-12, "momentum error {worst_p}");
}

fn single_node_grid(mass: f64, momentum: Vec3<f64>, node: [usize; 3]) -> softgrad_core::mpm::GridBuffer<f64> {
    let region = ActiveRegion { lo: node, dims: [1, 1, 1] };
    softgrad_core::mpm::GridBuffer { region, mass: vec![mass], momentum: vec![momentum], velocity: vec![Vec3::zero()], active: vec![0] }
}

#[test]
fn grid_op_examples() {
    let cfg = config(1e-3);
    let g = grid_op(single_node_grid(1.0, Vec3::zero(), [32, 32, 32]), &ColliderSet::default(), &cfg, 1e-12);
    assert!((g.velocity[0] - Vec3::new(0.0, 0.0, -0.0098)).norm() < 1e-15);

    let mut grip = Collider::new(Shape::Sphere { radius: 0.05 }, Pose::at(Vec3::splat(0.5)), Friction::Sticky);
    grip.velocity.linear = Vec3::new(0.1, 0.2, -0.3);
    let g = grid_op(single_node_grid(1.0, Vec3::new(3.0, 0.0, 0.0), [32, 32, 32]), &ColliderSet::new(vec![grip.clone()]), &cfg, 1e-12);
    assert_eq!(g.velocity[0], grip.velocity.linear);

    let table = Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(Vec3::new(0.0, 0.0, 0.5)), Friction::Slip { mu: 0.0 })
        .with_band(cfg.dx, cfg.dx);
    let v_in = Vec3::new(1.0, 0.0, -2.0);
    let g = grid_op(single_node_grid(2.0, v_in * 2.0, [32, 32, 32]), &ColliderSet::new(vec![table.clone()]), &cfg, 1e-12);
    let expected = softgrad_core::sdf_project_velocity(&table, Vec3::splat(0.5), v_in + cfg.gravity * cfg.dt);
    assert!((g.velocity[0] - expected).norm() < 1e-15);
    assert_eq!(g.velocity[0][2], 0.0);

    let g = grid_op(single_node_grid(1.0, Vec3::new(1.0, 1.0, 1.0), [1, 30, 30]), &ColliderSet::default(), &cfg, 1e-12);
    assert_eq!(g.velocity[0], Vec3::zero());
}

fn grid_with_field(s: &MpmState<f64>, cfg: &SimConfig<f64>, field: impl Fn(Vec3<f64>) -> Vec3<f64>) -> softgrad_core::mpm::GridBuffer<f64> {
    let region = detect_active_region(&s.x, 2, 4, 64);
    let mut g = p2g(s, &elastic(), &region, cfg).unwrap();
    for i in 0..region.node_count() {
        let l = region.local(i);
        let pos = Vec3::new((l[0] + region.lo[0]) as f64, (l[1] + region.lo[1]) as f64, (l[2] + region.lo[2]) as f64) * cfg.dx;
        g.velocity[i] = field(pos);
    }
    g
}

#[test]
fn g2p_reproduces_constant_and_linear_fields() {
    let cfg = config(1e-3);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let s = random_state(&mut r, 20, true);
    let vstar = Vec3::new(0.3, -0.2, 0.1);
    let g = grid_with_field(&s, &cfg, |_| vstar);
    let out = g2p(&s, &g, &elastic(), &ColliderSet::default(), &cfg).unwrap();
    for p in 0..s.len() {
        assert!((out.v[p] - vstar).norm() < 1e-14);
        assert!(out.c[p].max_abs() < 1e-10);
    }
    let a = rmat(&mut r, 2.0);
    let x0 = Vec3::new(0.4, 0.5, 0.6);
    let g = grid_with_field(&s, &cfg, |x| a * (x - x0));
    let out = g2p(&s, &g, &elastic(), &ColliderSet::default(), &cfg).unwrap();
    for p in 0..s.len() {
        assert!((out.c[p] - a).max_abs() < 1e-10, "C {:?} vs {:?}", out.c[p], a);
        assert!((out.v[p] - a * (s.x[p] - x0)).norm() < 1e-12);
    }
}

#[test]
fn zero_dt_only_refreshes_velocities() {
    let cfg = config(0.0);
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let s = random_state(&mut r, 20, false);
    let out = mpm_step(&s, &elastic(), &ColliderSet::default(), &cfg).unwrap();
    assert_eq!(out.x, s.x);
    assert_eq!(out.f, s.f);
    assert_eq!(out.j, s.j);
}

#[test]
fn rest_state_is_a_fixed_point() {
    let mut cfg = config(1e-3);
    cfg.gravity = Vec3::zero();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let x = (0..100).map(|_| Vec3::splat(0.5) + rvec(&mut r, 0.05)).collect();
    let s = MpmState::at_rest(x, vec![1e-4; 100], vec![1e-4; 100], vec![0; 100]);
    let out = mpm_step(&s, &elastic(), &ColliderSet::default(), &cfg).unwrap();
    for p in 0..100 {
        assert!((out.x[p] - s.x[p]).norm() <= 1e-12);
        assert!(out.v[p].norm() <= 1e-12);
        assert!((out.f[p] - s.f[p]).max_abs() <= 1e-12);
    }
}

fn table(cfg: &SimConfig<f64>) -> Collider<f64> {
    Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(Vec3::new(0.5, 0.5, 0.1)), Friction::Slip { mu: 0.2 })
        .with_band(cfg.dx, cfg.dx)
}

#[test]
fn dam_break_conserves_mass_and_stays_above_table() {
    let cfg = SimConfig::<f64>::with_grid(64, 2.5e-4, 1);
    let mats = elastic();
    let h = cfg.dx / 2.0;
    let mut x = Vec::new();
    for i in 0..12 {
        for j in 0..12 {
            for k in 0..12 {
                x.push(Vec3::new(0.3 + (i as f64 + 0.5) * h, 0.45 + (j as f64 + 0.5) * h, 0.1 + (k as f64 + 0.5) * h));
            }
        }
    }
    let n = x.len();
    let mut s = MpmState::at_rest(x, vec![h * h * h; n], vec![h * h * h; n], vec![1; n]);
    let m0 = s.total_mass();
    let cs = ColliderSet::new(vec![table(&cfg)]);
    for _ in 0..200 {
        s = mpm_step(&s, &mats, &cs, &cfg).unwrap();
    }
    assert_eq!(s.total_mass(), m0);
    let region = detect_active_region(&s.x, 2, 4, 64);
    let g = p2g(&s, &mats, &region, &cfg).unwrap();
    assert!((g.total_mass() - m0).abs() <= 1e-13 * m0);
    let zmin = s.x.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
    assert!(zmin > 0.1, "lowest particle at {zmin}");
    let spread = s.x.iter().map(|p| p[0]).fold(0.0, f64::max);
    assert!(spread > 0.3 + 12.0 * h, "block did not collapse");
}

fn rope(cfg: &SimConfig<f64>) -> MpmState<f64> {
    let h = cfg.dx / 2.0;
    let mut x = Vec::new();
    for i in 0..60 {
        for (dy, dz) in [(0.0, 0.0), (h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            x.push(Vec3::new(0.3 + i as f64 * h, 0.5 + dy, 0.1 + 1.5 * h + dz));
        }
    }
    let n = x.len();
    MpmState::at_rest(x, vec![h * h * h; n], vec![h * h * h; n], vec![0; n])
}

fn pusher(cfg: &SimConfig<f64>) -> Collider<f64> {
    let mut c = Collider::new(
        Shape::Capsule { a: Vec3::zero(), b: Vec3::new(0.0, 0.0, 0.1), radius: 0.012 },
        Pose::at(Vec3::new(0.45, 0.45, 0.1)),
        Friction::Slip { mu: 0.2 },
    )
    .with_band(cfg.dx, cfg.dx);
    c.velocity.linear = Vec3::new(0.0, 0.5, 0.0);
    c
}

#[test]
fn lazy_region_equals_full_grid() {
    let cfg = SimConfig::<f64>::with_grid(64, 2e-3, 1);
    let mut full = cfg.clone();
    full.full_grid = true;
    let mats = elastic();
    let mut a = rope(&cfg);
    let mut b = a.clone();
    let mut tool = pusher(&cfg);
    for _ in 0..60 {
        let cs = ColliderSet::new(vec![table(&cfg), tool.clone()]);
        a = mpm_step(&a, &mats, &cs, &cfg).unwrap();
        b = mpm_step(&b, &mats, &cs, &full).unwrap();
        tool.pose.position += tool.velocity.linear * cfg.dt;
    }
    assert_eq!(a, b);
    assert!(a.x.iter().any(|p| p[1] > 0.5 + cfg.dx), "tool never reached the rope");
}

#[test]
fn flat_rope_region_is_thin() {
    let cfg = SimConfig::<f64>::with_grid(128, 1e-3, 1);
    let h = cfg.dx / 2.0;
    let mut x = Vec::new();
    for i in 0..120 {
        let t = i as f64 * h;
        for (dy, dz) in [(0.0, 0.0), (h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            x.push(Vec3::new(0.4 + t * std::f64::consts::FRAC_1_SQRT_2, 0.4 + t * std::f64::consts::FRAC_1_SQRT_2 + dy, 0.1 + 1.5 * h + dz));
        }
    }
    let r = detect_active_region(&x, 2, 4, 128);
    assert_eq!([r.dims[0], r.dims[1]], [48, 48]);
    assert!(r.node_count() * 50 < 128 * 128 * 128);
    assert!(r.dims[2] <= 8, "thin extent {}", r.dims[2]);
    for p in &x {
        assert!(r.contains_stencil(softgrad_core::mpm::kernel::base_and_frac(*p, 128.0).0));
    }
}

#[test]
fn lattice_translation_invariance() {
    let cfg = SimConfig::<f64>::with_grid(64, 2e-3, 1);
    let mats = elastic();
    let shift = Vec3::new(3.0, -2.0, 1.0) * cfg.dx;
    let mut a = rope(&cfg);
    let mut b = a.clone();
    for p in b.x.iter_mut() {
        *p += shift;
    }
    let mut ta = table(&cfg);
    let mut tb = ta.clone();
    tb.pose.position += shift;
    let mut pa = pusher(&cfg);
    let mut pb = pa.clone();
    pb.pose.position += shift;
    for _ in 0..40 {
        a = mpm_step(&a, &mats, &ColliderSet::new(vec![ta.clone(), pa.clone()]), &cfg).unwrap();
        b = mpm_step(&b, &mats, &ColliderSet::new(vec![tb.clone(), pb.clone()]), &cfg).unwrap();
        pa.pose.position += pa.velocity.linear * cfg.dt;
        pb.pose.position += pb.velocity.linear * cfg.dt;
        ta.pose.position += Vec3::zero();
        tb.pose.position += Vec3::zero();
    }
    for p in 0..a.len() {
        assert!((a.x[p] + shift - b.x[p]).norm() <= 1e-10);
        assert!((a.v[p] - b.v[p]).norm() <= 1e-10);
        assert!((a.f[p] - b.f[p]).max_abs() <= 1e-10);
    }
}

#[test]
fn steps_are_bitwise_deterministic_across_threads() {
    let cfg = SimConfig::<f64>::with_grid(64, 2e-3, 1);
    let mats = elastic();
    let s = rope(&cfg);
    let cs = ColliderSet::new(vec![table(&cfg), pusher(&cfg)]);
    let reference = mpm_step(&s, &mats, &cs, &cfg).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (s, cs, mats, cfg) = (s.clone(), cs.clone(), mats.clone(), cfg.clone());
            std::thread::spawn(move || mpm_step(&s, &mats, &cs, &cfg).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), reference);
    }
}

#[test]
fn neo_hookean_matches_independent_formula() {
    let p = MaterialParams::<f64>::elastic(1.0, 1000.0, 0.3);
    let (e, nu) = (1000.0f64, 0.3f64);
    let mu = e / (2.0 * (1.0 + nu));
    let la = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut cases = vec![Mat3::diag(1.1, 1.0, 1.0)];
    for _ in 0..20 {
        cases.push(Mat3::identity() + rmat(&mut r, 0.2));
    }
    for f in cases {
        let fm = Matrix3::from_row_slice(&[f.0[0][0], f.0[0][1], f.0[0][2], f.0[1][0], f.0[1][1], f.0[1][2], f.0[2][0], f.0[2][1], f.0[2][2]]);
        let finvt = fm.try_inverse().unwrap().transpose();
        let piola = (fm - finvt) * mu + finvt * (la * fm.determinant().ln());
        let tau_ref = piola * fm.transpose();
        let tau = kirchhoff(&p, &f, 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((tau.0[i][j] - tau_ref[(i, j)]).abs() <= 1e-12 * tau_ref.amax().max(1.0));
            }
        }
    }
}

#[test]
fn fluid_pressure_and_vjp() {
    let p = MaterialParams::<f64>::fluid(1.0, 40.0, 7.0);
    let tau = kirchhoff(&p, &Mat3::identity(), 0.9).unwrap();
    let pressure = 40.0 * (0.9f64.powf(-7.0) - 1.0);
    assert!((tau.0[0][0] + pressure * 0.9).abs() < 1e-12);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for mat in [p, MaterialParams::elastic(1.0, 1000.0, 0.3)] {
        for _ in 0..50 {
            let f = Mat3::identity() + rmat(&mut r, 0.2);
            let j = 1.0 + r.random_range(-0.1..0.1);
            let tb = rmat(&mut r, 1.0);
            let df = rmat(&mut r, 1.0);
            let dj = 0.3;
            let (fb, jb) = kirchhoff_vjp(&mat, &f, j, &tb);
            let h = 1e-7;
            let l = |e: f64| kirchhoff(&mat, &(f + df * e), j + dj * e).unwrap().ddot(&tb);
            let fd = (l(h) - l(-h)) / (2.0 * h);
            let an = fb.ddot(&df) + jb * dj;
            assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "fd {fd} an {an}");
        }
    }
}

#[test]
fn errors_are_reported() {
    let cfg = config(1e-3);
    let mats = elastic();
    let mut s = MpmState::at_rest(vec![Vec3::splat(0.5), Vec3::splat(0.52)], vec![1e-4; 2], vec![1e-4; 2], vec![0; 2]);
    s.f[1] = Mat3::diag(1.0, -1.0, 1.0);
    let e = mpm_step(&s, &mats, &ColliderSet::default(), &cfg).unwrap_err();
    assert!(matches!(e, SimError::DegenerateElement { particle: 1, .. }));
    s.f[1] = Mat3::identity();
    let small = ActiveRegion { lo: [30, 30, 30], dims: [4, 4, 4] };
    assert!(matches!(p2g(&s, &mats, &small, &cfg), Err(SimError::ActiveRegionViolation { particle: 1 })));
    s.v[0] = Vec3::new(f64::NAN, 0.0, 0.0);
    assert!(matches!(mpm_step(&s, &mats, &ColliderSet::default(), &cfg), Err(SimError::NumericalBlowup { .. })));
}
