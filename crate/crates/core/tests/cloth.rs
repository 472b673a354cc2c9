use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softgrad_core::cloth::{
    attach_nearest, build_grid_cloth, cloth_step, cloth_step_vjp, parse_template, spring_forces, write_template, AttachmentSet,
    ClothConfig, ClothMesh, ClothParams, ClothTopology, Gripper, Spring, SpringKind,
};
use softgrad_core::{Collider, ColliderSet, Friction, Pose, Shape, SimError, Vec3};

fn rvec(r: &mut ChaCha8Rng, s: f64) -> Vec3<f64> {
    Vec3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s))
}

fn sheet(n: usize, h: f64) -> ClothMesh<f64> {
    build_grid_cloth(n, n, h, Vec3::new(0.3, 0.3, 0.2), &ClothParams::default()).unwrap()
}

fn count(mesh: &ClothMesh<f64>, kind: SpringKind) -> usize {
    mesh.springs().iter().filter(|s| s.kind == kind).count()
}

#[test]
fn grid_spring_counts() {
    let h = 0.05;
    let m = sheet(2, h);
    assert_eq!(m.len(), 4);
    assert_eq!(count(&m, SpringKind::Structural), 4);
    assert_eq!(count(&m, SpringKind::Shear), 2);
    assert_eq!(count(&m, SpringKind::Bend), 0);
    for s in m.springs() {
        let want = if s.kind == SpringKind::Structural { h } else { h * 2f64.sqrt() };
        assert!((s.rest - want).abs() < 1e-15);
    }
    let m = sheet(3, h);
    assert_eq!(
        [count(&m, SpringKind::Structural), count(&m, SpringKind::Shear), count(&m, SpringKind::Bend)],
        [12, 8, 6]
    );
    for (n, k) in [(4usize, 7usize), (5, 2), (6, 6)] {
        let m = build_grid_cloth(n, k, h, Vec3::zero(), &ClothParams::default()).unwrap();
        assert_eq!(m.len(), n * k);
        let structural = n * (k - 1) + k * (n - 1);
        let shear = 2 * (n - 1) * (k - 1);
        let bend = n * (k - 2) + k * (n - 2);
        assert_eq!(
            [count(&m, SpringKind::Structural), count(&m, SpringKind::Shear), count(&m, SpringKind::Bend)],
            [structural, shear, bend]
        );
        assert_eq!(m.faces().len(), 2 * (n - 1) * (k - 1));
    }
    assert!(build_grid_cloth(1, 4, h, Vec3::zero(), &ClothParams::<f64>::default()).is_err());
}

fn pair(stretch: f64, k: f64) -> ClothMesh<f64> {
    let springs = vec![Spring { i: 0, j: 1, rest: 0.1, k, kind: SpringKind::Structural }];
    let topo = ClothTopology::new(vec![0.01, 0.01], springs, vec![]).unwrap();
    ClothMesh {
        x: vec![Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.5 + 0.1 * stretch, 0.5, 0.5)],
        v: vec![Vec3::zero(); 2],
        topo: std::sync::Arc::new(topo),
    }
}

#[test]
fn hooke_law() {
    let f = spring_forces(&pair(2.0, 100.0), 0.0).unwrap();
    assert!((f[0] - Vec3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
    assert_eq!(f[1], -f[0]);
    let f = spring_forces(&sheet(4, 0.05), 1.0).unwrap();
    assert!(f.iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn coincident_endpoints_are_rejected() {
    let mut m = pair(1.0, 100.0);
    m.x[1] = m.x[0];
    assert!(matches!(spring_forces(&m, 1.0), Err(SimError::DegenerateSpring { spring: 0, .. })));
}

fn jittered(seed: u64) -> ClothMesh<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut m = sheet(5, 0.05);
    for i in 0..m.len() {
        m.x[i] += rvec(&mut r, 0.01);
        m.v[i] = rvec(&mut r, 0.5);
    }
    m
}

proptest! {
    #[test]
    fn forces_sum_to_zero(seed in any::<u64>()) {
        let m = jittered(seed);
        let f = spring_forces(&m, 1.0).unwrap();
        let total = f.iter().fold(Vec3::zero(), |a, b| a + *b);
        prop_assert!(total.norm() <= 1e-12, "sum {:?}", total);
    }

    #[test]
    fn forces_are_translation_invariant(seed in any::<u64>(), cx in -0.2f64..0.2, cy in -0.2f64..0.2, cz in -0.2f64..0.2) {
        let m = jittered(seed);
        let mut moved = m.clone();
        let c = Vec3::new(cx, cy, cz);
        for x in moved.x.iter_mut() {
            *x += c;
        }
        let a = spring_forces(&m, 1.0).unwrap();
        let b = spring_forces(&moved, 1.0).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            prop_assert!((*fa - *fb).norm() <= 1e-9 * (1.0 + fa.norm()));
        }
    }
}

fn cfg(mesh: &ClothMesh<f64>, frac: f64, gravity: bool) -> ClothConfig<f64> {
    let mut c = ClothConfig { dt: 0.0, gravity: Vec3::zero(), damping: 1.0, c_stab: 1.0 };
    c.dt = frac * mesh.stability_bound(c.c_stab);
    if gravity {
        c.gravity = Vec3::new(0.0, 0.0, -9.8);
    }
    c
}

fn free() -> (AttachmentSet<f64>, Gripper<f64>) {
    (AttachmentSet::default(), Gripper { position: Vec3::zero(), velocity: Vec3::zero() })
}

#[test]
fn rest_is_a_fixed_point() {
    let m = sheet(6, 0.04);
    let c = cfg(&m, 0.5, false);
    let (a, g) = free();
    let out = cloth_step(&m, &a, &g, &ColliderSet::default(), &c).unwrap();
    for i in 0..m.len() {
        assert!((out.x[i] - m.x[i]).norm() <= 1e-14);
        assert!(out.v[i].norm() <= 1e-14);
    }
}

#[test]
fn zero_dt_is_identity() {
    let m = jittered(3);
    let mut c = cfg(&m, 0.5, true);
    c.dt = 0.0;
    let (a, g) = free();
    let out = cloth_step(&m, &a, &g, &ColliderSet::default(), &c).unwrap();
    assert_eq!(out.x, m.x);
    assert_eq!(out.v, m.v);
}

#[test]
fn settles_on_sticky_table() {
    let table = Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(Vec3::new(0.5, 0.5, 0.1)), Friction::Sticky)
        .with_band(0.005, 0.0025);
    let mut m = build_grid_cloth(16, 16, 0.02, Vec3::new(0.3, 0.3, 0.102), &ClothParams::default()).unwrap();
    let c = ClothConfig { dt: 0.3 * m.stability_bound(1.0), gravity: Vec3::new(0.0, 0.0, -9.8), damping: 1.0, c_stab: 1.0 };
    let cs = ColliderSet::new(vec![table]);
    let (a, g) = free();
    for _ in 0..100 {
        m = cloth_step(&m, &a, &g, &cs, &c).unwrap();
    }
    let vmax = m.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(vmax < 1e-6, "max |v| = {vmax}");
}

#[test]
fn damped_oscillator_loses_energy() {
    let mut m = pair(1.5, 100.0);
    let c = cfg(&m, 0.1, false);
    let (a, g) = free();
    let e0 = m.energy(c.gravity);
    let mut window = e0;
    for step in 1..=500 {
        m = cloth_step(&m, &a, &g, &ColliderSet::default(), &c).unwrap();
        if step == 200 {
            assert!(m.energy(c.gravity) < e0);
        }
        if step % 50 == 0 {
            let e = m.energy(c.gravity);
            assert!(e <= window + 1e-12 * e0, "energy rose at step {step}: {e} > {window}");
            window = e;
        }
    }
}

#[test]
fn unstable_dt_is_rejected() {
    let m = sheet(3, 0.05);
    let c = cfg(&m, 1.5, false);
    assert!(c.validate(&m).is_err());
    assert!(cfg(&m, 0.9, false).validate(&m).is_ok());
}

#[test]
fn attach_nearest_cases() {
    let h = 0.05;
    let m = sheet(4, h);
    let a = attach_nearest(&m, m.x[5], 0.5 * h);
    assert_eq!(a.pairs.iter().map(|p| p.0).collect::<Vec<_>>(), vec![5]);
    assert!(attach_nearest(&m, Vec3::new(0.9, 0.9, 0.9), h).is_empty());
    let centre = (m.x[5] + m.x[6] + m.x[9] + m.x[10]) / 4.0;
    let a = attach_nearest(&m, centre, h);
    let mut got: Vec<u32> = a.pairs.iter().map(|p| p.0).collect();
    got.sort();
    let mut oracle: Vec<u32> = (0..m.len() as u32).filter(|&i| (m.x[i as usize] - centre).norm() <= h).collect();
    oracle.sort();
    assert_eq!(got, oracle);
    assert_eq!(got, vec![5, 6, 9, 10]);
    for &(i, off) in &a.pairs {
        assert!((m.x[i as usize] - centre - off).norm() < 1e-15);
    }
}

#[test]
fn attached_vertices_follow_gripper() {
    let m = sheet(4, 0.05);
    let c = cfg(&m, 0.5, true);
    let a = attach_nearest(&m, m.x[0], 0.01);
    let g = Gripper { position: m.x[0], velocity: Vec3::new(0.0, 0.0, 0.4) };
    let out = cloth_step(&m, &a, &g, &ColliderSet::default(), &c).unwrap();
    assert_eq!(out.v[0], g.velocity);
    assert!((out.x[0] - (m.x[0] + g.velocity * c.dt)).norm() < 1e-15);
}

#[test]
fn template_round_trip() {
    let m = jittered(9);
    let text = write_template(&m);
    let back: ClothMesh<f64> = parse_template(&text).unwrap();
    assert_eq!(back.x, m.x);
    assert_eq!(back.springs(), m.springs());
    assert_eq!(back.faces(), m.faces());
    assert_eq!(back.mass(), m.mass());
    assert!(parse_template::<f64>("VERTICES\n0 0 0 0 1\nSPRINGS\n0 0 1 1 structural\n").is_err());
}

fn scene(seed: u64) -> (ClothMesh<f64>, AttachmentSet<f64>, Gripper<f64>, ColliderSet<f64>, ClothConfig<f64>) {
    let mut m = jittered(seed);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut ball = Collider::new(Shape::Sphere { radius: 0.06 }, Pose::at(m.x[12] + Vec3::new(0.0, 0.0, -0.055)), Friction::Slip { mu: 0.3 })
        .with_band(0.01, 0.005);
    ball.velocity.linear = Vec3::new(0.1, -0.2, 0.3);
    let plate = Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(Vec3::new(0.0, 0.0, 0.195)), Friction::Sticky)
        .with_band(0.01, 0.01);
    let a = attach_nearest(&m, m.x[0], 0.01);
    let g = Gripper { position: m.x[0], velocity: rvec(&mut r, 0.3) };
    let c = cfg(&m, 0.5, true);
    for v in m.v.iter_mut() {
        *v = rvec(&mut r, 0.3);
    }
    (m, a, g, ColliderSet::new(vec![ball, plate]), c)
}

#[test]
fn step_vjp_matches_finite_differences() {
    for seed in 0..30 {
        let (m, a, g, cs, c) = scene(seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed + 100);
        let n = m.len();
        let xb: Vec<_> = (0..n).map(|_| rvec(&mut r, 1.0)).collect();
        let vb: Vec<_> = (0..n).map(|_| rvec(&mut r, 1.0)).collect();
        let dx: Vec<_> = (0..n).map(|_| rvec(&mut r, 1.0)).collect();
        let dv: Vec<_> = (0..n).map(|_| rvec(&mut r, 1.0)).collect();
        let dg = rvec(&mut r, 1.0);
        let dc: Vec<_> = (0..2).map(|_| (rvec(&mut r, 1.0), rvec(&mut r, 1.0))).collect();
        let loss = |e: f64| {
            let mut m2 = m.clone();
            for i in 0..n {
                m2.x[i] += dx[i] * e;
                m2.v[i] += dv[i] * e;
            }
            let mut g2 = g;
            g2.velocity += dg * e;
            let mut cs2 = cs.clone();
            for (k, col) in cs2.colliders.iter_mut().enumerate() {
                col.pose.position += dc[k].0 * e;
                col.velocity.linear += dc[k].1 * e;
            }
            let out = cloth_step(&m2, &a, &g2, &cs2, &c).unwrap();
            (0..n).map(|i| out.x[i].dot(xb[i]) + out.v[i].dot(vb[i])).sum::<f64>()
        };
        let h = 1e-6;
        let fd = (loss(h) - loss(-h)) / (2.0 * h);
        let cot = cloth_step_vjp(&m, &a, &g, &cs, &c, &xb, &vb).unwrap();
        let mut an = cot.gripper_velocity.dot(dg);
        for i in 0..n {
            an += cot.x[i].dot(dx[i]) + cot.v[i].dot(dv[i]);
        }
        for k in 0..2 {
            an += cot.colliders[k].position.dot(dc[k].0) + cot.colliders[k].linear.dot(dc[k].1);
        }
        assert!((fd - an).abs() <= 1e-5 * fd.abs().max(1.0), "seed {seed}: fd {fd} an {an}");
    }
}
