//! Scene geometry, randomized initial states and scripted experts.

use std::sync::Arc;

use rand::Rng;
use softgrad_core::cloth::{build_grid_cloth, parse_template, ClothConfig, ClothMesh, ClothParams};
use softgrad_core::mpm::{MaterialParams, MpmState};
use softgrad_core::{Collider, Friction, Mat3, Pose, Real, RngState, Shape, SimConfig, Vec3};

use crate::catalog::{Family, TaskId};
use crate::config::TaskConfig;
use crate::error::EnvResult;
use crate::plan::{MacroKind, MacroLayout};
use crate::state::{Dynamics, EffectorState};

const TSHIRT: &str = include_str!("../data/tshirt.txt");

const BOWL_HALF: f64 = 0.055;
const BOWL_HEIGHT: f64 = 0.07;
const BOWL_WALL: f64 = 0.016;
const TARGET_HALF: f64 = 0.07;
const TARGET_HEIGHT: f64 = 0.06;
const TOOL_RADIUS: f64 = 0.015;

fn v3<T: Real>(x: f64, y: f64, z: f64) -> Vec3<T> {
    Vec3::new(T::lit(x), T::lit(y), T::lit(z))
}

pub(crate) enum Body<T> {
    Mpm { materials: Vec<MaterialParams<T>>, sim: SimConfig<T> },
    Cloth { config: ClothConfig<T> },
}

/// Immutable per-env scene description.
pub(crate) struct Scene<T> {
    pub body: Body<T>,
    pub statics: Vec<Collider<T>>,
    /// Collider driven by the effector, posed each substep.
    pub tool: Option<Collider<T>>,
    pub layout: Option<MacroLayout<T>>,
    pub effector_lo: Vec3<T>,
    pub effector_hi: Vec3<T>,
    pub angle_range: (T, T),
    pub action_lo: Vec<T>,
    pub action_hi: Vec<T>,
    /// Reward tool point in the effector frame.
    pub tool_point: Vec3<T>,
    pub wrist_axis: Vec3<T>,
}

impl<T: Real> Scene<T> {
    /// Step length of the dynamics.
    pub fn dt(&self) -> T {
        match &self.body {
            Body::Mpm { sim, .. } => sim.dt,
            Body::Cloth { config, .. } => config.dt,
        }
    }
}

fn table<T: Real>(z: f64, friction: Friction<T>, margin: f64, ramp: f64) -> Collider<T> {
    Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(v3(0.5, 0.5, z)), friction).with_band(T::lit(margin), T::lit(ramp))
}

fn cloth_template<T: Real>(cfg: &TaskConfig) -> EnvResult<ClothMesh<T>> {
    let params = ClothParams::default();
    let mesh = if cfg.task == TaskId::FoldTshirt {
        parse_template(TSHIRT)?
    } else {
        build_grid_cloth(cfg.cloth_res, cfg.cloth_res, T::lit(cfg.cloth_spacing), Vec3::zero(), &params)?
    };
    Ok(mesh)
}

pub(crate) fn build_scene<T: Real>(cfg: &TaskConfig) -> EnvResult<Scene<T>> {
    let tz = cfg.table_z;
    let family = cfg.task.family();
    let low = v3::<T>(0.08, 0.08, tz);
    let high = v3::<T>(0.92, 0.92, tz + 0.2);
    let mut action_lo = vec![low[0], low[1], low[2], low[0], low[1], low[2]];
    let mut action_hi = vec![high[0], high[1], high[2], high[0], high[1], high[2]];
    if cfg.task.action_space() != crate::ActionSpace::Macro6 {
        let (v, w) = (T::lit(cfg.v_max), T::lit(cfg.w_max));
        action_lo = vec![-v, -v, -v, -w];
        action_hi = vec![v, v, v, w];
        action_lo.truncate(cfg.action_space.dim());
        action_hi.truncate(cfg.action_space.dim());
    }
    let pi = T::lit(std::f64::consts::PI);
    let mut scene = Scene {
        body: Body::Cloth {
            config: ClothConfig { dt: T::zero(), gravity: Vec3::from_f64(cfg.gravity), damping: T::zero(), c_stab: T::one() },
        },
        statics: Vec::new(),
        tool: None,
        layout: None,
        effector_lo: v3(0.08, 0.08, tz),
        effector_hi: v3(0.92, 0.92, 0.8),
        angle_range: (-pi, pi),
        action_lo,
        action_hi,
        tool_point: Vec3::zero(),
        wrist_axis: Vec3::unit(0),
    };
    if family == Family::Cloth {
        let mesh = cloth_template::<T>(cfg)?;
        let bound = mesh.stability_bound(T::one());
        scene.body = Body::Cloth {
            config: ClothConfig {
                dt: bound * T::lit(cfg.cloth_dt_fraction),
                gravity: Vec3::from_f64(cfg.gravity),
                damping: T::lit(cfg.cloth_damping),
                c_stab: T::one(),
            },
        };
        scene.statics.push(table(tz, Friction::Slip { mu: T::one() }, 0.005, 0.0025));
        scene.layout = Some(MacroLayout {
            kind: MacroKind::PickPlace,
            transit_z: T::lit(tz + cfg.transit_height),
            push_z: T::lit(tz),
            durations: cfg.phase_durations.iter().map(|&d| T::lit(d)).collect(),
        });
        return Ok(scene);
    }
    let mut sim = SimConfig::<T>::with_grid(cfg.grid_n, cfg.dt, cfg.substeps);
    sim.gravity = Vec3::from_f64(cfg.gravity);
    sim.full_grid = cfg.full_grid;
    sim.validate()?;
    let dx = 1.0 / cfg.grid_n as f64;
    let materials: Vec<MaterialParams<T>> = match family {
        Family::Fluid => vec![MaterialParams::fluid(1.0, 40.0, 7.0), MaterialParams::elastic(1.0, 30.0, 0.3)],
        _ => vec![MaterialParams::elastic(1.0, cfg.rope_youngs, 0.3)],
    };
    let slip = Friction::Slip { mu: T::lit(0.2) };
    scene.statics.push(table(tz, slip, dx, dx));
    match cfg.task {
        TaskId::PourWater | TaskId::PourSoup => {
            let bowl = Shape::Bowl {
                inner_half_x: T::lit(BOWL_HALF),
                inner_half_y: T::lit(BOWL_HALF),
                height: T::lit(BOWL_HEIGHT),
                thickness: T::lit(BOWL_WALL),
            };
            let mut tool = Collider::new(bowl, Pose::at(Vec3::zero()), slip).with_band(T::lit(dx), T::lit(dx));
            tool.pose.axis = Vec3::unit(0);
            tool.attached = true;
            scene.tool = Some(tool);
            scene.effector_lo = v3(0.2, 0.2, 0.15);
            scene.effector_hi = v3(0.8, 0.8, 0.45);
            scene.tool_point = v3(0.0, 0.0, BOWL_HEIGHT);
        }
        TaskId::PushRope => {
            let shape = Shape::Capsule { a: Vec3::zero(), b: v3(0.0, 0.0, 0.1), radius: T::lit(TOOL_RADIUS) };
            let mut tool = Collider::new(shape, Pose::at(Vec3::zero()), slip).with_band(T::lit(dx), T::lit(dx));
            tool.attached = true;
            scene.tool = Some(tool);
            scene.layout = Some(MacroLayout {
                kind: MacroKind::Push,
                transit_z: T::lit(tz + cfg.transit_height),
                push_z: T::lit(tz + cfg.push_height),
                durations: cfg.phase_durations.iter().map(|&d| T::lit(d)).collect(),
            });
        }
        TaskId::WhipRope => {
            let mut tool = Collider::new(Shape::Sphere { radius: T::lit(cfg.rope_radius) }, Pose::at(Vec3::zero()), Friction::Sticky)
                .with_band(T::lit(dx), T::lit(dx));
            tool.attached = true;
            scene.tool = Some(tool);
            scene.effector_lo = v3(0.08, 0.08, tz + cfg.rope_radius);
            scene.effector_hi = v3(0.92, 0.92, 0.5);
        }
        _ => unreachable!("cloth handled above"),
    }
    if matches!(cfg.task, TaskId::PourWater | TaskId::PourSoup) {
        let target = Shape::Bowl {
            inner_half_x: T::lit(TARGET_HALF),
            inner_half_y: T::lit(TARGET_HALF),
            height: T::lit(TARGET_HEIGHT),
            thickness: T::lit(BOWL_WALL),
        };
        scene.statics.push(Collider::new(target, Pose::at(v3(0.5, 0.7, tz + BOWL_WALL)), slip).with_band(T::lit(dx), T::lit(dx)));
    }
    scene.body = Body::Mpm { materials, sim };
    Ok(scene)
}

/// Rope centre line as slices; particles are stored slice-major with the same
/// cross-section in every slice.
pub(crate) struct RopeLayout {
    pub per_slice: usize,
}

pub(crate) fn rope_layout(cfg: &TaskConfig) -> RopeLayout {
    let h = cfg.spacing / cfg.grid_n as f64;
    RopeLayout { per_slice: cross_section(cfg.rope_radius, h).len() }
}

fn cross_section(radius: f64, h: f64) -> Vec<(f64, f64)> {
    let m = (radius / h).floor() as i64;
    let mut out = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            let (a, b) = (i as f64 * h, j as f64 * h);
            if a * a + b * b <= radius * radius + 1e-12 {
                out.push((a, b));
            }
        }
    }
    out
}

/// Particles along an arc starting at `start` with the given heading and
/// curvature, lying on the table.
fn sample_rope(cfg: &TaskConfig, start: [f64; 2], heading: f64, curvature: f64) -> Vec<Vec3<f64>> {
    let h = cfg.spacing / cfg.grid_n as f64;
    let r = cfg.rope_radius;
    let slices = (cfg.rope_length / h).floor() as usize;
    let section = cross_section(r, h);
    let mut x = Vec::with_capacity(slices * section.len());
    for k in 0..slices {
        let s = (k as f64 + 0.5) * h;
        let phi = heading + curvature * s;
        let (cx, cy) = if curvature.abs() > 1e-9 {
            (start[0] + (phi.sin() - heading.sin()) / curvature, start[1] + (heading.cos() - phi.cos()) / curvature)
        } else {
            (start[0] + s * heading.cos(), start[1] + s * heading.sin())
        };
        let n = (-phi.sin(), phi.cos());
        for &(a, b) in &section {
            x.push(Vec3::new(cx + n.0 * a, cy + n.1 * a, cfg.table_z + r + b));
        }
    }
    x
}

fn fluid_block(lo: Vec3<f64>, hi: Vec3<f64>, h: f64) -> Vec<Vec3<f64>> {
    let count = |a: usize| ((hi[a] - lo[a]) / h).floor() as usize;
    let (nx, ny, nz) = (count(0), count(1), count(2));
    let mut out = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                out.push(lo + Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h));
            }
        }
    }
    out
}

pub(crate) fn initial_state<T: Real>(cfg: &TaskConfig, scene: &Scene<T>, rng: RngState) -> EnvResult<(Dynamics<T>, EffectorState<T>)> {
    let mut r = rng.stream();
    let tz = cfg.table_z;
    let none: Arc<[usize]> = Arc::from(Vec::new());
    match cfg.task {
        TaskId::PushRope => {
            let heading: f64 = r.random_range(-0.4..0.4);
            let curvature = r.random_range(-2.5..2.5);
            let centre = [0.5 + r.random_range(-0.05..0.05), 0.45 + r.random_range(-0.05..0.05)];
            let half = 0.5 * cfg.rope_length;
            let start = [centre[0] - half * heading.cos(), centre[1] - half * heading.sin()];
            let x = sample_rope(cfg, start, heading, curvature);
            let eff = EffectorState { position: v3(0.5, 0.5, tz + cfg.transit_height), angle: T::zero(), held: none };
            Ok((Dynamics::Mpm(rope_state(cfg, scene, x)), eff))
        }
        TaskId::WhipRope => {
            let heading: f64 = r.random_range(-0.15..0.15);
            let start = [0.2 + r.random_range(-0.03..0.03), 0.25 + r.random_range(-0.03..0.03)];
            let x = sample_rope(cfg, start, heading, 0.0);
            let grip = Vec3::new(start[0], start[1], tz + cfg.rope_radius);
            let h = cfg.spacing / cfg.grid_n as f64;
            let held: Vec<usize> = (0..x.len()).filter(|&i| (x[i] - grip).norm() <= cfg.rope_radius + 0.5 * h).collect();
            let eff = EffectorState { position: grip.cast(), angle: T::zero(), held: Arc::from(held) };
            Ok((Dynamics::Mpm(rope_state(cfg, scene, x)), eff))
        }
        TaskId::PourWater | TaskId::PourSoup => {
            let h = cfg.spacing / cfg.grid_n as f64;
            let floor = Vec3::new(0.5 + r.random_range(-0.03..0.03), 0.32 + r.random_range(-0.02..0.02), 0.16);
            let inset = BOWL_HALF - 0.5 / cfg.grid_n as f64;
            let x = fluid_block(floor + Vec3::new(-inset, -inset, 0.004), floor + Vec3::new(inset, inset, 0.05), h);
            let vol = h * h * h;
            let mut material = vec![0u16; x.len()];
            if cfg.task == TaskId::PourSoup {
                let blob = 0.018;
                for (dxq, dyq) in [(-0.025, -0.025), (0.025, -0.025), (-0.025, 0.025), (0.025, 0.025)] {
                    let c = floor + Vec3::new(dxq, dyq, 0.025);
                    for (i, p) in x.iter().enumerate() {
                        if (*p - c).norm() <= blob {
                            material[i] = 1;
                        }
                    }
                }
            }
            let Body::Mpm { materials, .. } = &scene.body else { unreachable!() };
            let mass = material.iter().map(|&m| materials[m as usize].density.as_f64() * vol).collect();
            let s = MpmState::at_rest(x, mass, vec![vol; material.len()], material);
            let eff = EffectorState { position: floor.cast(), angle: T::zero(), held: none };
            Ok((Dynamics::Mpm(s.cast()), eff))
        }
        _ => {
            let mut mesh = cloth_template::<f64>(cfg)?;
            let (lo, hi) = bounds(&mesh.x);
            let extent = hi - lo;
            let free = Vec3::new(0.84 - extent[0], 0.84 - extent[1], 0.0);
            let origin = Vec3::new(0.08 + r.random_range(0.0..free[0].max(1e-6)), 0.08 + r.random_range(0.0..free[1].max(1e-6)), tz + 0.002);
            for p in mesh.x.iter_mut() {
                *p = *p - lo + origin;
            }
            let eff = EffectorState { position: v3(0.5, 0.5, tz + cfg.transit_height), angle: T::zero(), held: none };
            Ok((Dynamics::Cloth(mesh.cast()), eff))
        }
    }
}

fn rope_state<T: Real>(cfg: &TaskConfig, scene: &Scene<T>, x: Vec<Vec3<f64>>) -> MpmState<T> {
    let h = cfg.spacing / cfg.grid_n as f64;
    let Body::Mpm { materials, .. } = &scene.body else { unreachable!() };
    let n = x.len();
    let vol = h * h * h;
    MpmState::at_rest(x, vec![materials[0].density.as_f64() * vol; n], vec![vol; n], vec![0; n]).cast()
}

pub(crate) fn bounds<T: Real>(x: &[Vec3<T>]) -> (Vec3<T>, Vec3<T>) {
    let mut lo = Vec3::splat(T::infinity());
    let mut hi = Vec3::splat(T::neg_infinity());
    for p in x {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Per-seed offset of the fold place points, so goals differ across seeds
/// beyond a rigid translation.
const PLACE_JITTER: f64 = 0.015;

/// Which scripted behaviour drives the expert.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Script {
    Push,
    Whip,
    Pour,
    /// The first `folds` steps fold the square cloth, the rest hold.
    Fold { folds: usize },
    Tshirt,
    /// Undo `folds` folds, then move the worst-placed vertex to its goal.
    Unfold { folds: usize },
}

impl Script {
    pub fn for_task(task: TaskId) -> Self {
        match task {
            TaskId::PushRope => Script::Push,
            TaskId::WhipRope => Script::Whip,
            TaskId::PourWater | TaskId::PourSoup => Script::Pour,
            TaskId::FoldCloth1 => Script::Fold { folds: 1 },
            TaskId::FoldCloth3 => Script::Fold { folds: 3 },
            TaskId::FoldTshirt => Script::Tshirt,
            TaskId::UnfoldCloth1 => Script::Unfold { folds: 1 },
            TaskId::UnfoldCloth3 => Script::Unfold { folds: 3 },
        }
    }
}

fn macro_action<T: Real>(p: Vec3<f64>, q: Vec3<f64>) -> Vec<T> {
    [p[0], p[1], p[2], q[0], q[1], q[2]].iter().map(|&v| T::lit(v)).collect()
}

fn jitter(seed: u64, t: usize) -> Vec3<f64> {
    let mut r = RngState::from_seed(seed).fold_in(3).fold_in(t as u64).stream();
    Vec3::new(r.random_range(-PLACE_JITTER..PLACE_JITTER), r.random_range(-PLACE_JITTER..PLACE_JITTER), 0.0)
}

/// Expert action at control step `t` given the current state. `goal` holds
/// the corresponded goal positions of the unfold tasks.
pub(crate) fn expert_action<T: Real>(
    cfg: &TaskConfig,
    script: Script,
    dynamics: &Dynamics<T>,
    effector: &EffectorState<T>,
    t: usize,
    seed: u64,
    goal: Option<&[Vec3<T>]>,
) -> Vec<T> {
    let x: Vec<Vec3<f64>> = dynamics.points().iter().map(|p| p.cast()).collect();
    let tz = cfg.table_z;
    let lift = |p: Vec3<f64>, dz: f64| Vec3::new(p[0], p[1], tz + dz);
    let res = cfg.cloth_res;
    let (a, b, c, d) = (0, res - 1, res * res - 1, res * (res - 1));
    let centre = (res / 2) * res + res / 2;
    let hold = |v: usize| macro_action(lift(x[v], 0.002), lift(x[v], 0.002));
    match script {
        Script::Push => {
            let per = rope_layout(cfg).per_slice;
            let slices = x.len() / per;
            let mid = |k: usize| -> Vec3<f64> { x[k * per..(k + 1) * per].iter().fold(Vec3::zero(), |s, p| s + *p) / per as f64 };
            let f = [0.12, 0.28, 0.44, 0.6, 0.76, 0.9][t % 6];
            let k = ((slices as f64 - 1.0) * f) as usize;
            let tangent = (mid((k + 2).min(slices - 1)) - mid(k.saturating_sub(2))).normalized();
            let n = Vec3::new(-tangent[1], tangent[0], 0.0);
            let s = mid(k) - n * (cfg.rope_radius + TOOL_RADIUS + 0.012);
            macro_action(Vec3::new(s[0], s[1], tz), Vec3::new(s[0] + 0.09 * n[0], s[1] + 0.09 * n[1], tz))
        }
        Script::Whip => {
            let v = if t < 50 {
                let ph = 2.0 * std::f64::consts::PI * t as f64 / 25.0;
                [0.3 * ph.sin(), 0.55, 0.0]
            } else {
                [0.0; 3]
            };
            v.iter().map(|&c| T::lit(c)).collect()
        }
        Script::Pour => {
            let control = cfg.dt * cfg.substeps as f64;
            let p = effector.position.cast::<f64>();
            let v = if t < 30 {
                let left = (30 - t) as f64 * control;
                [0.0, (0.63 - p[1]) / left, (0.275 - p[2]) / left, 0.0]
            } else if t < 65 {
                [0.0, 0.0, 0.0, -2.7]
            } else {
                [0.0; 4]
            };
            v.iter().map(|&c| T::lit(c)).collect()
        }
        Script::Fold { folds } => {
            let j = jitter(seed, t);
            match (t, folds) {
                (0, _) => macro_action(lift(x[a], 0.002), lift(x[c] + j, 0.012)),
                (1, 3) => macro_action(lift(x[b], 0.002), lift(x[d] + j, 0.016)),
                (2, 3) => macro_action(lift(x[c], 0.012), lift(x[centre] + j, 0.02)),
                _ => hold(c),
            }
        }
        Script::Tshirt => {
            let (lo, hi) = bounds(&x);
            let mid = (lo + hi) * 0.5;
            let extreme = |f: &dyn Fn(&Vec3<f64>) -> f64| -> Vec3<f64> { *x.iter().max_by(|p, q| f(p).total_cmp(&f(q))).expect("non-empty mesh") };
            let j = jitter(seed, t);
            match t {
                0 => {
                    let left = extreme(&|p| -p[0] + 0.01 * p[1]);
                    macro_action(lift(left, 0.002), lift(Vec3::new(mid[0] - 0.04, left[1], 0.0) + j, 0.012))
                }
                1 => {
                    let right = extreme(&|p| p[0] + 0.01 * p[1]);
                    macro_action(lift(right, 0.002), lift(Vec3::new(mid[0] + 0.04, right[1], 0.0) + j, 0.012))
                }
                2 => {
                    let hem = extreme(&|p| -p[1] - 0.001 * (p[0] - mid[0]).abs());
                    macro_action(lift(hem, 0.002), lift(Vec3::new(hem[0], hi[1] - 0.03, 0.0) + j, 0.016))
                }
                _ => {
                    let top = extreme(&|p| p[2]);
                    macro_action(lift(top, 0.002), lift(top, 0.002))
                }
            }
        }
        Script::Unfold { folds } => {
            let g: Vec<Vec3<f64>> = goal.expect("unfold goal").iter().map(|p| p.cast()).collect();
            let order: &[usize] = if folds >= 3 { &[c, b, a] } else { &[a] };
            let v = order.get(t).copied().unwrap_or_else(|| {
                (0..x.len()).max_by(|&i, &k| (x[i] - g[i]).norm().total_cmp(&(x[k] - g[k]).norm())).expect("non-empty mesh")
            });
            macro_action(x[v], lift(g[v], 0.004))
        }
    }
}

/// Rotation of the effector frame at wrist angle `angle`.
pub(crate) fn wrist<T: Real>(axis: Vec3<T>, angle: T) -> Mat3<T> {
    Mat3::rotation(axis, angle)
}
