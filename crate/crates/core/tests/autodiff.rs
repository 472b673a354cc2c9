use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softgrad_core::autodiff::{
    finite_difference, grad_episode_return, rollout_backward, rollout_forward, BackwardMode, CheckpointSchedule, StepOutcome,
    StepPair,
};
use softgrad_core::mpm::{mpm_step, mpm_step_vjp, MaterialParams, MpmCot, MpmState};
use softgrad_core::{Collider, ColliderSet, Friction, Pose, Result, Shape, SimConfig, SimError, Vec3};

/// Rope on a table, pushed by a sphere whose velocity is the action.
struct RopePush {
    cfg: SimConfig<f64>,
    mats: Vec<MaterialParams<f64>>,
    goal: Vec3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
struct RopeState {
    mpm: MpmState<f64>,
    tool: Vec3<f64>,
}

struct RopeRecord {
    substeps: Vec<RopeState>,
    action: Vec3<f64>,
    centroid: Vec3<f64>,
}

struct RopeCot {
    mpm: MpmCot<f64>,
    tool: Vec3<f64>,
}

impl RopePush {
    fn new(gravity: bool) -> Self {
        let mut cfg = SimConfig::with_grid(64, 2e-3, 5);
        if !gravity {
            cfg.gravity = Vec3::zero();
        }
        Self { cfg, mats: vec![MaterialParams::elastic(1.0, 5.0, 0.3)], goal: Vec3::new(0.5, 0.6, 0.12) }
    }

    fn colliders(&self, tool: Vec3<f64>, vel: Vec3<f64>) -> ColliderSet<f64> {
        let dx = self.cfg.dx;
        let table = Collider::new(Shape::HalfSpace { normal: Vec3::unit(2) }, Pose::at(Vec3::new(0.5, 0.5, 0.1)), Friction::Slip { mu: 0.3 })
            .with_band(dx, dx);
        let mut ball = Collider::new(Shape::Sphere { radius: 0.02 }, Pose::at(tool), Friction::Slip { mu: 0.2 }).with_band(dx, dx);
        ball.velocity.linear = vel;
        ColliderSet::new(vec![table, ball])
    }

    fn initial(&self) -> RopeState {
        let h = self.cfg.dx / 2.0;
        let mut x = Vec::new();
        for i in 0..16 {
            for j in 0..2 {
                for k in 0..2 {
                    x.push(Vec3::new(0.42 + i as f64 * h, 0.5 + j as f64 * h, 0.1 + (k as f64 + 1.0) * h));
                }
            }
        }
        let n = x.len();
        RopeState { mpm: MpmState::at_rest(x, vec![h * h * h; n], vec![h * h * h; n], vec![0; n]), tool: Vec3::new(0.47, 0.47, 0.11) }
    }

    fn centroid(s: &MpmState<f64>) -> Vec3<f64> {
        s.x.iter().fold(Vec3::zero(), |a, b| a + *b) / s.len() as f64
    }
}

impl StepPair<f64> for RopePush {
    type State = RopeState;
    type Record = RopeRecord;
    type Cotangent = RopeCot;

    fn action_dim(&self) -> usize {
        3
    }

    fn forward(&self, state: &RopeState, action: &[f64]) -> Result<StepOutcome<RopeState, RopeRecord, f64>> {
        let a = Vec3::new(action[0], action[1], action[2]);
        let mut s = state.clone();
        let mut substeps = Vec::with_capacity(self.cfg.substeps_per_control);
        for _ in 0..self.cfg.substeps_per_control {
            let next = mpm_step(&s.mpm, &self.mats, &self.colliders(s.tool, a), &self.cfg)?;
            let tool = s.tool + a * self.cfg.dt;
            substeps.push(std::mem::replace(&mut s, RopeState { mpm: next, tool }));
        }
        let c = Self::centroid(&s.mpm);
        let reward = -(c - self.goal).norm_sq();
        Ok(StepOutcome { next: s, record: RopeRecord { substeps, action: a, centroid: c }, reward })
    }

    fn adjoint(&self, rec: &RopeRecord, mut bar: RopeCot, w: f64) -> Result<(RopeCot, Vec<f64>)> {
        let n = bar.mpm.len();
        let g = (rec.centroid - self.goal) * (-2.0 * w / n as f64);
        for xb in bar.mpm.x.iter_mut() {
            *xb += g;
        }
        let mut abar = Vec3::zero();
        for s in rec.substeps.iter().rev() {
            abar += bar.tool * self.cfg.dt;
            let (m, cots) = mpm_step_vjp(&s.mpm, &self.mats, &self.colliders(s.tool, rec.action), &self.cfg, &bar.mpm)?;
            bar.mpm = m;
            bar.tool += cots[1].position;
            abar += cots[1].linear;
        }
        Ok((bar, vec![abar[0], abar[1], abar[2]]))
    }

    fn zero_cotangent(&self, s: &RopeState) -> RopeCot {
        RopeCot { mpm: MpmCot::zeros(s.mpm.len()), tool: Vec3::zero() }
    }
}

fn actions(seed: u64, h: usize) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..h).map(|_| vec![r.random_range(-0.3..0.3), r.random_range(0.2..0.8), r.random_range(-0.1..0.1)]).collect()
}

fn backward(env: &RopePush, acts: &[Vec<f64>], k: usize, weights: &[f64]) -> (RopeState, Vec<Vec<f64>>, usize) {
    let s0 = env.initial();
    let tape = rollout_forward(env, &s0, acts, CheckpointSchedule::new(k, acts.len()).unwrap()).unwrap();
    let g = rollout_backward(env, &tape, acts, weights, None, BackwardMode::Full).unwrap();
    (tape.final_state, g.actions, g.stats.peak_records)
}

fn max_rel(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn checkpoint_interval_does_not_change_results() {
    let env = RopePush::new(true);
    let acts = actions(1, 21);
    let ones = vec![1.0; 21];
    let (s1, g1, p1) = backward(&env, &acts, 1, &ones);
    let (s7, g7, p7) = backward(&env, &acts, 7, &ones);
    let (s21, g21, p21) = backward(&env, &acts, 21, &ones);
    let (s5, g5, p5) = backward(&env, &acts, CheckpointSchedule::sqrt(21).unwrap().interval, &ones);
    assert_eq!(s1, s7);
    assert_eq!(s1, s21);
    assert_eq!(s1, s5);
    assert_eq!((p1, p7, p21, p5), (1, 7, 21, 5));
    for g in [&g7, &g21, &g5] {
        assert!(max_rel(g, &g1) <= 1e-12);
    }
    assert!(s1.mpm.x.iter().any(|p| p[1] > 0.5 + env.cfg.dx), "tool never touched the rope");
}

#[test]
fn tape_sizes() {
    let env = RopePush::new(true);
    let s0 = env.initial();
    let t = rollout_forward(&env, &s0, &actions(2, 1), CheckpointSchedule::new(1, 1).unwrap()).unwrap();
    assert_eq!(t.stored_states(), 2);
    assert_eq!(t.checkpoints[0].1, s0);
    let acts = actions(2, 6);
    let t = rollout_forward(&env, &s0, &acts, CheckpointSchedule::new(6, 6).unwrap()).unwrap();
    assert_eq!(t.stored_states(), 2);
    let t = rollout_forward(&env, &s0, &acts, CheckpointSchedule::new(4, 6).unwrap()).unwrap();
    assert_eq!(t.stored_states(), CheckpointSchedule::new(4, 6).unwrap().stored_states());
}

#[test]
fn gradient_matches_finite_differences() {
    let env = RopePush::new(true);
    let acts = actions(3, 10);
    let (_, grad) = grad_episode_return(&env, &env.initial(), &acts).unwrap();
    let fd = finite_difference(&acts, 1e-6, |a| softgrad_core::autodiff::episode_return(&env, &env.initial(), a)).unwrap();
    let err = max_rel(&grad, &fd);
    assert!(err <= 1e-4, "max relative error {err}");
    assert!(grad.iter().flatten().any(|g| g.abs() > 1e-8));
}

#[test]
fn directional_derivatives() {
    let env = RopePush::new(true);
    let acts = actions(4, 6);
    let (_, grad) = grad_episode_return(&env, &env.initial(), &acts).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..10 {
        let d: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let shifted = |e: f64| -> Vec<Vec<f64>> {
            acts.iter().zip(&d).map(|(a, d)| a.iter().zip(d).map(|(a, d)| a + e * d).collect()).collect()
        };
        let eps = 1e-6;
        let lp = softgrad_core::autodiff::episode_return(&env, &env.initial(), &shifted(eps)).unwrap();
        let lm = softgrad_core::autodiff::episode_return(&env, &env.initial(), &shifted(-eps)).unwrap();
        let fd = (lp - lm) / (2.0 * eps);
        let an: f64 = grad.iter().flatten().zip(d.iter().flatten()).map(|(g, d)| g * d).sum();
        assert!((fd - an).abs() <= 1e-4 * fd.abs().max(1e-6), "fd {fd} an {an}");
    }
}

#[test]
fn gradient_is_linear_in_reward_weights() {
    let env = RopePush::new(true);
    let acts = actions(5, 8);
    let (_, g1, _) = backward(&env, &acts, 3, &[1.0; 8]);
    let (_, g3, _) = backward(&env, &acts, 3, &[-2.5; 8]);
    for (a, b) in g1.iter().flatten().zip(g3.iter().flatten()) {
        assert!((b + 2.5 * a).abs() <= 1e-12 * a.abs().max(1e-12));
    }
    let (_, g0, _) = backward(&env, &acts, 3, &[0.0; 8]);
    assert!(g0.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn terminal_reward_reaches_early_actions() {
    let env = RopePush::new(true);
    let acts = actions(6, 8);
    let mut w = vec![0.0; 8];
    w[7] = 1.0;
    let (_, g, _) = backward(&env, &acts, 3, &w);
    assert!(g[0].iter().any(|x| x.abs() > 0.0));
    let s0 = env.initial();
    let tape = rollout_forward(&env, &s0, &acts, CheckpointSchedule::new(3, 8).unwrap()).unwrap();
    let imm = rollout_backward(&env, &tape, &acts, &w, None, BackwardMode::Immediate).unwrap();
    assert!(imm.actions[0].iter().all(|&x| x == 0.0));
    assert!(imm.actions[7].iter().zip(&g[7]).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-12)));
}

#[test]
fn static_scene_gives_finite_gradient() {
    let env = RopePush::new(false);
    let acts = vec![vec![0.0; 3]; 5];
    let (_, g) = grad_episode_return(&env, &env.initial(), &acts).unwrap();
    assert!(g.iter().flatten().all(|x| x.is_finite()));
}

#[test]
fn stale_tape_is_rejected() {
    let env = RopePush::new(true);
    let acts = actions(7, 4);
    let s0 = env.initial();
    let tape = rollout_forward(&env, &s0, &acts, CheckpointSchedule::new(2, 4).unwrap()).unwrap();
    let mut other = acts.clone();
    other[2][1] += 1e-9;
    let e = rollout_backward(&env, &tape, &other, &[1.0; 4], None, BackwardMode::Full).err().unwrap();
    assert!(matches!(e, SimError::StaleTape(_)));
    let mut bad = acts.clone();
    bad[1][0] = f64::NAN;
    assert!(rollout_forward(&env, &s0, &bad, CheckpointSchedule::new(2, 4).unwrap()).is_err());
}
