//! The functional environment: reset, differentiable stepping and the
//! step adjoint.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use softgrad_core::autodiff::{StepOutcome, StepPair};
use softgrad_core::cloth::{attach_nearest, cloth_step, cloth_step_vjp, AttachmentSet, Gripper};
use softgrad_core::mpm::{mpm_step, mpm_step_vjp};
use softgrad_core::{ColliderSet, Hold, Kinematics, Real, RngState, SimError, Vec3};

use crate::adjust::{adjust_vjp, snap_pick, snap_push, Adjust};
use crate::catalog::{ActionSpace, Family, TaskId};
use crate::config::{EnvOverrides, TaskConfig};
use crate::error::{EnvError, EnvResult};
use crate::plan::{expand_macro, low_level, Grasp, Phase, Trajectory};
use crate::reward::{distance_d, distance_d_vjp, reward_aux, reward_aux_vjp, reward_gt, Correspondence, GoalSpec};
use crate::state::{Dynamics, DynamicsCot, EffectorState, EnvCot, EnvState};
use crate::tasks::{build_scene, expert_action, initial_state, wrist, Body, Scene, Script};

/// Particles or vertices in an observation.
pub const OBS_POINTS: usize = 128;
/// Subsample size of the Chamfer distance.
pub const CHAMFER_POINTS: usize = 256;

/// Time a folded cloth rests before an unfold episode starts.
const SETTLE_SECONDS: f64 = 4.0;

const SUBSAMPLE_SEED: u64 = 0x5eed_0f_c4a3;

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo<T> {
    pub r_gt: T,
    pub r_aux: T,
    /// Action components that were clamped to the bounds.
    pub clamped: Vec<bool>,
    /// Whether contact adjustment moved the start point.
    pub adjusted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub obs: Vec<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
    pub state: EnvState<T>,
}

/// Everything a control step decides before the dynamics run.
#[derive(Clone, Debug)]
struct Prepared<T> {
    clamped: Vec<bool>,
    adjust: Adjust<T>,
    traj: Trajectory<T>,
}

#[derive(Clone, Debug)]
struct Substep<T> {
    state: Dynamics<T>,
    position: Vec3<T>,
    angle: T,
    phase: usize,
    attach: Arc<AttachmentSet<T>>,
}

pub struct StepRecord<T> {
    input: EnvState<T>,
    prep: Prepared<T>,
    subs: Vec<Substep<T>>,
    next: EnvState<T>,
}

pub struct Env<T: Real> {
    config: TaskConfig,
    scene: Scene<T>,
    particles: usize,
    goal_index: Vec<usize>,
    resets: Mutex<HashMap<u64, EnvState<T>>>,
}

/// Builds the environment for `task` with optional overrides.
pub fn make_env<T: Real>(task: TaskId, overrides: &EnvOverrides) -> EnvResult<Env<T>> {
    Env::new(TaskConfig::with_overrides(task, overrides)?)
}

impl<T: Real> Env<T> {
    pub fn new(config: TaskConfig) -> EnvResult<Self> {
        config.validate()?;
        let scene = build_scene::<T>(&config)?;
        let (dynamics, _) = initial_state(&config, &scene, RngState::from_seed(0))?;
        if let (Body::Cloth { config: cc, .. }, Dynamics::Cloth(mesh)) = (&scene.body, &dynamics) {
            cc.validate(mesh)?;
        }
        let particles = dynamics.len();
        let goal_index = if config.task.corresponded() || particles <= CHAMFER_POINTS {
            (0..particles).collect()
        } else {
            let mut rng = RngState::from_seed(SUBSAMPLE_SEED).stream();
            let mut idx = rand::seq::index::sample(&mut rng, particles, CHAMFER_POINTS).into_vec();
            idx.sort_unstable();
            idx
        };
        Ok(Self { config, scene, particles, goal_index, resets: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn task(&self) -> TaskId {
        self.config.task
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn action_size(&self) -> usize {
        self.config.action_space.dim()
    }

    /// Per-component action bounds.
    pub fn action_bounds(&self) -> (&[T], &[T]) {
        (&self.scene.action_lo, &self.scene.action_hi)
    }

    /// Particle or vertex count of every state.
    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn obs_size(&self) -> usize {
        3 * OBS_POINTS + 4
    }

    /// Control-step length in seconds for low-level tasks.
    pub fn control_dt(&self) -> T {
        self.scene.dt() * T::from_usize_lossy(self.config.substeps)
    }

    fn obs_index(&self) -> impl Iterator<Item = usize> + '_ {
        (0..OBS_POINTS).map(|i| i * self.particles / OBS_POINTS)
    }

    pub fn observe(&self, state: &EnvState<T>) -> Vec<T> {
        let x = state.dynamics.points();
        let mut obs = Vec::with_capacity(self.obs_size());
        for i in self.obs_index() {
            obs.extend_from_slice(&x[i].0);
        }
        obs.extend_from_slice(&state.effector.position.0);
        obs.push(state.effector.angle);
        obs
    }

    /// Adds `obs_bar` pulled back through [`Env::observe`] into `cot`.
    pub fn observe_vjp(&self, obs_bar: &[T], cot: &mut EnvCot<T>) {
        let xb = cot.dynamics.x_mut();
        for (k, i) in self.obs_index().enumerate() {
            for a in 0..3 {
                xb[i][a] += obs_bar[3 * k + a];
            }
        }
        let o = 3 * OBS_POINTS;
        for a in 0..3 {
            cot.effector[a] += obs_bar[o + a];
        }
        cot.angle += obs_bar[o + 3];
    }

    pub fn zero_cotangent(&self, state: &EnvState<T>) -> EnvCot<T> {
        EnvCot { dynamics: state.dynamics.zero_cotangent(), effector: Vec3::zero(), angle: T::zero() }
    }

    /// Initial observation and state for `seed`. Goals come from running the
    /// scripted expert from the same initial configuration.
    pub fn reset(&self, seed: u64) -> EnvResult<(Vec<T>, EnvState<T>)> {
        if let Some(s) = self.resets.lock().expect("reset cache poisoned").get(&seed) {
            return Ok((self.observe(s), s.clone()));
        }
        let rng = RngState::from_seed(seed);
        let (dynamics, effector) = initial_state(&self.config, &self.scene, rng.fold_in(1))?;
        let cfg = &self.config;
        let (start, effector, goal_points) = match Script::for_task(cfg.task) {
            Script::Unfold { folds } => {
                let flat = dynamics.points().to_vec();
                let (folded, eff, _) = self.script(dynamics, effector, Script::Fold { folds }, 0, folds, seed, None)?;
                let settle = (T::lit(SETTLE_SECONDS) / self.scene.dt()).ceil().to_usize().unwrap_or(1);
                let prep = Prepared { clamped: Vec::new(), adjust: Adjust::Unchanged, traj: Trajectory::hold(eff.position, settle, self.scene.dt()) };
                let (folded, eff, _) = self.run(&folded, &eff, &prep, false)?;
                (folded, eff, flat)
            }
            script => {
                let (end, _, _) = self.script(dynamics.clone(), effector.clone(), script, 0, cfg.horizon, seed, None)?;
                (dynamics, effector, end.points().to_vec())
            }
        };
        let mode = if cfg.task.corresponded() { Correspondence::Corresponded } else { Correspondence::Unordered };
        let goal = GoalSpec { points: self.goal_index.iter().map(|&i| goal_points[i]).collect(), mode };
        let state = EnvState { dynamics: start, effector, t: 0, rng: rng.fold_in(2), seed, goal: Arc::new(goal) };
        self.resets.lock().expect("reset cache poisoned").insert(seed, state.clone());
        Ok((self.observe(&state), state))
    }

    /// The scripted expert's actions from `state` to the end of the episode.
    /// The expert is closed loop, so this simulates the remaining steps.
    pub fn expert_actions(&self, state: &EnvState<T>) -> EnvResult<Vec<Vec<T>>> {
        let script = Script::for_task(self.config.task);
        let goal = matches!(script, Script::Unfold { .. }).then_some(&state.goal.points[..]);
        let steps = self.config.horizon.saturating_sub(state.t);
        let (_, _, actions) = self.script(state.dynamics.clone(), state.effector.clone(), script, state.t, steps, state.seed, goal)?;
        Ok(actions)
    }

    #[allow(clippy::too_many_arguments)]
    fn script(
        &self,
        mut d: Dynamics<T>,
        mut e: EffectorState<T>,
        script: Script,
        t0: usize,
        steps: usize,
        seed: u64,
        goal: Option<&[Vec3<T>]>,
    ) -> EnvResult<(Dynamics<T>, EffectorState<T>, Vec<Vec<T>>)> {
        let mut actions = Vec::with_capacity(steps);
        for t in t0..t0 + steps {
            let a = expert_action(&self.config, script, &d, &e, t, seed, goal);
            let prep = self.prepare(&d, &e, &a)?;
            let out = self.run(&d, &e, &prep, false)?;
            d = out.0;
            e = out.1;
            actions.push(a);
        }
        Ok((d, e, actions))
    }

    fn distance(&self, state: &EnvState<T>) -> EnvResult<T> {
        let x = state.dynamics.points();
        let sub: Vec<Vec3<T>> = self.goal_index.iter().map(|&i| x[i]).collect();
        distance_d(&sub, &state.goal)
    }

    /// Ground-truth reward of a state.
    pub fn score(&self, state: &EnvState<T>) -> EnvResult<T> {
        Ok(reward_gt(self.distance(state)?, T::lit(self.config.lambda)))
    }

    /// Reward tool point and its offset from the effector position.
    fn tool_point(&self, e: &EffectorState<T>) -> (Vec3<T>, Vec3<T>) {
        let r = wrist(self.scene.wrist_axis, e.angle) * self.scene.tool_point;
        (e.position + r, r)
    }

    fn rewards(&self, state: &EnvState<T>) -> EnvResult<(T, T)> {
        let r_gt = self.score(state)?;
        let r_aux = reward_aux(self.tool_point(&state.effector).0, state.dynamics.points());
        Ok((r_gt, r_aux))
    }

    fn prepare(&self, d: &Dynamics<T>, e: &EffectorState<T>, action: &[T]) -> EnvResult<Prepared<T>> {
        let dim = self.action_size();
        if action.len() != dim {
            return Err(EnvError::ActionShape { expected: dim, got: action.len() });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::Sim(SimError::InvalidConfig("action is not finite".into())));
        }
        let (lo, hi) = self.action_bounds();
        let mut a = action.to_vec();
        let mut clamped = vec![false; dim];
        for k in 0..dim {
            if a[k] < lo[k] || a[k] > hi[k] {
                a[k] = a[k].max(lo[k]).min(hi[k]);
                clamped[k] = true;
            }
        }
        let dt = self.scene.dt();
        let cfg = &self.config;
        let (adjust, traj) = match cfg.action_space {
            ActionSpace::Macro6 => {
                let p = Vec3::new(a[0], a[1], a[2]);
                let q = Vec3::new(a[3], a[4], a[5]);
                let rho = T::lit(cfg.snap_radius);
                let (p, adj) = match (cfg.contact_adjust, cfg.task.family()) {
                    (false, _) => (p, Adjust::Unchanged),
                    (true, Family::Cloth) => snap_pick(p, d.points(), rho),
                    (true, _) => snap_push(p, d.points(), rho),
                };
                let layout = self.scene.layout.as_ref().expect("macro tasks define a layout");
                (adj, expand_macro(layout, p, q, e.position, dt))
            }
            space => {
                let v = Vec3::new(a[0], a[1], a[2]);
                let w = if space == ActionSpace::LowLevel4 { a[3] } else { T::zero() };
                let s = &self.scene;
                (Adjust::Unchanged, low_level(v, w, e.position, e.angle, s.effector_lo, s.effector_hi, s.angle_range, cfg.substeps, dt))
            }
        };
        Ok(Prepared { clamped, adjust, traj })
    }

    fn colliders(&self, position: Vec3<T>, angle: T, phase: &Phase<T>, held: &[usize]) -> ColliderSet<T> {
        let mut set = ColliderSet::new(self.scene.statics.clone());
        if let Some(tool) = &self.scene.tool {
            let mut c = tool.clone();
            c.pose.position = position;
            c.pose.angle = angle;
            c.velocity = Kinematics { linear: phase.linear, angular: phase.angular };
            let k = set.colliders.len();
            set.colliders.push(c);
            set.held = held.iter().map(|&particle| Hold { particle, collider: k }).collect();
        }
        set
    }

    fn run(&self, d: &Dynamics<T>, e: &EffectorState<T>, prep: &Prepared<T>, record: bool) -> EnvResult<(Dynamics<T>, EffectorState<T>, Vec<Substep<T>>)> {
        let dt = self.scene.dt();
        let mut state = d.clone();
        let mut position = e.position;
        let mut angle = e.angle;
        let mut attach = Arc::new(AttachmentSet::default());
        let mut subs = Vec::with_capacity(if record { prep.traj.total_steps() } else { 0 });
        let statics = ColliderSet::new(self.scene.statics.clone());
        for (k, phase) in prep.traj.phases.iter().enumerate() {
            if let Dynamics::Cloth(mesh) = &state {
                match phase.grasp {
                    Grasp::Keep => {}
                    Grasp::Attach => attach = Arc::new(attach_nearest(mesh, position, T::lit(self.config.grasp_radius))),
                    Grasp::Release => attach = Arc::new(AttachmentSet::default()),
                }
            }
            for _ in 0..phase.steps {
                let next = match (&state, &self.scene.body) {
                    (Dynamics::Mpm(s), Body::Mpm { materials, sim }) => {
                        let cs = self.colliders(position, angle, phase, &e.held);
                        Dynamics::Mpm(mpm_step(s, materials, &cs, sim)?)
                    }
                    (Dynamics::Cloth(m), Body::Cloth { config, .. }) => {
                        let g = Gripper { position, velocity: phase.linear };
                        Dynamics::Cloth(cloth_step(m, &attach, &g, &statics, config)?)
                    }
                    _ => unreachable!("dynamics match the scene body"),
                };
                let prev = std::mem::replace(&mut state, next);
                if record {
                    subs.push(Substep { state: prev, position, angle, phase: k, attach: attach.clone() });
                }
                position += phase.linear * dt;
                angle += phase.angular * dt;
            }
        }
        Ok((state, EffectorState { position, angle, held: e.held.clone() }, subs))
    }

    fn step_inner(&self, state: &EnvState<T>, action: &[T], record: bool) -> EnvResult<(StepResult<T>, Option<StepRecord<T>>)> {
        if state.t >= self.config.horizon {
            return Err(EnvError::Finished { horizon: self.config.horizon });
        }
        let prep = self.prepare(&state.dynamics, &state.effector, action)?;
        let (dynamics, effector, subs) = self.run(&state.dynamics, &state.effector, &prep, record)?;
        let next = EnvState { dynamics, effector, t: state.t + 1, rng: state.rng, seed: state.seed, goal: state.goal.clone() };
        let (r_gt, r_aux) = self.rewards(&next)?;
        let reward = if self.config.aux_reward { r_gt + r_aux } else { r_gt };
        let info = StepInfo { r_gt, r_aux, clamped: prep.clamped.clone(), adjusted: prep.adjust.moved() };
        let result = StepResult { obs: self.observe(&next), reward, done: next.t == self.config.horizon, info, state: next };
        let rec = record.then(|| StepRecord { input: state.clone(), prep, subs, next: result.state.clone() });
        Ok((result, rec))
    }

    /// One control step. The reward includes the auxiliary term only when
    /// `aux_reward` is set; `info.r_gt` is always the ground-truth reward.
    pub fn step_diff(&self, state: &EnvState<T>, action: &[T]) -> EnvResult<StepResult<T>> {
        Ok(self.step_inner(state, action, false)?.0)
    }

    pub fn reset_batch(&self, seeds: &[u64]) -> Vec<EnvResult<(Vec<T>, EnvState<T>)>> {
        seeds.par_iter().map(|&s| self.reset(s)).collect()
    }

    pub fn step_batch(&self, states: &[EnvState<T>], actions: &[Vec<T>]) -> Vec<EnvResult<StepResult<T>>> {
        states.par_iter().zip(actions.par_iter()).map(|(s, a)| self.step_diff(s, a)).collect()
    }

    /// Runs `actions` from `state` and returns the final ground-truth reward.
    pub fn rollout_score(&self, state: &EnvState<T>, actions: &[Vec<T>]) -> EnvResult<T> {
        let mut s = state.clone();
        for a in actions {
            s = self.step_diff(&s, a)?.state;
        }
        self.score(&s)
    }

    fn step_adjoint(&self, rec: &StepRecord<T>, next_bar: EnvCot<T>, w: T) -> EnvResult<(EnvCot<T>, Vec<T>)> {
        let cfg = &self.config;
        let mut cot = next_bar;
        if w != T::zero() {
            let next = &rec.next;
            let x = next.dynamics.points();
            let sub: Vec<Vec3<T>> = self.goal_index.iter().map(|&i| x[i]).collect();
            let lambda = T::lit(cfg.lambda);
            let r_gt = reward_gt(distance_d(&sub, &next.goal)?, lambda);
            let g = distance_d_vjp(&sub, &next.goal, -lambda * r_gt * w);
            let xb = cot.dynamics.x_mut();
            for (k, &i) in self.goal_index.iter().enumerate() {
                xb[i] += g[k];
            }
            if cfg.aux_reward {
                let (tool, r) = self.tool_point(&next.effector);
                let (tb, i, pb) = reward_aux_vjp(tool, x, w);
                xb[i] += pb;
                cot.effector += tb;
                cot.angle += tb.dot(self.scene.wrist_axis.cross(r));
            }
        }
        let traj = &rec.prep.traj;
        let dt = self.scene.dt();
        let mut pos_bar = cot.effector;
        let mut ang_bar = cot.angle;
        let mut phase_bar = vec![(Vec3::zero(), T::zero()); traj.phases.len()];
        let mut dcot = cot.dynamics;
        let statics = ColliderSet::new(self.scene.statics.clone());
        let tool = self.scene.statics.len();
        for sub in rec.subs.iter().rev() {
            let phase = &traj.phases[sub.phase];
            let pb = &mut phase_bar[sub.phase];
            pb.0 += pos_bar * dt;
            pb.1 += ang_bar * dt;
            dcot = match (&sub.state, dcot, &self.scene.body) {
                (Dynamics::Mpm(s), DynamicsCot::Mpm(c), Body::Mpm { materials, sim }) => {
                    let cs = self.colliders(sub.position, sub.angle, phase, &rec.input.effector.held);
                    let (c, cc) = mpm_step_vjp(s, materials, &cs, sim, &c)?;
                    if self.scene.tool.is_some() {
                        let t = &cc[tool];
                        pos_bar += t.position;
                        ang_bar += t.angle;
                        pb.0 += t.linear;
                        pb.1 += t.angular;
                    }
                    DynamicsCot::Mpm(c)
                }
                (Dynamics::Cloth(m), DynamicsCot::Cloth { x, v }, Body::Cloth { config, .. }) => {
                    let g = Gripper { position: sub.position, velocity: phase.linear };
                    let out = cloth_step_vjp(m, &sub.attach, &g, &statics, config, &x, &v)?;
                    pb.0 += out.gripper_velocity;
                    DynamicsCot::Cloth { x: out.x, v: out.v }
                }
                _ => unreachable!("cotangent matches the scene body"),
            };
        }
        let tc = traj.vjp(&phase_bar);
        pos_bar += tc.start;
        ang_bar += tc.angle;
        let mut a_bar = match cfg.action_space {
            ActionSpace::Macro6 => {
                let (p_bar, points) = adjust_vjp(&rec.prep.adjust, tc.pick);
                let xb = dcot.x_mut();
                for (i, g) in points {
                    xb[i] += g;
                }
                vec![p_bar[0], p_bar[1], p_bar[2], tc.place[0], tc.place[1], tc.place[2]]
            }
            ActionSpace::LowLevel3 => tc.linear.0.to_vec(),
            ActionSpace::LowLevel4 => vec![tc.linear[0], tc.linear[1], tc.linear[2], tc.angular],
        };
        let fault = T::one() + T::lit(cfg.adjoint_fault);
        for (g, &c) in a_bar.iter_mut().zip(&rec.prep.clamped) {
            *g = if c { T::zero() } else { *g * fault };
        }
        Ok((EnvCot { dynamics: dcot, effector: pos_bar, angle: ang_bar }, a_bar))
    }

    /// Forward step keeping the intermediates needed by [`StepPair::adjoint`].
    pub fn step_record(&self, state: &EnvState<T>, action: &[T]) -> EnvResult<(StepResult<T>, StepRecord<T>)> {
        let (r, rec) = self.step_inner(state, action, true)?;
        Ok((r, rec.expect("recording requested")))
    }

    /// Adjoint of one recorded step; see [`StepPair::adjoint`].
    pub fn adjoint(&self, rec: &StepRecord<T>, next_bar: EnvCot<T>, reward_weight: T) -> EnvResult<(EnvCot<T>, Vec<T>)> {
        self.step_adjoint(rec, next_bar, reward_weight)
    }
}

impl<T: Real> StepPair<T> for Env<T> {
    type State = EnvState<T>;
    type Record = StepRecord<T>;
    type Cotangent = EnvCot<T>;

    fn action_dim(&self) -> usize {
        self.action_size()
    }

    fn forward(&self, state: &EnvState<T>, action: &[T]) -> softgrad_core::Result<StepOutcome<EnvState<T>, StepRecord<T>, T>> {
        let (r, record) = self.step_record(state, action)?;
        Ok(StepOutcome { next: r.state, record, reward: r.reward })
    }

    fn adjoint(&self, record: &StepRecord<T>, next_bar: EnvCot<T>, reward_weight: T) -> softgrad_core::Result<(EnvCot<T>, Vec<T>)> {
        Ok(self.step_adjoint(record, next_bar, reward_weight)?)
    }

    fn zero_cotangent(&self, state: &EnvState<T>) -> EnvCot<T> {
        Env::zero_cotangent(self, state)
    }
}
