//! Gradient refinement of action sequences through the differentiable task.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use softgrad_core::autodiff::{rollout_backward, rollout_forward, BackwardMode, CheckpointSchedule};
use softgrad_core::{Real, RngState};

use crate::cem::{cem_mpc, CemConfig};
use crate::error::{PlanError, PlanResult};
use crate::result::PlanOutcome;
use crate::task::{clamp_into, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Each action follows the gradient of its own step's reward only.
    Immediate,
    /// Gradient of the summed episode reward through the full dynamics.
    #[default]
    EpisodeReturn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradRefineConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Global gradient norm clip.
    pub clip: f64,
    pub objective: Objective,
}

impl Default for GradRefineConfig {
    fn default() -> Self {
        Self { steps: 20, learning_rate: 0.02, clip: 1.0, objective: Objective::EpisodeReturn }
    }
}

impl GradRefineConfig {
    pub fn validate(&self) -> PlanResult<()> {
        if !(self.learning_rate > 0.0) || !(self.clip > 0.0) {
            return Err(PlanError::Config("learning rate and clip must be positive".into()));
        }
        Ok(())
    }
}

/// Final score and objective gradient of `actions`.
pub fn score_and_gradient<T: Real, E: Task<T>>(env: &E, state: &E::State, actions: &[Vec<T>], objective: Objective) -> PlanResult<(T, Vec<Vec<T>>)> {
    let schedule = CheckpointSchedule::sqrt(actions.len())?;
    let tape = rollout_forward(env, state, actions, schedule)?;
    let weights = vec![T::one(); actions.len()];
    let mode = match objective {
        Objective::Immediate => BackwardMode::Immediate,
        Objective::EpisodeReturn => BackwardMode::Full,
    };
    let g = rollout_backward(env, &tape, actions, &weights, None, mode)?;
    Ok((env.score(&tape.final_state)?, g.actions))
}

/// Scales `g` so its global norm is at most `clip`.
pub(crate) fn clip_norm<T: Real>(g: &mut [T], clip: T) {
    let n = g.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if n > clip {
        let s = clip / n;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

/// Clipped gradient ascent from `init`. Returns the best iterate by score.
pub fn diff_mpc<T: Real, E: Task<T>>(env: &E, state: &E::State, init: &[Vec<T>], cfg: &GradRefineConfig) -> PlanResult<PlanOutcome<T>> {
    cfg.validate()?;
    let t0 = Instant::now();
    let (lo, hi) = env.bounds();
    let mut x: Vec<Vec<T>> = init.to_vec();
    for a in &mut x {
        clamp_into(a, &lo, &hi);
    }
    let mut best: Option<(Vec<Vec<T>>, T)> = None;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for it in 0..=cfg.steps {
        let (score, grad) = score_and_gradient(env, state, &x, cfg.objective)?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((x.clone(), score));
        }
        trace.push(best.as_ref().expect("set above").1);
        if it == cfg.steps {
            break;
        }
        let d = lo.len();
        let mut flat: Vec<T> = grad.concat();
        if let Some(i) = flat.iter().position(|g| !g.is_finite()) {
            return Err(PlanError::NanGradient { iteration: it, step: i / d, index: i % d });
        }
        clip_norm(&mut flat, T::lit(cfg.clip));
        let lr = T::lit(cfg.learning_rate);
        for (t, a) in x.iter_mut().enumerate() {
            for k in 0..d {
                a[k] += lr * flat[t * d + k];
            }
            clamp_into(a, &lo, &hi);
        }
    }
    let (actions, score) = best.expect("at least one evaluation");
    Ok(PlanOutcome { actions, trace, score, wall_clock: t0.elapsed().as_secs_f64(), seed: 0 })
}

/// Uniformly random in-bounds sequence.
pub fn random_actions<T: Real, E: Task<T>>(env: &E, rng: RngState) -> Vec<Vec<T>> {
    use rand::Rng;
    let (lo, hi) = env.bounds();
    let mut s = rng.stream();
    (0..env.horizon())
        .map(|_| lo.iter().zip(&hi).map(|(l, h)| *l + (*h - *l) * T::lit(s.random_range(0.0..1.0))).collect())
        .collect()
}

/// Gradient refinement starting from a finished plan; keeps the plan when
/// refinement does not beat it.
pub fn refine_plan<T: Real, E: Task<T>>(env: &E, state: &E::State, coarse: PlanOutcome<T>, refine: &GradRefineConfig) -> PlanResult<PlanOutcome<T>> {
    let t0 = Instant::now();
    let fine = diff_mpc(env, state, &coarse.actions, refine)?;
    let mut trace = coarse.trace;
    let floor = coarse.score;
    trace.extend(fine.trace.iter().map(|s| s.max(floor)));
    let (actions, score) = if fine.score > coarse.score { (fine.actions, fine.score) } else { (coarse.actions, coarse.score) };
    Ok(PlanOutcome { actions, trace, score, wall_clock: coarse.wall_clock + t0.elapsed().as_secs_f64(), seed: coarse.seed })
}

/// CEM followed by gradient refinement from its solution; returns whichever
/// of the two scores higher.
pub fn diff_cem_mpc<T: Real, E: Task<T>>(
    env: &E,
    state: &E::State,
    cem: &CemConfig,
    refine: &GradRefineConfig,
    rng: RngState,
) -> PlanResult<PlanOutcome<T>> {
    let coarse = cem_mpc(env, state, cem, rng)?;
    refine_plan(env, state, coarse, refine)
}
