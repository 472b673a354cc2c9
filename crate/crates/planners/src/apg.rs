//! Analytic policy gradients: backpropagation through the task dynamics and
//! the policy network over whole episodes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use softgrad_core::autodiff::{rollout_backward, rollout_forward, BackwardMode, CheckpointSchedule, StepOutcome, StepPair};
use softgrad_core::{Real, Result};

use crate::error::{PlanError, PlanResult};
use crate::policy::{PolicyCache, PolicyParams};
use crate::refine::clip_norm;
use crate::task::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApgConfig {
    pub epochs: usize,
    /// Episodes per gradient step.
    pub batch: usize,
    pub learning_rate: f64,
    pub clip: f64,
    /// Initial-state seeds cycled through during training.
    pub train_seeds: Vec<u64>,
}

impl Default for ApgConfig {
    fn default() -> Self {
        Self { epochs: 200, batch: 2, learning_rate: 3e-3, clip: 1.0, train_seeds: (1000..1016).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean final-state score of the epoch's training episodes.
    pub mean_score: f64,
    pub grad_norm: f64,
    pub wall_clock: f64,
}

/// The task seen with the policy parameters as the per-step action.
struct PolicyStep<'a, T: Real, E> {
    env: &'a E,
    policy: &'a PolicyParams<T>,
}

impl<T: Real, E: Task<T>> StepPair<T> for PolicyStep<'_, T, E> {
    type State = E::State;
    type Record = (E::Record, PolicyCache<T>);
    type Cotangent = E::Cotangent;

    fn action_dim(&self) -> usize {
        self.policy.len()
    }

    fn forward(&self, state: &E::State, theta: &[T]) -> Result<StepOutcome<E::State, Self::Record, T>> {
        let (a, cache) = self.policy.forward(theta, &self.env.observe(state));
        let out = self.env.forward(state, &a)?;
        Ok(StepOutcome { next: out.next, record: (out.record, cache), reward: out.reward })
    }

    fn adjoint(&self, record: &Self::Record, next_bar: E::Cotangent, w: T) -> Result<(E::Cotangent, Vec<T>)> {
        let (mut cot, a_bar) = self.env.adjoint(&record.0, next_bar, w)?;
        let (theta_bar, obs_bar) = self.policy.vjp(&self.policy.theta, &record.1, &a_bar);
        self.env.observe_vjp(&obs_bar, &mut cot);
        Ok((cot, theta_bar))
    }

    fn zero_cotangent(&self, state: &E::State) -> E::Cotangent {
        self.env.zero_cotangent(state)
    }
}

/// Episode return, final score and `∇_θ Σ_t r_t` from `state`.
pub fn policy_gradient<T: Real, E: Task<T>>(env: &E, policy: &PolicyParams<T>, state: &E::State) -> Result<(T, T, Vec<T>)> {
    let h = env.horizon();
    let step = PolicyStep { env, policy };
    let thetas = vec![policy.theta.clone(); h];
    let tape = rollout_forward(&step, state, &thetas, CheckpointSchedule::sqrt(h)?)?;
    let g = rollout_backward(&step, &tape, &thetas, &vec![T::one(); h], None, BackwardMode::Full)?;
    let mut total = vec![T::zero(); policy.len()];
    for row in &g.actions {
        for (a, b) in total.iter_mut().zip(row) {
            *a += *b;
        }
    }
    let ret = tape.rewards.iter().copied().sum();
    Ok((ret, env.score(&tape.final_state)?, total))
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    /// Ascent step along `g`.
    fn step(&mut self, theta: &mut [T], g: &[T], lr: T) {
        let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g[i] * g[i];
            theta[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

/// Trains `policy` for `cfg.epochs` epochs of clipped Adam ascent on the mean
/// episode return.
pub fn apg_train<T: Real, E: Task<T>>(env: &E, mut policy: PolicyParams<T>, cfg: &ApgConfig) -> PlanResult<(PolicyParams<T>, Vec<EpochStats>)> {
    if cfg.epochs > 0 && (cfg.batch == 0 || cfg.train_seeds.is_empty()) {
        return Err(PlanError::Config("APG needs a positive batch and at least one training seed".into()));
    }
    let t0 = Instant::now();
    let mut adam = Adam::new(policy.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    let inv = T::one() / T::from_usize_lossy(cfg.batch.max(1));
    for epoch in 0..cfg.epochs {
        let seeds: Vec<u64> = (0..cfg.batch).map(|b| cfg.train_seeds[(epoch * cfg.batch + b) % cfg.train_seeds.len()]).collect();
        let results: Vec<(T, T, Vec<T>)> = seeds
            .par_iter()
            .map(|&s| {
                let state = env.initial(s)?;
                policy_gradient(env, &policy, &state)
            })
            .collect::<Result<_>>()?;
        let mut g = vec![T::zero(); policy.len()];
        let mut mean = T::zero();
        for (_, score, grad) in &results {
            mean += *score * inv;
            for (a, b) in g.iter_mut().zip(grad) {
                *a += *b * inv;
            }
        }
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(PlanError::NanGradient { iteration: epoch, step: 0, index: i });
        }
        let norm = g.iter().map(|x| *x * *x).sum::<T>().sqrt();
        clip_norm(&mut g, T::lit(cfg.clip));
        adam.step(&mut policy.theta, &g, T::lit(cfg.learning_rate));
        trace.push(EpochStats { epoch, mean_score: mean.as_f64(), grad_norm: norm.as_f64(), wall_clock: t0.elapsed().as_secs_f64() });
    }
    Ok((policy, trace))
}
