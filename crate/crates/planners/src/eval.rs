//! Multi-seed evaluation by final-state score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use softgrad_core::{Real, RngState};

use crate::error::{PlanError, PlanResult};
use crate::policy::PolicyParams;
use crate::refine::random_actions;
use crate::task::Task;

pub enum Controller<'a, T> {
    /// The same open-loop sequence from every initial state.
    Sequence(&'a [Vec<T>]),
    Policy(&'a PolicyParams<T>),
    /// Uniform random actions; the stream depends on the key and the seed.
    Random(RngState),
    /// The task's scripted expert.
    Expert,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub standard_error: f64,
    pub scores: Vec<f64>,
}

impl Evaluation {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, standard_error: (var / n).sqrt(), scores }
    }
}

/// Actions the controller takes from the initial state of `seed`.
pub fn controller_actions<T: Real, E: Task<T>>(env: &E, state: &E::State, controller: &Controller<'_, T>, seed: u64) -> PlanResult<Vec<Vec<T>>> {
    Ok(match controller {
        Controller::Sequence(s) => s.to_vec(),
        Controller::Random(key) => random_actions(env, key.fold_in(seed)),
        Controller::Expert => env.expert(state)?.ok_or_else(|| PlanError::Config("task has no scripted expert".into()))?,
        Controller::Policy(p) => {
            let mut s = state.clone();
            let mut out = Vec::with_capacity(env.horizon());
            for t in 0..env.horizon() {
                let a = p.act(&env.observe(&s));
                s = env.advance(&s, &a).map_err(|e| e.at_step(t))?;
                out.push(a);
            }
            out
        }
    })
}

/// Mean and standard error of the final-state score over `seeds`.
pub fn evaluate<T: Real, E: Task<T>>(env: &E, controller: &Controller<'_, T>, seeds: &[u64]) -> PlanResult<Evaluation> {
    if seeds.len() < 2 {
        return Err(PlanError::Config("evaluation needs at least two seeds".into()));
    }
    let scores: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let s = env.initial(seed)?;
            let actions = controller_actions(env, &s, controller, seed)?;
            Ok(env.rollout(&s, &actions)?.as_f64())
        })
        .collect::<PlanResult<_>>()?;
    Ok(Evaluation::from_scores(scores))
}
