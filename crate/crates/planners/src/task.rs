//! What planners need from an environment.

use softgrad_core::autodiff::StepPair;
use softgrad_core::{Real, Result};
use softgrad_envs::{Env, EnvCot, EnvState};

/// A differentiable, seeded, finite-horizon task scored by its final state.
pub trait Task<T: Real>: StepPair<T, State: Send + Sync> + Sync {
    fn horizon(&self) -> usize;
    /// Per-component action bounds `(lo, hi)`.
    fn bounds(&self) -> (Vec<T>, Vec<T>);
    fn initial(&self, seed: u64) -> Result<Self::State>;
    /// Forward step without keeping adjoint records.
    fn advance(&self, state: &Self::State, action: &[T]) -> Result<Self::State>;
    /// Evaluation score of a state.
    fn score(&self, state: &Self::State) -> Result<T>;
    fn observe(&self, state: &Self::State) -> Vec<T>;
    /// Adds `obs_bar` pulled back through [`Task::observe`] into `cot`.
    fn observe_vjp(&self, obs_bar: &[T], cot: &mut Self::Cotangent);
    /// Scripted reference actions from `state`, if the task has any.
    fn expert(&self, _state: &Self::State) -> Result<Option<Vec<Vec<T>>>> {
        Ok(None)
    }

    /// Final score after running `actions` from `state`.
    fn rollout(&self, state: &Self::State, actions: &[Vec<T>]) -> Result<T> {
        let mut s = state.clone();
        for (t, a) in actions.iter().enumerate() {
            s = self.advance(&s, a).map_err(|e| e.at_step(t))?;
        }
        self.score(&s)
    }
}

impl<T: Real> Task<T> for Env<T> {
    fn horizon(&self) -> usize {
        Env::horizon(self)
    }

    fn bounds(&self) -> (Vec<T>, Vec<T>) {
        let (lo, hi) = self.action_bounds();
        (lo.to_vec(), hi.to_vec())
    }

    fn initial(&self, seed: u64) -> Result<EnvState<T>> {
        Ok(self.reset(seed)?.1)
    }

    fn advance(&self, state: &EnvState<T>, action: &[T]) -> Result<EnvState<T>> {
        Ok(self.step_diff(state, action)?.state)
    }

    fn score(&self, state: &EnvState<T>) -> Result<T> {
        Ok(Env::score(self, state)?)
    }

    fn observe(&self, state: &EnvState<T>) -> Vec<T> {
        Env::observe(self, state)
    }

    fn observe_vjp(&self, obs_bar: &[T], cot: &mut EnvCot<T>) {
        Env::observe_vjp(self, obs_bar, cot)
    }

    fn expert(&self, state: &EnvState<T>) -> Result<Option<Vec<Vec<T>>>> {
        Ok(Some(self.expert_actions(state)?))
    }
}

pub(crate) fn clamp_into<T: Real>(a: &mut [T], lo: &[T], hi: &[T]) {
    for ((x, &l), &h) in a.iter_mut().zip(lo).zip(hi) {
        *x = x.max(l).min(h);
    }
}
