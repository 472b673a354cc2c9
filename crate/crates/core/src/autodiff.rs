//! Reverse-mode rollouts with uniform checkpointing.
//!
//! A [`StepPair`] couples a forward step with its exact vector–Jacobian
//! product. [`rollout_forward`] keeps only every `k`-th state; the backward
//! pass replays one segment at a time, so at most `k` step records are alive.

use std::hash::{Hash, Hasher};

use crate::error::{Result, SimError};
use crate::scalar::Real;

pub struct StepOutcome<S, R, T> {
    pub next: S,
    pub record: R,
    pub reward: T,
}

pub trait StepPair<T: Real> {
    type State: Clone;
    type Record;
    type Cotangent;

    fn action_dim(&self) -> usize;

    /// Advances one control step, returning the reward of the next state.
    fn forward(&self, state: &Self::State, action: &[T]) -> Result<StepOutcome<Self::State, Self::Record, T>>;

    /// Pulls back `next_bar` (cotangent of the next state) plus
    /// `reward_weight · ∂reward` through the step. Returns the cotangent of
    /// the input state and of the action.
    fn adjoint(&self, record: &Self::Record, next_bar: Self::Cotangent, reward_weight: T) -> Result<(Self::Cotangent, Vec<T>)>;

    fn zero_cotangent(&self, state: &Self::State) -> Self::Cotangent;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointSchedule {
    pub interval: usize,
    pub horizon: usize,
}

impl CheckpointSchedule {
    pub fn new(interval: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 || interval == 0 || interval > horizon {
            return Err(SimError::InvalidConfig(format!(
                "checkpoint interval {interval} must lie in [1, {horizon}]"
            )));
        }
        Ok(Self { interval, horizon })
    }

    /// Interval `⌈√H⌉`.
    pub fn sqrt(horizon: usize) -> Result<Self> {
        let k = (horizon as f64).sqrt().ceil() as usize;
        Self::new(k.clamp(1, horizon.max(1)), horizon)
    }

    /// Stored states, including the final one: `⌈H/k⌉ + 1`.
    pub fn stored_states(&self) -> usize {
        self.horizon.div_ceil(self.interval) + 1
    }
}

fn fingerprint<T: Real>(actions: &[Vec<T>]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    actions.len().hash(&mut h);
    for a in actions {
        a.len().hash(&mut h);
        for &x in a {
            x.as_f64().to_bits().hash(&mut h);
        }
    }
    h.finish()
}

pub struct Tape<S, T> {
    pub schedule: CheckpointSchedule,
    /// `(step index, state)` at indices `0, k, 2k, …`.
    pub checkpoints: Vec<(usize, S)>,
    pub final_state: S,
    pub rewards: Vec<T>,
    fingerprint: u64,
}

impl<S, T> Tape<S, T> {
    pub fn stored_states(&self) -> usize {
        self.checkpoints.len() + 1
    }
}

pub fn rollout_forward<T: Real, P: StepPair<T>>(
    step: &P,
    state0: &P::State,
    actions: &[Vec<T>],
    schedule: CheckpointSchedule,
) -> Result<Tape<P::State, T>> {
    if actions.len() != schedule.horizon {
        return Err(SimError::InvalidConfig(format!(
            "{} actions for a horizon of {}",
            actions.len(),
            schedule.horizon
        )));
    }
    if let Some(t) = actions.iter().position(|a| a.iter().any(|x| !x.is_finite())) {
        return Err(SimError::InvalidConfig(format!("action {t} is not finite")));
    }
    let mut checkpoints = Vec::with_capacity(schedule.stored_states());
    let mut rewards = Vec::with_capacity(schedule.horizon);
    let mut s = state0.clone();
    for (t, a) in actions.iter().enumerate() {
        if t % schedule.interval == 0 {
            checkpoints.push((t, s.clone()));
        }
        let out = step.forward(&s, a).map_err(|e| e.at_step(t))?;
        rewards.push(out.reward);
        s = out.next;
    }
    Ok(Tape { schedule, checkpoints, final_state: s, rewards, fingerprint: fingerprint(actions) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BackwardMode {
    /// Gradient of `Σ_t w_t r_t` through the full dynamics.
    #[default]
    Full,
    /// Each action only receives the gradient of its own step's reward.
    Immediate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BackwardStats {
    pub peak_records: usize,
    pub replayed_steps: usize,
}

pub struct Gradient<C, T> {
    pub actions: Vec<Vec<T>>,
    pub state0: C,
    pub stats: BackwardStats,
}

/// Reverse pass over a tape. `reward_weights[t]` is `∂loss/∂r_t`;
/// `final_bar` optionally seeds a cotangent on the final state.
pub fn rollout_backward<T: Real, P: StepPair<T>>(
    step: &P,
    tape: &Tape<P::State, T>,
    actions: &[Vec<T>],
    reward_weights: &[T],
    final_bar: Option<P::Cotangent>,
    mode: BackwardMode,
) -> Result<Gradient<P::Cotangent, T>> {
    let h = tape.schedule.horizon;
    if actions.len() != h || reward_weights.len() != h || fingerprint(actions) != tape.fingerprint {
        return Err(SimError::StaleTape("actions differ from the recorded rollout".into()));
    }
    let mut grads = vec![Vec::new(); h];
    let mut cot = final_bar.unwrap_or_else(|| step.zero_cotangent(&tape.final_state));
    let mut stats = BackwardStats::default();
    for (start, state) in tape.checkpoints.iter().rev() {
        let end = (start + tape.schedule.interval).min(h);
        let mut records = Vec::with_capacity(end - start);
        let mut s = state.clone();
        for t in *start..end {
            let out = step.forward(&s, &actions[t]).map_err(|e| e.at_step(t))?;
            records.push(out.record);
            s = out.next;
            stats.replayed_steps += 1;
        }
        stats.peak_records = stats.peak_records.max(records.len());
        for t in (*start..end).rev() {
            let rec = records.pop().expect("one record per replayed step");
            match mode {
                BackwardMode::Full => {
                    let (c, ga) = step.adjoint(&rec, cot, reward_weights[t]).map_err(|e| e.at_step(t))?;
                    cot = c;
                    grads[t] = ga;
                }
                BackwardMode::Immediate => {
                    let zero = step.zero_cotangent(&s);
                    let (_, ga) = step.adjoint(&rec, zero, reward_weights[t]).map_err(|e| e.at_step(t))?;
                    grads[t] = ga;
                }
            }
        }
    }
    if mode == BackwardMode::Immediate {
        cot = step.zero_cotangent(&tape.checkpoints[0].1);
    }
    Ok(Gradient { actions: grads, state0: cot, stats })
}

/// Forward-only episode return `Σ_t r_t`.
pub fn episode_return<T: Real, P: StepPair<T>>(step: &P, state0: &P::State, actions: &[Vec<T>]) -> Result<T> {
    let mut s = state0.clone();
    let mut total = T::zero();
    for (t, a) in actions.iter().enumerate() {
        let out = step.forward(&s, a).map_err(|e| e.at_step(t))?;
        total += out.reward;
        s = out.next;
    }
    Ok(total)
}

/// `∇_actions Σ_t r_t` with `k = ⌈√H⌉` checkpointing.
pub fn grad_episode_return<T: Real, P: StepPair<T>>(
    step: &P,
    state0: &P::State,
    actions: &[Vec<T>],
) -> Result<(T, Vec<Vec<T>>)> {
    let schedule = CheckpointSchedule::sqrt(actions.len())?;
    let tape = rollout_forward(step, state0, actions, schedule)?;
    let ones = vec![T::one(); actions.len()];
    let g = rollout_backward(step, &tape, actions, &ones, None, BackwardMode::Full)?;
    let ret = tape.rewards.iter().copied().sum();
    Ok((ret, g.actions))
}

/// Central finite difference of `f` along every coordinate of `actions`.
pub fn finite_difference<T: Real>(
    actions: &[Vec<T>],
    eps: T,
    mut f: impl FnMut(&[Vec<T>]) -> Result<T>,
) -> Result<Vec<Vec<T>>> {
    let mut a = actions.to_vec();
    let mut out = Vec::with_capacity(actions.len());
    for t in 0..actions.len() {
        let mut row = Vec::with_capacity(actions[t].len());
        for d in 0..actions[t].len() {
            let x0 = a[t][d];
            a[t][d] = x0 + eps;
            let fp = f(&a)?;
            a[t][d] = x0 - eps;
            let fm = f(&a)?;
            a[t][d] = x0;
            row.push((fp - fm) / (eps + eps));
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_counts() {
        assert_eq!(CheckpointSchedule::new(3, 10).unwrap().stored_states(), 5);
        assert_eq!(CheckpointSchedule::new(10, 10).unwrap().stored_states(), 2);
        assert_eq!(CheckpointSchedule::new(1, 1).unwrap().stored_states(), 2);
        assert_eq!(CheckpointSchedule::sqrt(70).unwrap().interval, 9);
        assert!(CheckpointSchedule::new(0, 5).is_err());
        assert!(CheckpointSchedule::new(6, 5).is_err());
    }
}
