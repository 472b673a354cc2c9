#![allow(dead_code)]

use softgrad_core::autodiff::{StepOutcome, StepPair};
use softgrad_core::Result;
use softgrad_planners::Task;

/// Accumulates `Σ_t |a_t − a*_t|²`; every step is rewarded `exp(−sum)`.
pub struct Toy {
    pub target: Vec<Vec<f64>>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyState {
    pub t: usize,
    pub sq: f64,
}

impl Toy {
    pub fn new(target: Vec<Vec<f64>>) -> Self {
        Self { target, lo: -1.0, hi: 1.0 }
    }
}

impl StepPair<f64> for Toy {
    type State = ToyState;
    type Record = (ToyState, Vec<f64>);
    type Cotangent = f64;

    fn action_dim(&self) -> usize {
        self.target[0].len()
    }

    fn forward(&self, s: &ToyState, a: &[f64]) -> Result<StepOutcome<ToyState, Self::Record, f64>> {
        let d: f64 = a.iter().zip(&self.target[s.t]).map(|(x, y)| (x - y).powi(2)).sum();
        let next = ToyState { t: s.t + 1, sq: s.sq + d };
        let reward = (-next.sq).exp();
        Ok(StepOutcome { record: (s.clone(), a.to_vec()), next, reward })
    }

    fn adjoint(&self, rec: &Self::Record, next_bar: f64, w: f64) -> Result<(f64, Vec<f64>)> {
        let (s, a) = rec;
        let d: f64 = a.iter().zip(&self.target[s.t]).map(|(x, y)| (x - y).powi(2)).sum();
        let sq_bar = next_bar - w * (-(s.sq + d)).exp();
        Ok((sq_bar, a.iter().zip(&self.target[s.t]).map(|(x, y)| sq_bar * 2.0 * (x - y)).collect()))
    }

    fn zero_cotangent(&self, _: &ToyState) -> f64 {
        0.0
    }
}

impl Task<f64> for Toy {
    fn horizon(&self) -> usize {
        self.target.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.action_dim();
        (vec![self.lo; d], vec![self.hi; d])
    }

    fn initial(&self, seed: u64) -> Result<ToyState> {
        Ok(ToyState { t: 0, sq: (seed % 5) as f64 * 0.01 })
    }

    fn advance(&self, s: &ToyState, a: &[f64]) -> Result<ToyState> {
        Ok(self.forward(s, a)?.next)
    }

    fn score(&self, s: &ToyState) -> Result<f64> {
        Ok((-s.sq).exp())
    }

    fn observe(&self, s: &ToyState) -> Vec<f64> {
        vec![s.t as f64 / self.target.len() as f64, s.sq]
    }

    fn observe_vjp(&self, obs_bar: &[f64], cot: &mut f64) {
        *cot += obs_bar[1];
    }
}
