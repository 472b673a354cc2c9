//! Cross-entropy method over whole action sequences.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use softgrad_core::{Real, RngState};

use crate::error::{PlanError, PlanResult};
use crate::result::PlanOutcome;
use crate::task::{clamp_into, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replan {
    /// Optimise the full-horizon sequence once.
    #[default]
    OpenLoop,
    /// Re-optimise the remaining steps after executing each action.
    Receding,
}

/// Standard deviations are fractions of each action component's range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub init_std: f64,
    pub min_std: f64,
    pub replan: Replan,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self { population: 64, elite_fraction: 0.125, iterations: 20, init_std: 0.3, min_std: 0.02, replan: Replan::OpenLoop }
    }
}

impl CemConfig {
    pub fn elites(&self) -> usize {
        (self.elite_fraction * self.population as f64).ceil() as usize
    }

    pub fn validate(&self) -> PlanResult<()> {
        let e = self.elites();
        if !(2 <= e && e < self.population) {
            return Err(PlanError::Config(format!("elite count {e} must lie in [2, population {})", self.population)));
        }
        if !(self.min_std > 0.0) || self.init_std < 0.0 {
            return Err(PlanError::Config("std floor must be positive and initial std non-negative".into()));
        }
        if self.iterations == 0 {
            return Err(PlanError::Config("CEM needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// One CEM search from `state` over `steps` actions. `warm` is always
/// evaluated as a candidate, so the result is never worse than it.
fn search<T: Real, E: Task<T>>(
    env: &E,
    state: &E::State,
    steps: usize,
    warm: Option<&[Vec<T>]>,
    cfg: &CemConfig,
    rng: RngState,
) -> PlanResult<(Vec<Vec<T>>, T, Vec<T>)> {
    let (lo, hi) = env.bounds();
    let d = lo.len();
    let range: Vec<T> = lo.iter().zip(&hi).map(|(l, h)| *h - *l).collect();
    let mut mean: Vec<Vec<T>> = match warm {
        Some(w) => w.to_vec(),
        None => vec![lo.iter().zip(&hi).map(|(l, h)| (*l + *h) * T::lit(0.5)).collect(); steps],
    };
    let floor: Vec<T> = range.iter().map(|r| *r * T::lit(cfg.min_std)).collect();
    let mut std: Vec<Vec<T>> = vec![range.iter().zip(&floor).map(|(r, f)| (*r * T::lit(cfg.init_std)).max(*f)).collect(); steps];
    let mut best: Option<(Vec<Vec<T>>, T)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let ne = cfg.elites();
    for it in 0..cfg.iterations {
        let mut stream = rng.fold_in(it as u64).stream();
        let mut pop: Vec<Vec<Vec<T>>> = Vec::with_capacity(cfg.population + 1);
        pop.push(mean.clone());
        if let (0, Some(w)) = (it, warm) {
            pop.push(w.to_vec());
        }
        while pop.len() < cfg.population {
            let seq = (0..steps)
                .map(|t| {
                    let mut a: Vec<T> = (0..d)
                        .map(|k| {
                            let z: f64 = stream.sample(StandardNormal);
                            mean[t][k] + std[t][k] * T::lit(z)
                        })
                        .collect();
                    clamp_into(&mut a, &lo, &hi);
                    a
                })
                .collect();
            pop.push(seq);
        }
        let scores: Vec<T> = pop.par_iter().map(|s| env.rollout(state, s)).collect::<Result<_, _>>()?;
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, s)| scores[top] > *s) {
            best = Some((pop[top].clone(), scores[top]));
        }
        trace.push(best.as_ref().expect("set above").1);
        let inv = T::one() / T::from_usize_lossy(ne);
        for t in 0..steps {
            for k in 0..d {
                let m = order[..ne].iter().map(|&i| pop[i][t][k]).sum::<T>() * inv;
                let v = order[..ne].iter().map(|&i| (pop[i][t][k] - m).powi(2)).sum::<T>() * inv;
                mean[t][k] = m;
                std[t][k] = v.sqrt().max(floor[k]);
            }
        }
    }
    let (actions, score) = best.expect("at least one iteration");
    Ok((actions, score, trace))
}

/// CEM planning from `state`; deterministic given `rng`.
pub fn cem_mpc<T: Real, E: Task<T>>(env: &E, state: &E::State, cfg: &CemConfig, rng: RngState) -> PlanResult<PlanOutcome<T>> {
    cfg.validate()?;
    let t0 = Instant::now();
    let h = env.horizon();
    let (actions, score, trace) = match cfg.replan {
        Replan::OpenLoop => search(env, state, h, None, cfg, rng)?,
        Replan::Receding => {
            let mut s = state.clone();
            let mut done: Vec<Vec<T>> = Vec::with_capacity(h);
            let mut plan: Option<Vec<Vec<T>>> = None;
            let mut trace = Vec::with_capacity(h);
            let mut score = T::neg_infinity();
            for t in 0..h {
                let (p, sc, _) = search(env, &s, h - t, plan.as_deref(), cfg, rng.fold_in(1 << 32 | t as u64))?;
                score = sc;
                trace.push(sc);
                s = env.advance(&s, &p[0])?;
                done.push(p[0].clone());
                plan = Some(p[1..].to_vec()).filter(|p| !p.is_empty());
            }
            (done, score, trace)
        }
    };
    Ok(PlanOutcome { actions, trace, score, wall_clock: t0.elapsed().as_secs_f64(), seed: 0 })
}
