//! Analytic episode-return gradients against central finite differences.

use softgrad_core::autodiff::{finite_difference, grad_episode_return};
use softgrad_core::Real;

use crate::env::Env;
use crate::error::EnvResult;
use crate::state::EnvState;

#[derive(Clone, Debug, PartialEq)]
pub struct CoordError {
    pub step: usize,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub episode_return: f64,
    pub coords: Vec<CoordError>,
    pub max_rel_error: f64,
    /// Index into `coords` of the largest error.
    pub worst: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`, where `floor` is
/// `FLOOR_FRACTION` of the largest gradient magnitude so coordinates with a
/// negligible gradient do not dominate.
pub const FLOOR_FRACTION: f64 = 1e-3;

pub fn gradcheck<T: Real>(env: &Env<T>, state: &EnvState<T>, actions: &[Vec<T>], eps: T) -> EnvResult<GradcheckReport> {
    let (ret, analytic) = grad_episode_return(env, state, actions)?;
    let numeric = finite_difference(actions, eps, |a| Ok(softgrad_core::autodiff::episode_return(env, state, a)?))?;
    let scale = analytic.iter().chain(&numeric).flatten().fold(0.0f64, |m, g| m.max(g.as_f64().abs()));
    let floor = (FLOOR_FRACTION * scale).max(f64::MIN_POSITIVE);
    let mut coords = Vec::new();
    for (t, (ra, rn)) in analytic.iter().zip(&numeric).enumerate() {
        for (k, (a, n)) in ra.iter().zip(rn).enumerate() {
            let (a, n) = (a.as_f64(), n.as_f64());
            let rel_error = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            coords.push(CoordError { step: t, component: k, analytic: a, numeric: n, rel_error });
        }
    }
    let worst = (0..coords.len()).max_by(|&i, &j| coords[i].rel_error.total_cmp(&coords[j].rel_error)).unwrap_or(0);
    let max_rel_error = coords.get(worst).map_or(0.0, |c| c.rel_error);
    Ok(GradcheckReport { episode_return: ret.as_f64(), coords, max_rel_error, worst })
}

/// Reduced-scale settings used by the gradient checker for each task.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckSetup {
    pub overrides: crate::config::EnvOverrides,
    pub steps: usize,
    pub eps: f64,
}

/// Default reduced-scale setup for `task`. Cloth resting on the Coulomb table
/// is piecewise smooth with very many kinks along a rollout, so its central
/// differences need a much smaller step than the particle tasks.
pub fn default_setup(task: crate::TaskId) -> GradcheckSetup {
    use crate::catalog::Family;
    let mut overrides = crate::config::EnvOverrides::default();
    let (steps, eps) = match task.family() {
        Family::Fluid => {
            overrides.grid_n = Some(32);
            overrides.spacing = Some(0.35);
            overrides.substeps = Some(10);
            overrides.dt = Some(1e-3);
            (5, 1e-7)
        }
        Family::Rope if task == crate::TaskId::WhipRope => (10, 1e-7),
        Family::Rope => (2, 1e-7),
        Family::Cloth => (1, 1e-9),
    };
    GradcheckSetup { overrides, steps, eps }
}

/// Actions to check around: the expert's with a small perturbation for macro
/// tasks, uniform in the central half of the bounds for velocity tasks.
pub fn probe_actions<T: Real>(env: &Env<T>, state: &EnvState<T>, steps: usize, seed: u64) -> EnvResult<Vec<Vec<T>>> {
    use rand::Rng;
    let mut rng = softgrad_core::RngState::from_seed(seed).fold_in(0x6c).stream();
    let (lo, hi) = env.action_bounds();
    let half = T::lit(0.5);
    if env.action_size() == 6 {
        let expert = env.expert_actions(state)?;
        Ok(expert
            .into_iter()
            .take(steps)
            .map(|a| a.into_iter().map(|x| x + T::lit(rng.random_range(-0.01..0.01))).collect())
            .collect())
    } else {
        Ok((0..steps)
            .map(|_| {
                (0..env.action_size())
                    .map(|k| {
                        let u = T::lit(rng.random_range(0.0..1.0));
                        let (a, b) = (lo[k] * half, hi[k] * half);
                        a + (b - a) * u
                    })
                    .collect()
            })
            .collect())
    }
}
