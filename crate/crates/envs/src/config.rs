//! Per-task settings and user overrides.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::catalog::{ActionSpace, Family, TaskId};
use crate::error::{EnvError, EnvResult};

/// Everything that defines a task instance. Lengths are in unit-cube
/// workspace units, times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskId,
    pub horizon: usize,
    pub action_space: ActionSpace,
    pub lambda: f64,
    pub aux_reward: bool,
    pub grid_n: usize,
    pub dt: f64,
    /// Substeps per low-level control step.
    pub substeps: usize,
    /// Particle sampling spacing in grid cells.
    pub spacing: f64,
    pub full_grid: bool,
    pub gravity: [f64; 3],
    pub table_z: f64,
    /// Low-level action bounds: `|v_i| ≤ v_max`, `|w| ≤ w_max`.
    pub v_max: f64,
    pub w_max: f64,
    pub rope_length: f64,
    pub rope_radius: f64,
    pub rope_youngs: f64,
    pub cloth_res: usize,
    pub cloth_spacing: f64,
    pub cloth_damping: f64,
    /// Cloth step as a fraction of the stability bound.
    pub cloth_dt_fraction: f64,
    pub push_height: f64,
    pub transit_height: f64,
    /// Duration of each macro phase.
    pub phase_durations: Vec<f64>,
    pub grasp_radius: f64,
    pub snap_radius: f64,
    /// Pull macro start points that miss the object back onto it.
    pub contact_adjust: bool,
    /// Relative error injected into the action adjoint. Only for exercising
    /// the gradient checker.
    pub adjoint_fault: f64,
}

/// Optional replacements for [`TaskConfig`] defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvOverrides {
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub substeps: Option<usize>,
    pub spacing: Option<f64>,
    pub lambda: Option<f64>,
    pub aux_reward: Option<bool>,
    pub full_grid: Option<bool>,
    pub gravity: Option<[f64; 3]>,
    pub rope_length: Option<f64>,
    pub cloth_res: Option<usize>,
    pub phase_durations: Option<Vec<f64>>,
    pub adjoint_fault: Option<f64>,
    pub contact_adjust: Option<bool>,
}

impl TaskConfig {
    pub fn new(task: TaskId) -> Self {
        let family = task.family();
        let cloth_spacing = 0.02;
        let phase_durations = match (family, task.action_space()) {
            (Family::Rope, ActionSpace::Macro6) => vec![0.04, 0.06, 0.3, 0.06],
            (Family::Cloth, _) => vec![0.1, 0.1, 0.15, 0.3, 0.15, 0.3],
            _ => Vec::new(),
        };
        let (dt, substeps) = match family {
            Family::Fluid => (4e-4, 50),
            Family::Rope => (2e-3, 10),
            Family::Cloth => (0.0, 1),
        };
        Self {
            task,
            horizon: task.horizon(),
            action_space: task.action_space(),
            lambda: if task.corresponded() { 5.0 } else { 20.0 },
            aux_reward: false,
            grid_n: 64,
            dt,
            substeps,
            spacing: 0.5,
            full_grid: false,
            gravity: [0.0, 0.0, -9.8],
            table_z: 0.1,
            v_max: 1.0,
            w_max: PI,
            rope_length: 0.42,
            rope_radius: 0.012,
            rope_youngs: 10.0,
            cloth_res: 16,
            cloth_spacing,
            cloth_damping: 1.0,
            cloth_dt_fraction: 0.1,
            push_height: 0.02,
            transit_height: 0.1,
            phase_durations,
            grasp_radius: 2.0 * cloth_spacing,
            snap_radius: if family == Family::Cloth { 2.0 * cloth_spacing } else { 0.03 },
            contact_adjust: true,
            adjoint_fault: 0.0,
        }
    }

    pub fn with_overrides(task: TaskId, o: &EnvOverrides) -> EnvResult<Self> {
        let mut c = Self::new(task);
        macro_rules! take {
            ($($f:ident),*) => {
                $(if let Some(v) = o.$f.clone() {
                    c.$f = v;
                })*
            };
        }
        take!(grid_n, dt, substeps, spacing, lambda, aux_reward, full_grid, gravity, rope_length, cloth_res, phase_durations, adjoint_fault, contact_adjust);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> EnvResult<()> {
        let bad = |m: String| Err(EnvError::Override(m));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.grid_n < 16 {
            return bad(format!("grid_n {} is too small", self.grid_n));
        }
        if !(self.spacing > 0.0 && self.spacing <= 1.0) {
            return bad(format!("particle spacing {} must lie in (0, 1] cells", self.spacing));
        }
        if self.task.family() != crate::catalog::Family::Cloth && !(self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        if self.cloth_res < 2 {
            return bad("cloth_res must be at least 2".into());
        }
        if self.action_space == ActionSpace::Macro6 {
            let want = if self.task.family() == Family::Cloth { 6 } else { 4 };
            if self.phase_durations.len() != want || self.phase_durations.iter().any(|d| !(*d > 0.0)) {
                return bad(format!("{} needs {want} positive phase durations", self.task));
            }
        }
        Ok(())
    }
}
