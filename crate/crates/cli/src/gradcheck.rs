//! `softgrad gradcheck`: analytic episode-return gradients against central
//! differences at reduced scale, always in double precision.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use softgrad_envs::gradcheck::{default_setup, gradcheck, probe_actions, GradcheckReport};
use softgrad_envs::{make_env, Env, TaskId};

use crate::error::{io_err, CliError, CliResult};

#[derive(Clone, Debug, Default)]
pub struct GradcheckOptions {
    /// Control steps; the task's reduced-scale default when unset.
    pub steps: Option<usize>,
    pub eps: Option<f64>,
    pub seed: u64,
    /// Relative error injected into the adjoint, for negative controls.
    pub adjoint_fault: Option<f64>,
}

pub fn check_task(task: TaskId, opts: &GradcheckOptions) -> CliResult<GradcheckReport> {
    let mut setup = default_setup(task);
    if let Some(f) = opts.adjoint_fault {
        setup.overrides.adjoint_fault = Some(f);
    }
    let env: Env<f64> = make_env(task, &setup.overrides).map_err(|e| CliError::Usage(e.to_string()))?;
    let steps = opts.steps.unwrap_or(setup.steps);
    if steps == 0 || steps > env.horizon() {
        return Err(CliError::Usage(format!("{task}: steps must lie in [1, {}]", env.horizon())));
    }
    let fail = |e: softgrad_envs::EnvError| CliError::Failed(format!("{task}: {e}"));
    let (_, state) = env.reset(opts.seed).map_err(fail)?;
    let actions = probe_actions(&env, &state, steps, opts.seed).map_err(fail)?;
    gradcheck(&env, &state, &actions, opts.eps.unwrap_or(setup.eps)).map_err(fail)
}

pub fn error_table(report: &GradcheckReport) -> String {
    let mut s = String::from("step,component,analytic,numeric,rel_error\n");
    for c in &report.coords {
        writeln!(s, "{},{},{:e},{:e},{:e}", c.step, c.component, c.analytic, c.numeric, c.rel_error).expect("string write");
    }
    s
}

/// Checks every task in `tasks`, writing `gradcheck_<task>.csv` under `out`
/// when given. Fails if any task exceeds `tolerance`.
pub fn cmd_gradcheck(tasks: &[TaskId], tolerance: f64, opts: &GradcheckOptions, out: Option<&Path>) -> CliResult<Vec<(TaskId, GradcheckReport)>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut reports = Vec::with_capacity(tasks.len());
    let mut worst = Vec::new();
    for &task in tasks {
        let r = check_task(task, opts)?;
        let w = &r.coords[r.worst];
        let verdict = if r.passes(tolerance) { "pass" } else { "FAIL" };
        crate::say(format!(
            "{task:14} {verdict} max_rel_error={:.3e} worst: step {} component {} analytic {:.6e} numeric {:.6e}",
            r.max_rel_error, w.step, w.component, w.analytic, w.numeric
        ));
        if let Some(dir) = out {
            let p = dir.join(format!("gradcheck_{task}.csv"));
            fs::write(&p, error_table(&r)).map_err(|e| io_err(&p, e))?;
        }
        if !r.passes(tolerance) {
            worst.push(format!("{task}: {:.3e} > {tolerance:e} at step {} component {}", r.max_rel_error, w.step, w.component));
        }
        reports.push((task, r));
    }
    if worst.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Failed(format!("gradient check failed\n{}", worst.join("\n"))))
    }
}
