use softgrad_envs::gradcheck::{default_setup, gradcheck, probe_actions};
use softgrad_envs::*;

fn check(task: TaskId) {
    let setup = default_setup(task);
    let env: Env<f64> = make_env(task, &setup.overrides).unwrap();
    assert!(env.particles() <= 500);
    let (_, s) = env.reset(1).unwrap();
    let actions = probe_actions(&env, &s, setup.steps, 1).unwrap();
    let report = gradcheck(&env, &s, &actions, setup.eps).unwrap();
    let w = &report.coords[report.worst];
    assert!(report.passes(1e-4), "{task}: {:.3e} at step {} component {}", report.max_rel_error, w.step, w.component);
}

#[test]
fn pour_water() {
    check(TaskId::PourWater);
}

#[test]
fn pour_soup() {
    check(TaskId::PourSoup);
}

#[test]
fn push_rope() {
    check(TaskId::PushRope);
}

#[test]
fn whip_rope() {
    check(TaskId::WhipRope);
}

#[test]
fn cloth_tasks() {
    for t in [TaskId::FoldCloth1, TaskId::FoldCloth3, TaskId::FoldTshirt, TaskId::UnfoldCloth1, TaskId::UnfoldCloth3] {
        check(t);
    }
}

#[test]
fn corrupted_adjoint_is_caught() {
    let mut setup = default_setup(TaskId::WhipRope);
    setup.overrides.adjoint_fault = Some(0.01);
    let env: Env<f64> = make_env(TaskId::WhipRope, &setup.overrides).unwrap();
    let (_, s) = env.reset(1).unwrap();
    let actions = probe_actions(&env, &s, 3, 1).unwrap();
    let report = gradcheck(&env, &s, &actions, setup.eps).unwrap();
    assert!(!report.passes(1e-4));
    assert!(report.max_rel_error > 5e-3);
}
