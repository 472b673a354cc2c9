//! `softgrad run`: plans or trains, then replays every seed and writes one
//! record file per seed plus a summary.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use softgrad_core::mpm::snapshot;
use softgrad_core::{Precision, Real, RngState};
use softgrad_envs::{make_env, Dynamics, Env, EnvState};
use softgrad_planners::{
    apg_train, cem_mpc, controller_actions, diff_cem_mpc, diff_mpc, random_actions, Controller, Evaluation, PlanOutcome, PolicyParams, Task,
};

use crate::config::{Method, RunConfig};
use crate::error::{io_err, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectorPose {
    pub position: [f64; 3],
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub file: String,
    pub block: usize,
}

/// One control step of a replayed episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub action: Vec<f64>,
    pub reward: f64,
    pub r_gt: f64,
    pub effector: EffectorPose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<SnapshotRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub task: String,
    pub method: String,
    pub precision: Precision,
    pub n_seeds: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub scores: Vec<SeedScore>,
    pub config_hash: String,
}

pub const SUMMARY: &str = "summary.json";
pub const TIMING: &str = "timing.json";

pub fn record_file(seed: u64) -> String {
    format!("seed_{seed}.jsonl")
}

fn snapshot_file(seed: u64) -> String {
    format!("seed_{seed}.snap")
}

fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> CliResult<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("rows serialize");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut buf = serde_json::to_vec_pretty(value).expect("value serializes");
    buf.push(b'\n');
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn failed(seed: u64) -> impl Fn(String) -> CliError {
    move |m| CliError::Failed(format!("seed {seed}: {m}"))
}

fn snapshot_block<T: Real>(d: &Dynamics<T>, frame: u32) -> Vec<u8> {
    match d {
        Dynamics::Mpm(s) => snapshot::encode(frame, &s.material, &s.x, &s.v),
        Dynamics::Cloth(m) => snapshot::encode(frame, &vec![snapshot::CLOTH_MATERIAL; m.len()], &m.x, &m.v),
    }
}

/// Refuses to overwrite a run made with a different config.
fn check_resume(out: &Path, hash: &str) -> CliResult<()> {
    let path = out.join(SUMMARY);
    let Ok(text) = fs::read_to_string(&path) else { return Ok(()) };
    let old: ReportSummary =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: unreadable summary: {e}", path.display())))?;
    if old.config_hash != hash {
        return Err(CliError::Usage(format!(
            "{} holds a run with config hash {}, this config hashes to {hash}; use another --out",
            out.display(),
            old.config_hash
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    best_score: f64,
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    mean_score: f64,
    grad_norm: f64,
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    train_seconds: f64,
    per_seed_seconds: Vec<SeedScore>,
}

/// Plans (or looks up) the action sequence for one seed.
fn plan<T: Real>(cfg: &RunConfig, env: &Env<T>, state: &EnvState<T>, policy: Option<&PolicyParams<T>>, seed: u64) -> CliResult<(Vec<Vec<T>>, Vec<T>)> {
    let rng = RngState::from_seed(seed).fold_in(0x706c_616e);
    let f = failed(seed);
    let outcome = |r: Result<PlanOutcome<T>, softgrad_planners::PlanError>| r.map(|o| (o.actions, o.trace)).map_err(|e| f(e.to_string()));
    match cfg.method {
        Method::CemMpc => outcome(cem_mpc(env, state, &cfg.cem, rng)),
        Method::DiffMpc => outcome(diff_mpc(env, state, &random_actions(env, rng), &cfg.refine)),
        Method::DiffCemMpc => outcome(diff_cem_mpc(env, state, &cfg.cem, &cfg.refine, rng)),
        Method::Random => Ok((random_actions(env, rng), Vec::new())),
        Method::ScriptedExpert => Ok((env.expert_actions(state).map_err(|e| f(e.to_string()))?, Vec::new())),
        Method::Apg => {
            let p = policy.expect("policy trained before seeds run");
            let a = controller_actions(env, state, &Controller::Policy(p), seed).map_err(|e| f(e.to_string()))?;
            Ok((a, Vec::new()))
        }
    }
}

fn run_seed<T: Real>(cfg: &RunConfig, env: &Env<T>, policy: Option<&PolicyParams<T>>, seed: u64) -> CliResult<(f64, f64)> {
    let t0 = Instant::now();
    let f = failed(seed);
    let (_, state) = env.reset(seed).map_err(|e| f(e.to_string()))?;
    let (actions, trace) = plan(cfg, env, &state, policy, seed)?;
    if !trace.is_empty() {
        let rows: Vec<TraceRow> = trace.iter().enumerate().map(|(i, s)| TraceRow { iteration: i, best_score: s.as_f64() }).collect();
        write_jsonl(&cfg.out.join(format!("trace_{seed}.jsonl")), &rows)?;
    }
    let mut records = Vec::with_capacity(actions.len());
    let mut snaps = Vec::new();
    let mut s = state;
    for (t, a) in actions.iter().enumerate() {
        let r = env.step_diff(&s, a).map_err(|e| f(format!("step {t}: {e}")))?;
        s = r.state;
        let snapshot = cfg.snapshots.then(|| {
            snapshot::append_block(&mut snaps, &snapshot_block(&s.dynamics, t as u32));
            SnapshotRef { file: snapshot_file(seed), block: t }
        });
        records.push(TrajectoryRecord {
            t,
            action: a.iter().map(|x| x.as_f64()).collect(),
            reward: r.reward.as_f64(),
            r_gt: r.info.r_gt.as_f64(),
            effector: EffectorPose { position: s.effector.position.0.map(|x| x.as_f64()), angle: s.effector.angle.as_f64() },
            snapshot,
        });
    }
    write_jsonl(&cfg.out.join(record_file(seed)), &records)?;
    if cfg.snapshots {
        let p = cfg.out.join(snapshot_file(seed));
        fs::write(&p, snaps).map_err(|e| io_err(&p, e))?;
    }
    let score = env.score(&s).map_err(|e| f(e.to_string()))?.as_f64();
    Ok((score, t0.elapsed().as_secs_f64()))
}

fn run_typed<T: Real>(cfg: &RunConfig) -> CliResult<ReportSummary> {
    let t0 = Instant::now();
    let hash = cfg.hash();
    check_resume(&cfg.out, &hash)?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    let env: Env<T> = make_env(cfg.task, &cfg.env).map_err(|e| CliError::Usage(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| CliError::Failed(e.to_string()))?;
    let policy = match cfg.method {
        Method::Apg => {
            let (lo, hi) = env.bounds();
            let init = PolicyParams::new(env.obs_size(), &lo, &hi, &cfg.policy, RngState::from_seed(cfg.policy.seed));
            let (p, trace) = pool.install(|| apg_train(&env, init, &cfg.apg)).map_err(|e| CliError::Failed(e.to_string()))?;
            let rows: Vec<EpochRow> = trace.iter().map(|e| EpochRow { epoch: e.epoch, mean_score: e.mean_score, grad_norm: e.grad_norm }).collect();
            write_jsonl(&cfg.out.join("train.jsonl"), &rows)?;
            Some(p)
        }
        _ => None,
    };
    let train_seconds = t0.elapsed().as_secs_f64();
    let results: Vec<CliResult<(f64, f64)>> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, &env, policy.as_ref(), s)).collect());
    let mut scores = Vec::with_capacity(results.len());
    let mut per_seed = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (&seed, r) in cfg.seeds.iter().zip(results) {
        match r {
            Ok((score, secs)) => {
                scores.push(SeedScore { seed, score });
                per_seed.push(SeedScore { seed, score: secs });
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Failed(errors.join("\n")));
    }
    let ev = Evaluation::from_scores(scores.iter().map(|s| s.score).collect());
    let summary = ReportSummary {
        task: cfg.task.to_string(),
        method: cfg.method.to_string(),
        precision: cfg.precision,
        n_seeds: cfg.seeds.len(),
        mean: ev.mean,
        standard_error: ev.standard_error,
        scores,
        config_hash: hash,
    };
    write_json(&cfg.out.join(SUMMARY), &summary)?;
    let timing = Timing { total_seconds: t0.elapsed().as_secs_f64(), train_seconds, per_seed_seconds: per_seed };
    write_json(&cfg.out.join(TIMING), &timing)?;
    Ok(summary)
}

/// Runs every seed of `cfg` and writes its outputs under `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<ReportSummary> {
    match cfg.precision {
        Precision::Double => run_typed::<f64>(cfg),
        Precision::Single => run_typed::<f32>(cfg),
    }
}

/// Reads the per-step records of one seed.
pub fn read_records(path: &Path) -> CliResult<Vec<TrajectoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}
