//! Run configuration: a TOML file, overlaid by command-line flags.
//!
//! ```toml
//! task = "push_rope"
//! method = "cem_mpc"
//! seeds = [1, 2, 3]
//! out = "runs/push"
//! precision = "double"
//! workers = 4
//! snapshots = true
//!
//! [env]       # EnvOverrides
//! [cem]       # CemConfig
//! [refine]    # GradRefineConfig
//! [apg]       # ApgConfig
//! [policy]    # PolicyConfig
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use softgrad_core::Precision;
use softgrad_envs::{EnvOverrides, TaskId};
use softgrad_planners::{ApgConfig, CemConfig, GradRefineConfig, PolicyConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CemMpc,
    DiffMpc,
    DiffCemMpc,
    Apg,
    Random,
    ScriptedExpert,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::CemMpc, Method::DiffMpc, Method::DiffCemMpc, Method::Apg, Method::Random, Method::ScriptedExpert];

    pub fn name(self) -> &'static str {
        match self {
            Method::CemMpc => "cem_mpc",
            Method::DiffMpc => "diff_mpc",
            Method::DiffCemMpc => "diff_cem_mpc",
            Method::Apg => "apg",
            Method::Random => "random",
            Method::ScriptedExpert => "scripted_expert",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            format!("unknown method `{s}`; valid methods: {}", Method::ALL.map(|m| m.name()).join(", "))
        })
    }
}

/// Contents of a config file. Every field may be left out.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<String>,
    pub method: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
    pub workers: Option<usize>,
    pub snapshots: Option<bool>,
    pub env: EnvOverrides,
    pub cem: CemConfig,
    pub refine: GradRefineConfig,
    pub apg: ApgConfig,
    pub policy: PolicyConfig,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct FlagOverrides {
    pub task: Option<String>,
    pub method: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
    pub workers: Option<usize>,
}

/// A fully resolved run. Everything except `out` and `workers` is hashed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: TaskId,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    pub snapshots: bool,
    pub env: EnvOverrides,
    pub cem: CemConfig,
    pub refine: GradRefineConfig,
    pub apg: ApgConfig,
    pub policy: PolicyConfig,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

pub fn parse_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(file: FileConfig, flags: FlagOverrides) -> CliResult<Self> {
        let usage = |m: String| CliError::Usage(m);
        let task = flags.task.or(file.task).ok_or_else(|| usage("no task given; use --task or `task` in the config".into()))?;
        let task: TaskId = task.parse().map_err(|e: softgrad_envs::EnvError| usage(e.to_string()))?;
        let method = flags.method.or(file.method).ok_or_else(|| usage("no method given; use --method or `method` in the config".into()))?;
        let method: Method = method.parse().map_err(usage)?;
        let seeds = flags.seeds.or(file.seeds).unwrap_or_else(|| vec![1]);
        if seeds.is_empty() {
            return Err(usage("seed list is empty".into()));
        }
        if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
            return Err(usage("seeds must be distinct".into()));
        }
        let workers = flags.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(usage("workers must be at least 1".into()));
        }
        file.cem.validate().map_err(|e| usage(e.to_string()))?;
        file.refine.validate().map_err(|e| usage(e.to_string()))?;
        softgrad_envs::TaskConfig::with_overrides(task, &file.env).map_err(|e| usage(e.to_string()))?;
        let out = flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(format!("runs/{task}_{method}")));
        Ok(Self {
            task,
            method,
            seeds,
            precision: flags.precision.or(file.precision).unwrap_or_default(),
            snapshots: file.snapshots.unwrap_or(false),
            env: file.env,
            cem: file.cem,
            refine: file.refine,
            apg: file.apg,
            policy: file.policy,
            out,
            workers,
        })
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
