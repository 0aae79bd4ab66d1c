//! TOML run configuration.
//!
//! ```toml
//! [solver]      # SolverConfig fields: steps, tau_frac, lambda_lpf, cg_steps,
//!               # eta, seed, schedule, denoiser, codec, range, workers
//! [task]        # TaskSpec parameters: blur_kernel, blur_sigma, sr_factor,
//!               # mask_rate, mask_per_frame, window, temporal_first
//! [remote]      # address, timeout_ms, pool_size
//! ```
//!
//! Values are layered: built-in defaults, then a manifest snapshot, then the
//! file, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};
use vidsolve_core::ops::TaskSpec;
use vidsolve_core::pipeline::SolverConfig;

const SECTIONS: [&str; 3] = ["solver", "task", "remote"];
const TASK_KEYS: [&str; 7] = [
    "blur_kernel",
    "blur_sigma",
    "sr_factor",
    "mask_rate",
    "mask_per_frame",
    "window",
    "temporal_first",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSection {
    pub address: Option<String>,
    pub timeout_ms: u64,
    /// Defaults to the worker count.
    pub pool_size: Option<usize>,
}

impl Default for RemoteSection {
    fn default() -> Self {
        RemoteSection {
            address: None,
            timeout_ms: 30_000,
            pool_size: None,
        }
    }
}

/// Parsed file, kept as raw tables so it can be layered over other values.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    pub solver: Table,
    pub task: Table,
    pub remote: RemoteSection,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("--config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(format!("--config {}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        if let Some(key) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(CliError::config(format!(
                "unknown section [{key}], expected one of {SECTIONS:?}"
            )));
        }
        let mut take = |name: &str| match root.remove(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t),
            Some(_) => Err(CliError::config(format!("[{name}] must be a table"))),
        };
        let solver = take("solver")?;
        let task = take("task")?;
        let remote = Value::Table(take("remote")?)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("[remote]: {e}")))?;
        check_keys("solver", &solver, &solver_keys())?;
        check_keys("task", &task, &TASK_KEYS)?;
        Ok(ConfigFile {
            solver,
            task,
            remote,
        })
    }
}

fn solver_keys() -> Vec<String> {
    let full = SolverConfig {
        workers: Some(1),
        ..Default::default()
    };
    match Value::try_from(full) {
        Ok(Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn check_keys<S: AsRef<str>>(section: &str, table: &Table, known: &[S]) -> CliResult<()> {
    match table
        .keys()
        .find(|k| !known.iter().any(|n| n.as_ref() == k.as_str()))
    {
        Some(k) => Err(CliError::config(format!(
            "unknown key {k:?} in [{section}]"
        ))),
        None => Ok(()),
    }
}

/// `base` with every key of `over` replaced.
pub fn layer<T: Serialize + DeserializeOwned>(
    base: &T,
    over: &Table,
    section: &str,
) -> CliResult<T> {
    let mut merged = match Value::try_from(base) {
        Ok(Value::Table(t)) => t,
        _ => {
            return Err(CliError::failure(format!(
                "[{section}] does not serialize as a table"
            )))
        }
    };
    for (k, v) in over {
        merged.insert(k.clone(), v.clone());
    }
    Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(format!("[{section}]: {e}")))
}

pub fn layer_solver(base: &SolverConfig, over: &Table) -> CliResult<SolverConfig> {
    let cfg: SolverConfig = layer(base, over, "solver")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn layer_task(base: &TaskSpec, over: &Table) -> CliResult<TaskSpec> {
    layer(base, over, "task")
}
