use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use vidsolve_core::ops::{Degradation, OperatorSpec, TaskSpec};
use vidsolve_core::pipeline::SolverConfig;
use vidsolve_core::Shape;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command and get the same output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub input: PathBuf,
    /// Output role (`measurement`, `reconstruction`, `frames`, ...) to path.
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: u64,
    #[serde(default)]
    pub task: Option<TaskSpec>,
    /// Operator descriptor and the clean-video shape it acts on.
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub input_shape: Option<[usize; 4]>,
    #[serde(default)]
    pub config: Option<SolverConfig>,
    #[serde(default)]
    pub pre_restorer: Option<String>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    pub elapsed_ms: f64,
}

impl RunManifest {
    pub fn new(command: &str, input: &Path, seed: u64) -> Self {
        RunManifest {
            version: format!("vidsolve {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            input: input.to_path_buf(),
            outputs: BTreeMap::new(),
            seed,
            task: None,
            operator: None,
            input_shape: None,
            config: None,
            pre_restorer: None,
            reference: None,
            elapsed_ms: 0.0,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("--manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("--manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    /// The recorded operator, rebuilt against the recorded input shape.
    pub fn degradation(&self) -> CliResult<Degradation> {
        let (Some(op), Some([n, c, h, w])) = (&self.operator, self.input_shape) else {
            return Err(CliError::config(format!(
                "manifest from `{}` has no operator descriptor",
                self.command
            )));
        };
        Ok(op.build(Shape::new(n, c, h, w))?)
    }
}
