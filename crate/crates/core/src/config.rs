//! The run configuration document shared by every command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densify::ProjectionConfig;
use crate::error::{Error, Result};
use crate::eval::{BenchConfig, EvalConfig};
use crate::model::ArchConfig;
use crate::sampling::SamplingConfig;
use crate::training::TrainConfig;

/// Input locations. Command-line flags override these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory of OFF/OBJ meshes for `sample`.
    pub meshes: Option<PathBuf>,
    /// Build a synthetic corpus of this many analytic shapes instead of reading meshes.
    pub analytic_shapes: Option<usize>,
    /// Archive directory written by `sample`.
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Sparse cloud or mesh to densify.
    pub input: Option<PathBuf>,
}

/// Every module's settings in one JSON document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Copied into every module seed when the config is resolved.
    pub seed: u64,
    pub sampling: SamplingConfig,
    pub arch: ArchConfig,
    pub training: TrainConfig,
    pub projection: ProjectionConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sampling: SamplingConfig::default(),
            arch: ArchConfig::lightndf(32),
            training: TrainConfig::default(),
            projection: ProjectionConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Applies the global seed everywhere and validates the result.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        let s = self.seed;
        self.training.seed = s;
        self.projection.seed = s;
        self.eval.seed = s;
        self.bench.seed = s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.arch.validate()?;
        if self.arch.resolution != self.sampling.resolution {
            return Err(Error::config(format!(
                "arch.resolution {} differs from sampling.resolution {}",
                self.arch.resolution, self.sampling.resolution
            )));
        }
        if (self.training.delta - self.sampling.delta).abs() > 0.0 {
            return Err(Error::config("training.delta must equal sampling.delta"));
        }
        self.training.validate()?;
        self.projection.validate()?;
        self.eval.validate()?;
        if self.paths.analytic_shapes == Some(0) {
            return Err(Error::config("paths.analytic_shapes must be ≥ 1 when set"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the resolved config as `config.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join("config.json");
        fs::write(&path, self.to_json() + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}
