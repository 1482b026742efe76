//! Per-command config documents. Paths inside a config are relative to the
//! config file; every run writes the resolved document next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rowgraph::dfs::{DEFAULT_MAX_DEPTH, DEFAULT_MAX_FEATURES};
use rowgraph::graph::ExtractorConfig;
use rowgraph::rdb::StorageFormat;
use rowgraph::sampler::{FanoutPlan, DEFAULT_MAX_HOPS};
use rowgraph::task::{Split, TaskSpec};
use rowgraph::transform::TransformStep;

use crate::error::{CliError, Result};

pub const SNAPSHOT_FILE: &str = "resolved-config.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformCommand {
    /// Metadata file of the input dataset.
    pub dataset: PathBuf,
    pub steps: Vec<TransformStep>,
    #[serde(default)]
    pub format: StorageFormat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphCommand {
    pub dataset: PathBuf,
    #[serde(default)]
    pub extractor: ExtractorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfsCommand {
    pub dataset: PathBuf,
    pub target_table: String,
    #[serde(default)]
    pub depth: usize,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_max_features")]
    pub max_features: usize,
    /// `table.column` entries never aggregated, typically the label.
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Datetime column of the target table holding each row's cutoff.
    /// Defaults to the target's time column; untimed targets get none.
    #[serde(default)]
    pub cutoff_column: Option<String>,
    #[serde(default)]
    pub emit_sql: Option<PathBuf>,
    #[serde(default)]
    pub format: StorageFormat,
}

fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

fn default_max_features() -> usize {
    DEFAULT_MAX_FEATURES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCommand {
    pub dataset: PathBuf,
    /// Directory written by `construct-graph`.
    pub graph: PathBuf,
    pub task: TaskSpec,
    pub batch_size: usize,
    pub plan: FanoutPlan,
    #[serde(default = "default_max_hops")]
    pub max_hops: usize,
}

fn default_max_hops() -> usize {
    DEFAULT_MAX_HOPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateCommand {
    pub dataset: PathBuf,
    pub task: TaskSpec,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default)]
    pub predictions: Option<PathBuf>,
}

fn default_split() -> Split {
    Split::Test
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCommand {
    pub graph: PathBuf,
    /// A batch directory, or the output of `sample` with one per split.
    pub batches: PathBuf,
}

/// Reads a YAML or JSON config and rebases its relative paths onto the
/// config file's directory.
pub fn load<T: DeserializeOwned + Rebase>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    let mut cfg: T = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        serde_yaml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    cfg.rebase(path.parent().unwrap_or(Path::new("")));
    Ok(cfg)
}

pub fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub trait Rebase {
    fn rebase(&mut self, base: &Path);
}

impl Rebase for TransformCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
    }
}

impl Rebase for GraphCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
    }
}

impl Rebase for DfsCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
        if let Some(p) = &mut self.emit_sql {
            rebase(base, p);
        }
    }
}

impl Rebase for SampleCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
        rebase(base, &mut self.graph);
    }
}

impl Rebase for EvaluateCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.dataset);
        if let Some(p) = &mut self.predictions {
            rebase(base, p);
        }
    }
}

impl Rebase for AuditCommand {
    fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.graph);
        rebase(base, &mut self.batches);
    }
}

#[derive(Serialize)]
struct Snapshot<'a, T> {
    command: &'a str,
    seed: u64,
    config: &'a T,
}

pub fn write_snapshot<T: Serialize>(out: &Path, command: &str, seed: u64, config: &T) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join(SNAPSHOT_FILE);
    let mut json = serde_json::to_vec_pretty(&Snapshot { command, seed, config }).expect("config serializes");
    json.push(b'\n');
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))
}
