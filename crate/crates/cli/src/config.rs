//! Strict JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use deepgd::direct::DescentConfig;
use deepgd::graph::{synthetic_dataset, SyntheticSpec};
use deepgd::model::TrainConfig;
use deepgd::objective::Strategy;
use deepgd::{Criterion, Graph};
use serde::Deserialize;

use crate::io::read_graph;
use crate::ConfigError;

/// Environment variable that overrides the output directory of every command.
pub const OUT_DIR_ENV: &str = "DEEPGD_OUT_DIR";

/// Where graphs come from. Exactly one key.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Every `.txt`, `.edges` or `.graphml` file in a directory, by file name.
    Dir(PathBuf),
    Files(Vec<PathBuf>),
    Synthetic(SyntheticSpec),
}

/// A strategy either by name with default parameters or in full.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StrategyRef {
    Name(String),
    Full(Strategy),
}

impl StrategyRef {
    pub fn resolve(&self) -> anyhow::Result<Strategy> {
        match self {
            StrategyRef::Name(name) => Ok(name.parse().map_err(ConfigError::from)?),
            StrategyRef::Full(s) => Ok(*s),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Direct,
    Model,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSection {
    pub pair: (Criterion, Criterion),
    pub strategies: Vec<StrategyRef>,
    /// `(gamma_a, gamma_b)` shares, each pair summing to 1.
    pub grid: Vec<(f64, f64)>,
    #[serde(default = "default_engine")]
    pub engine: EngineKind,
}

fn default_engine() -> EngineKind {
    EngineKind::Direct
}

/// Top-level document for `train` and `pareto`.
///
/// `seed` is authoritative: it replaces the seed fields of the `train` and
/// `descent` sections. `train.strategy` may also be given as a plain name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetSource,
    /// Train/validation fractions; the rest is the test split.
    #[serde(default = "default_split")]
    pub split: (f64, f64),
    #[serde(default)]
    pub train: Option<serde_json::Value>,
    #[serde(default)]
    pub descent: Option<serde_json::Value>,
    #[serde(default)]
    pub pareto: Option<ParetoSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_split() -> (f64, f64) {
    (0.8, 0.1)
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let (a, b) = cfg.split;
        if !(a > 0.0 && b >= 0.0 && a + b <= 1.0) {
            return Err(ConfigError(format!("split fractions ({a}, {b}) are out of range")).into());
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        out_dir_override().unwrap_or_else(|| self.out_dir.clone())
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg: TrainConfig = parse_section(self.train.as_ref(), "train")?;
        cfg.seed = self.seed;
        cfg.validate().map_err(ConfigError::from)?;
        Ok(cfg)
    }

    pub fn descent_config(&self) -> anyhow::Result<DescentConfig> {
        let mut cfg: DescentConfig = parse_section(self.descent.as_ref(), "descent")?;
        cfg.seed = self.seed;
        cfg.validate().map_err(ConfigError::from)?;
        Ok(cfg)
    }

    pub fn load_dataset(&self) -> anyhow::Result<Vec<Graph>> {
        load_dataset(&self.dataset, self.seed)
    }
}

/// Section objects may give `strategy` as a bare name.
fn parse_section<T: serde::de::DeserializeOwned + Default>(
    value: Option<&serde_json::Value>,
    name: &str,
) -> anyhow::Result<T> {
    let Some(value) = value else { return Ok(T::default()) };
    let mut value = value.clone();
    if let Some(s) = value.get("strategy").and_then(|s| s.as_str()) {
        let strategy: Strategy = s.parse().map_err(ConfigError::from)?;
        value["strategy"] = serde_json::to_value(strategy)?;
    }
    Ok(serde_json::from_value(value).map_err(|e| ConfigError(format!("section {name}: {e}")))?)
}

pub fn out_dir_override() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn load_dataset(source: &DatasetSource, seed: u64) -> anyhow::Result<Vec<Graph>> {
    let graphs = match source {
        DatasetSource::Synthetic(spec) => synthetic_dataset(spec, seed).map_err(ConfigError::from)?,
        DatasetSource::Files(files) => files.iter().map(|p| read_graph(p)).collect::<anyhow::Result<_>>()?,
        DatasetSource::Dir(dir) => list_graph_files(dir)?.iter().map(|p| read_graph(p)).collect::<anyhow::Result<_>>()?,
    };
    if graphs.is_empty() {
        bail!("dataset is empty");
    }
    Ok(graphs)
}

/// Graph files in a directory, sorted by file name.
pub fn list_graph_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading dataset directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "edges" | "graphml"))
        })
        .collect();
    files.sort();
    Ok(files)
}
