//! TOML run configuration with `key.path=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::PlantedPairConfig;
use crate::error::{Error, Result};
use crate::graphdata::{DatasetPaths, SynthConfig};
use crate::hsc::Channel;
use crate::mcan::ModelConfig;
use crate::trainer::TrainConfig;

/// File locations. Relative paths are resolved against the directory of
/// the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding `graph.json`, `series.csv` and `context.csv`;
    /// defaults to `output_dir`.
    pub data_dir: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub context: Option<PathBuf>,
    /// Model file; defaults to `<output_dir>/model.json`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateConfig {
    pub road_a: usize,
    pub road_b: usize,
    pub measurements: Vec<Channel>,
    /// Number of earlier days in each same-slot window.
    pub days: usize,
    pub start_minute: u64,
    pub end_minute: Option<u64>,
    /// Analyse a generated planted pair instead of the dataset files.
    pub planted: Option<PlantedPairConfig>,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            road_a: 0,
            road_b: 1,
            measurements: Channel::ALL.to_vec(),
            days: 7,
            start_minute: 0,
            end_minute: None,
            planted: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictSplit {
    /// The held-out fold of the training configuration.
    #[default]
    Test,
    /// Every eligible sample.
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub split: PredictSplit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub generate: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub correlate: CorrelateConfig,
    pub predict: PredictConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Top-level tables and keys present in the source text, as dotted paths.
    #[serde(skip)]
    pub explicit_keys: Vec<String>,
}

fn collect_keys(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    if let toml::Value::Table(t) = v {
        for (k, child) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            out.push(key.clone());
            collect_keys(&key, child, out);
        }
    }
}

/// Set `a.b.c = value` inside a TOML table, creating tables on the way.
/// The value is parsed as a TOML literal and taken as a string otherwise.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{assignment}` is not of the form key=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::invalid(format!("override `{assignment}` has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn config_error(e: toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string());
    Error::config(field, msg)
}

impl RunConfig {
    /// Parse TOML text and apply overrides in order.
    pub fn from_toml(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(config_error)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut explicit_keys = Vec::new();
        collect_keys("", &toml::Value::Table(table.clone()), &mut explicit_keys);
        let mut cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_error)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.explicit_keys = explicit_keys;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, overrides, &base)
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.explicit_keys.iter().any(|k| k == key)
    }

    /// Fail with the field name unless `key` was given explicitly.
    pub fn require(&self, key: &str) -> Result<()> {
        if self.has_key(key) {
            Ok(())
        } else {
            Err(Error::config(key, "missing required field"))
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.paths.output_dir.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn dataset_paths(&self) -> DatasetPaths {
        let dir = self
            .paths
            .data_dir
            .as_deref()
            .map(|d| self.resolve(d))
            .unwrap_or_else(|| self.output_dir());
        let defaults = DatasetPaths::in_dir(&dir);
        let pick = |p: &Option<PathBuf>, d: PathBuf| p.as_deref().map(|p| self.resolve(p)).unwrap_or(d);
        DatasetPaths {
            graph: pick(&self.paths.graph, defaults.graph),
            series: pick(&self.paths.series, defaults.series),
            context: pick(&self.paths.context, defaults.context),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .as_deref()
            .map(|p| self.resolve(p))
            .unwrap_or_else(|| self.output_dir().join("model.json"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.generate.validate()
    }
}
