use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Param;
use crate::error::{Error, Result};
use crate::trainer::Normalization;

use super::{Mcan, ModelConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Self-describing model file: configuration, named parameters and the
/// normalization the model was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub normalization: Normalization,
    pub params: Vec<Param>,
}

impl Checkpoint {
    pub fn new(model: &Mcan, normalization: &Normalization) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            normalization: normalization.clone(),
            params: model.store.params().to_vec(),
        }
    }

    /// Rebuild the model; every stored parameter must match by name and shape.
    pub fn model(&self) -> Result<Mcan> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut model = Mcan::new(&self.config, 0)?;
        model.store.load_values(&self.params)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
