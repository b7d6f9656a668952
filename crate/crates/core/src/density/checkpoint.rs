use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{DensityModel, EpochLog, NamedTensor};
use crate::data::ModelSpace;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "fastdad.density";

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    space: ModelSpace,
    schema_fingerprint: String,
    tensors: Vec<NamedTensor>,
    #[serde(default)]
    history: Vec<EpochLog>,
}

impl DensityModel {
    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            config: self.config().clone(),
            space: self.space().clone(),
            schema_fingerprint: self.schema_fingerprint().to_string(),
            tensors: self.tensors(),
            history: self.history().to_vec(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != FORMAT_TAG || ck.version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        DensityModel::from_parts(ck.config, ck.space, ck.schema_fingerprint, ck.tensors, ck.history)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_json(&s)
    }
}
