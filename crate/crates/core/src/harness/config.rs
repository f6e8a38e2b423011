//! Run configuration. Every section and key is optional in the file;
//! missing values take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::DEFAULT_DEV_FRACTION;
use super::remote::RemoteConfig;
use crate::diagnosis::CalibrationConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{ConsultConfig, TrainConfig};
use crate::policy::NetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub diseases: usize,
    pub symptoms: usize,
    pub sharpness: f64,
    pub records: usize,
    pub eval_records: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            diseases: 6,
            symptoms: 20,
            sharpness: 0.9,
            records: 500,
            eval_records: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory that `--dataset NAME` resolves against.
    pub root: String,
    pub dev_fraction: f64,
    /// Records shorter than this are padded before calibration.
    pub augment_min_len: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: "data".into(),
            dev_fraction: DEFAULT_DEV_FRACTION,
            augment_min_len: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub world: WorldConfig,
    pub calibration: CalibrationConfig,
    pub network: NetConfig,
    pub training: TrainConfig,
    pub consult: ConsultConfig,
    pub remote: RemoteConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short digest of the fully resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}
