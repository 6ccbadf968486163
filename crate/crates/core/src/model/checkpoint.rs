use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{init_params, BiClstmParams};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FORMAT_VERSION: u32 = 1;

/// Provenance of a trained parameter set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub stop_reason: String,
    pub train_config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: BiClstmParams,
    pub training: Option<TrainingMeta>,
}

/// Parameter values are written as the 16-digit hex of their IEEE-754 bits
/// so a load reproduces them exactly.
#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    seed: u64,
    parameters: Vec<NamedArray>,
    training: Option<TrainingMeta>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: BiClstmParams) -> Self {
        Checkpoint {
            config,
            params,
            training: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut parameters = Vec::new();
        self.params.for_each(|name, t| {
            parameters.push(NamedArray {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t
                    .data()
                    .iter()
                    .map(|v| format!("{:016x}", v.to_bits()))
                    .collect(),
            })
        });
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            seed: self.config.seed,
            parameters,
            training: self.training.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                file.format_version
            )));
        }
        file.config.validate()?;
        let mut params = init_params(&file.config);
        let mut stored = file.parameters.into_iter();
        let mut failure = None;
        params.for_each_mut(|name, slot| {
            if failure.is_some() {
                return;
            }
            match stored.next() {
                Some(arr) if arr.name == name && arr.shape == slot.shape() => {
                    let values: Result<Vec<f64>> = arr
                        .data
                        .iter()
                        .map(|h| {
                            u64::from_str_radix(h, 16).map(f64::from_bits).map_err(|_| {
                                Error::Validation(format!("bad hex value {h:?} in {name}"))
                            })
                        })
                        .collect();
                    match values.and_then(|v| Tensor::new(arr.shape.clone(), v)) {
                        Ok(t) => *slot = t,
                        Err(e) => failure = Some(e),
                    }
                }
                Some(arr) => {
                    failure = Some(Error::Validation(format!(
                        "expected parameter {name} {:?}, found {} {:?}",
                        slot.shape(),
                        arr.name,
                        arr.shape
                    )))
                }
                None => failure = Some(Error::Validation(format!("missing parameter {name}"))),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if stored.next().is_some() {
            return Err(Error::Validation(
                "checkpoint holds more parameters than its config implies".into(),
            ));
        }
        Ok(Checkpoint {
            config: file.config,
            params,
            training: file.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
