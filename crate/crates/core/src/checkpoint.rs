//! Versioned JSON checkpoints of the model, optimizer and prototypes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::losses::PrototypeBank;
use crate::model::ModelParams;
use crate::optim::AdamState;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub class_names: Vec<String>,
    pub params: ModelParams,
    pub adam: AdamState,
    pub prototypes: PrototypeBank,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(
                "checkpoint version",
                format!("{} (this build reads {CHECKPOINT_VERSION})", self.version),
            ));
        }
        self.params.validate()?;
        if self.class_names.len() != self.params.classes {
            return Err(Error::Shape(format!(
                "{} class names for a {}-class model",
                self.class_names.len(),
                self.params.classes
            )));
        }
        if self.adam.m.len() != self.params.len() || self.adam.v.len() != self.params.len() {
            return Err(Error::Shape("optimizer moments do not match parameters".into()));
        }
        if self.prototypes.classes() != self.params.classes || self.prototypes.dims() != self.params.dims {
            return Err(Error::Shape("prototypes do not match the model".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json("checkpoint", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        ck.validate()?;
        Ok(ck)
    }
}
