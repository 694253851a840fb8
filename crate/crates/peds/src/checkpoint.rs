//! JSON checkpoints of trained ensembles.

use std::fs;
use std::path::Path;

use peds_core::geometry::{Family, GeometryParams};
use peds_core::peds::{Ensemble, NnOnlyModel, PedsModel, PedsParams};
use peds_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT: &str = "peds-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Members {
    Peds { members: Vec<PedsParams> },
    NnOnly { members: Vec<NnOnlyModel> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub family: Family,
    pub train: TrainConfig,
    pub model: Members,
}

/// A loaded ensemble of either kind.
#[derive(Debug, Clone)]
pub enum Loaded {
    Peds(Ensemble<PedsModel>),
    NnOnly(Ensemble<NnOnlyModel>),
}

impl Loaded {
    pub fn family(&self) -> Family {
        match self {
            Loaded::Peds(e) => e.family(),
            Loaded::NnOnly(e) => e.family(),
        }
    }

    pub fn predict(&self, p: &GeometryParams) -> peds_core::Result<(Vec<f64>, f64)> {
        match self {
            Loaded::Peds(e) => e.predict(p),
            Loaded::NnOnly(e) => e.predict(p),
        }
    }
}

impl Checkpoint {
    pub fn peds(ensemble: &Ensemble<PedsModel>, train: &TrainConfig) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            family: ensemble.family(),
            train: train.clone(),
            model: Members::Peds {
                members: ensemble.members.iter().map(|m| m.params().clone()).collect(),
            },
        }
    }

    pub fn nn_only(ensemble: &Ensemble<NnOnlyModel>, train: &TrainConfig) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            family: ensemble.family(),
            train: train.clone(),
            model: Members::NnOnly {
                members: ensemble.members.clone(),
            },
        }
    }

    pub fn load(&self) -> Result<Loaded> {
        let loaded = match &self.model {
            Members::Peds { members } => Loaded::Peds(Ensemble::new(
                members
                    .iter()
                    .cloned()
                    .map(PedsModel::from_params)
                    .collect::<peds_core::Result<_>>()?,
            )?),
            Members::NnOnly { members } => Loaded::NnOnly(Ensemble::new(members.clone())?),
        };
        if loaded.family() != self.family {
            return Err(Error::Input(format!(
                "checkpoint declares {} but holds {} models",
                self.family,
                loaded.family()
            )));
        }
        Ok(loaded)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if c.format != FORMAT {
            return Err(Error::Input(format!("{} is not a checkpoint", path.display())));
        }
        Ok(c)
    }
}
