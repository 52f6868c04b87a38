use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DaianModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numeric::ParamGroup;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub group: ParamGroup,
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// On-disk model: config, provenance and every parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Training settings that produced the parameters.
    #[serde(default)]
    pub provenance: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &DaianModel, provenance: serde_json::Value) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            provenance,
            params: model
                .params
                .iter()
                .map(|(_, p)| ParamEntry {
                    group: p.group,
                    name: p.name.clone(),
                    shape: [p.rows, p.cols],
                    values: p.data.clone(),
                })
                .collect(),
        }
    }

    /// Rebuild the model; the tensor set and every shape must match the config.
    pub fn into_model(self) -> Result<DaianModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format_version {}", self.format_version)));
        }
        let mut model = DaianModel::new(self.config, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let expected: BTreeSet<String> = model.params.iter().map(|(_, p)| p.name.clone()).collect();
        let found: BTreeSet<String> = self.params.iter().map(|p| p.name.clone()).collect();
        if expected != found || found.len() != self.params.len() {
            let missing: Vec<_> = expected.difference(&found).collect();
            let extra: Vec<_> = found.difference(&expected).collect();
            return Err(Error::Checkpoint(format!(
                "parameter set mismatch: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        for entry in self.params {
            let id = model.params.id(&entry.name).expect("checked above");
            if model.params.get(id).group != entry.group {
                return Err(Error::Checkpoint(format!("parameter {} listed under the wrong group", entry.name)));
            }
            model
                .params
                .assign(&entry.name, entry.shape[0], entry.shape[1], entry.values)?;
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &DaianModel, provenance: serde_json::Value, path: &Path) -> Result<()> {
    let ck = Checkpoint::from_model(model, provenance);
    let text = serde_json::to_string(&ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DaianModel, serde_json::Value)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let provenance = ck.provenance.clone();
    Ok((ck.into_model()?, provenance))
}
