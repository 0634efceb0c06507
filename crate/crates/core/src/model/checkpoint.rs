//! Versioned JSON checkpoints: architecture, the producing configuration and
//! every named tensor with its shape.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Architecture, SanModel};
use crate::nn::{Params, Rng};

pub const FORMAT: &str = "san-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: (usize, usize),
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    /// Training configuration that produced the weights, as written by the trainer.
    pub config: serde_json::Value,
    /// Names of the domains the model was trained on, in id order.
    #[serde(default)]
    pub domains: Vec<String>,
    /// Feature names of a text corpus, so new data can be vectorized identically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vocabulary>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn capture(model: &mut SanModel, config: serde_json::Value, domains: Vec<String>) -> Self {
        let mut tensors = Vec::new();
        model.visit_params(&mut |t| {
            tensors.push(NamedTensor {
                name: t.name,
                shape: t.shape,
                values: t.value.to_vec(),
            })
        });
        Self {
            format: FORMAT.into(),
            version: VERSION,
            architecture: model.architecture().clone(),
            config,
            domains,
            vocabulary: None,
            tensors,
        }
    }

    pub fn restore(&self) -> Result<SanModel> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = SanModel::new(self.architecture.clone(), &mut Rng::new(0))?;
        let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        let mut err = None;
        model.visit_params(&mut |t| {
            if err.is_some() {
                return;
            }
            match by_name.remove(t.name.as_str()) {
                Some(saved) if saved.shape == t.shape && saved.values.len() == t.value.len() => {
                    t.value.copy_from_slice(&saved.values)
                }
                Some(saved) => {
                    err = Some(Error::shape(
                        "checkpoint tensor",
                        format!("{} {:?}", t.name, t.shape),
                        format!("{:?}", saved.shape),
                    ))
                }
                None => err = Some(Error::Data(format!("checkpoint lacks tensor {}", t.name))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Data(format!("checkpoint has unknown tensor {extra}")));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ck: Checkpoint = serde_json::from_str(&text)?;
        ck.vocabulary = ck.vocabulary.map(Vocabulary::reindex);
        Ok(ck)
    }
}

/// Writes `exp(log_var)` of the stochastic layer as one value per line.
pub fn export_variances(model: &SanModel, path: &Path) -> Result<usize> {
    let layer = model
        .stochastic_layer()
        .ok_or_else(|| Error::Config("variance export needs a SAN model".into()))?;
    let vals = layer.variances();
    let mut out = String::from("index,variance\n");
    for (i, v) in vals.iter().enumerate() {
        out.push_str(&format!("{i},{v:e}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(vals.len())
}
