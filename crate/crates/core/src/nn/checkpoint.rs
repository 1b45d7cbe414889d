use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Tensor;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors plus free-form training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_kind: String,
    pub params: Vec<ParamRecord>,
    pub train_meta: serde_json::Value,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn from_params<'a>(kind: &str, params: impl IntoIterator<Item = &'a Param>, train_meta: serde_json::Value) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            model_kind: kind.to_string(),
            params: params
                .into_iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.values().to_vec(),
                })
                .collect(),
            train_meta,
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        ensure!(
            self.model_kind == kind,
            Checkpoint,
            "expected a {kind} checkpoint, found {}",
            self.model_kind
        );
        Ok(())
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) -> Result<()> {
        let mut n = 0;
        for p in params {
            n += 1;
            let rec = self
                .params
                .iter()
                .find(|r| r.name == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", p.name)))?;
            ensure!(
                rec.shape == p.value.shape(),
                Checkpoint,
                "parameter {} has shape {:?}, model expects {:?}",
                p.name,
                rec.shape,
                p.value.shape()
            );
            p.value = Tensor::new(&rec.shape, rec.data.clone())?;
        }
        ensure!(
            n == self.params.len(),
            Checkpoint,
            "checkpoint holds {} parameters, model has {n}",
            self.params.len()
        );
        Ok(())
    }

    pub fn param(&self, name: &str) -> Result<&ParamRecord> {
        self.params
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn to_json(&self) -> Result<String> {
        ensure!(
            self.params.iter().flat_map(|p| &p.data).all(|v| v.is_finite()),
            Validation,
            "refusing to write non-finite parameters"
        );
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let version = probe.get("format_version").and_then(serde_json::Value::as_u64);
        ensure!(
            version == Some(u64::from(Self::FORMAT_VERSION)),
            Checkpoint,
            "unknown format_version {version:?}"
        );
        let ck: Checkpoint = serde_json::from_value(probe)?;
        for p in &ck.params {
            ensure!(
                p.shape.iter().product::<usize>() == p.data.len(),
                Checkpoint,
                "parameter {} data does not match shape {:?}",
                p.name,
                p.shape
            );
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
