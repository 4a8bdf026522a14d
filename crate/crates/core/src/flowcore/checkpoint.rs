//! Checkpoint file: parameters, EMA shadow, optimizer state, step counter,
//! and a config echo. Parameter arrays are stored as little-endian f64 so a
//! save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, VelocityField};
use crate::arrayio::{read_container, write_container, Container, NamedArray};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"SYNCCK01";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    arch: ModelConfig,
    step: u64,
    adam_t: u64,
    config_echo: serde_json::Value,
}

/// A full training snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VelocityField,
    /// EMA shadow of the parameters; same layout as `model.params()`.
    pub ema: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub step: u64,
    pub config_echo: serde_json::Value,
}

impl Checkpoint {
    /// A fresh snapshot of an untrained model.
    pub fn fresh(model: VelocityField, config_echo: serde_json::Value) -> Self {
        let n = model.param_count();
        let ema = model.params().to_vec();
        Checkpoint {
            model,
            ema,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_t: 0,
            step: 0,
            config_echo,
        }
    }

    /// The EMA weights as an evaluation model.
    pub fn ema_model(&self) -> VelocityField {
        VelocityField::from_params(*self.model.config(), self.ema.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format_version: CHECKPOINT_FORMAT_VERSION,
            arch: *self.model.config(),
            step: self.step,
            adam_t: self.adam_t,
            config_echo: self.config_echo.clone(),
        };
        let n = self.model.param_count() as u32;
        let mut arrays = BTreeMap::new();
        arrays.insert(
            "params".to_string(),
            NamedArray::f64(vec![n], self.model.params().to_vec()),
        );
        arrays.insert("ema".to_string(), NamedArray::f64(vec![n], self.ema.clone()));
        arrays.insert(
            "adam_m".to_string(),
            NamedArray::f64(vec![n], self.adam_m.clone()),
        );
        arrays.insert(
            "adam_v".to_string(),
            NamedArray::f64(vec![n], self.adam_v.clone()),
        );
        let container = Container {
            header_json: serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?,
            arrays,
        };
        write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_FORMAT_VERSION, &container)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let container = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_FORMAT_VERSION)?;
        let header: CheckpointHeader = serde_json::from_str(&container.header_json)
            .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
        let expected = header.arch.param_count();
        let get = |name: &str| -> Result<Vec<f64>> {
            let arr = container
                .arrays
                .get(name)
                .ok_or_else(|| Error::Format(format!("{}: missing array {name}", path.display())))?;
            let data = arr.as_f64()?;
            if data.len() != expected {
                return Err(Error::Format(format!(
                    "{}: array {name} has {} values, expected {}",
                    path.display(),
                    data.len(),
                    expected
                )));
            }
            Ok(data.to_vec())
        };
        Ok(Checkpoint {
            model: VelocityField::from_params(header.arch, get("params")?),
            ema: get("ema")?,
            adam_m: get("adam_m")?,
            adam_v: get("adam_v")?,
            adam_t: header.adam_t,
            step: header.step,
            config_echo: header.config_echo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn tiny_model() -> VelocityField {
        VelocityField::init(
            ModelConfig {
                state_dim: 6,
                cond_dim: 2,
                hidden_dim: 8,
                time_embed_dim: 16,
            },
            &mut stream(1, "ckpt"),
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut ckpt = Checkpoint::fresh(tiny_model(), serde_json::json!({"note": "test"}));
        ckpt.step = 17;
        ckpt.adam_t = 17;
        ckpt.adam_m[3] = 1.25e-7;
        ckpt.adam_v[5] = 3.5;
        ckpt.ema[0] = -0.125;
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model.params(), ckpt.model.params());
        assert_eq!(loaded.ema, ckpt.ema);
        assert_eq!(loaded.adam_m, ckpt.adam_m);
        assert_eq!(loaded.adam_v, ckpt.adam_v);
        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.adam_t, 17);
        assert_eq!(loaded.config_echo, ckpt.config_echo);

        // Save the loaded copy again; files must be identical.
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        Checkpoint::fresh(tiny_model(), serde_json::Value::Null)
            .save(&path)
            .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9;
        std::fs::write(&path, bytes).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
