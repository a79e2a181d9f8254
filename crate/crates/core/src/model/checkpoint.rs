//! Checkpoint archives in safetensors format.
//!
//! Tensors are stored as little-endian f32 under `param.<name>`, and
//! optimizer moments under `adam.m.<name>` / `adam.v.<name>`. A single
//! metadata entry `ofpnet` holds JSON with the model config and an
//! optional training-state object.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, OfpNet};
use crate::autograd::Tensor;
use crate::error::{Error, Result};

const META_KEY: &str = "ofpnet";
const FORMAT_VERSION: u32 = 1;

/// Adam first and second moments, aligned with the parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: OfpNet<f32>,
    pub moments: Option<Moments>,
    /// Training metadata, opaque to this module.
    pub state: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: u32,
    config: ModelConfig,
    state: Option<serde_json::Value>,
}

fn ckpt_err(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

fn to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let model = &ckpt.model;
    let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for p in model.params().iter() {
        entries.push((
            format!("param.{}", p.name),
            p.value.shape().to_vec(),
            to_bytes(&p.value),
        ));
    }
    if let Some(mo) = &ckpt.moments {
        if mo.m.len() != model.params().len() || mo.v.len() != model.params().len() {
            return Err(Error::Checkpoint(
                "optimizer moments do not match the parameters".into(),
            ));
        }
        for (p, (m, v)) in model.params().iter().zip(mo.m.iter().zip(&mo.v)) {
            entries.push((
                format!("adam.m.{}", p.name),
                m.shape().to_vec(),
                to_bytes(m),
            ));
            entries.push((
                format!("adam.v.{}", p.name),
                v.shape().to_vec(),
                to_bytes(v),
            ));
        }
    }
    let views = entries
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(ckpt_err)
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = Meta {
        format: FORMAT_VERSION,
        config: model.config().clone(),
        state: ckpt.state.clone(),
    };
    let info = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&meta)?)]);
    let bytes = safetensors::serialize(views, &Some(info)).map_err(ckpt_err)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_tensor(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let view = st
        .tensor(name)
        .map_err(|_| Error::Checkpoint(format!("archive lacks tensor {name}")))?;
    if view.dtype() != Dtype::F32 {
        return Err(Error::Checkpoint(format!(
            "{name} is {:?}, expected F32",
            view.dtype()
        )));
    }
    if view.shape() != shape {
        return Err(Error::config(format!(
            "{name} has shape {:?}, the config expects {shape:?}",
            view.shape()
        )));
    }
    let data = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Reads a checkpoint, building the model from its embedded config.
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(ckpt_err)?;
    let raw = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| {
            Error::Checkpoint(format!("{} has no {META_KEY} metadata", path.display()))
        })?;
    let meta: Meta = serde_json::from_str(raw)?;
    if meta.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {}",
            meta.format
        )));
    }
    let st = SafeTensors::deserialize(&bytes).map_err(ckpt_err)?;
    let mut model = OfpNet::<f32>::new(meta.config, 0)?;
    let expected = st.len();
    let mut seen = 0;
    let mut m = Vec::new();
    let mut v = Vec::new();
    let names: Vec<(String, Vec<usize>)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.shape().to_vec()))
        .collect();
    for (id, (name, shape)) in names.iter().enumerate() {
        *model.params_mut().value_mut(id) = read_tensor(&st, &format!("param.{name}"), shape)?;
        seen += 1;
    }
    let has_moments = st.tensor(&format!("adam.m.{}", names[0].0)).is_ok();
    if has_moments {
        for (name, shape) in &names {
            m.push(read_tensor(&st, &format!("adam.m.{name}"), shape)?);
            v.push(read_tensor(&st, &format!("adam.v.{name}"), shape)?);
            seen += 2;
        }
    }
    if seen != expected {
        return Err(Error::config(format!(
            "archive holds {expected} tensors but the embedded config accounts for {seen}"
        )));
    }
    Ok(Checkpoint {
        model,
        moments: has_moments.then_some(Moments { m, v }),
        state: meta.state,
    })
}

/// Reads a checkpoint and checks that it was written for `expected`.
pub fn load_checkpoint(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.model.config() != expected {
        return Err(Error::config(format!(
            "checkpoint config {:?} does not match {:?}",
            ckpt.model.config(),
            expected
        )));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            channels: 2,
            projection_depth_m: 1,
            angular_size: (2, 2),
            fusion_blocks: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let model = OfpNet::<f32>::new(tiny(), 11).unwrap();
        let moments = Moments {
            m: model
                .params()
                .iter()
                .map(|p| p.value.map(|x| x * 0.5))
                .collect(),
            v: model
                .params()
                .iter()
                .map(|p| p.value.map(|x| x * x))
                .collect(),
        };
        let state = serde_json::json!({"epoch": 3, "lr": 1e-4 / 3.0});
        let ckpt = Checkpoint {
            model,
            moments: Some(moments.clone()),
            state: Some(state.clone()),
        };
        let a = dir.path().join("a.safetensors");
        save_checkpoint(&a, &ckpt).unwrap();
        let back = read_checkpoint(&a).unwrap();
        assert_eq!(back.model.params(), ckpt.model.params());
        assert_eq!(back.moments.as_ref(), Some(&moments));
        assert_eq!(back.state, Some(state));
        let b = dir.path().join("b.safetensors");
        save_checkpoint(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.safetensors");
        let ckpt = Checkpoint {
            model: OfpNet::<f32>::new(tiny(), 0).unwrap(),
            moments: None,
            state: None,
        };
        save_checkpoint(&path, &ckpt).unwrap();
        assert!(load_checkpoint(&path, &tiny()).is_ok());
        let wide = ModelConfig {
            channels: 4,
            ..tiny()
        };
        assert!(matches!(
            load_checkpoint(&path, &wide),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn garbage_is_a_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.safetensors");
        std::fs::write(&path, b"not an archive").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
