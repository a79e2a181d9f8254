//! Flat run configuration.
//!
//! A config file is TOML whose keys are read as dotted paths, so
//! `model.channels = 8` and `[model] channels = 8` are the same setting.
//! Overrides use the same keys (`--set train.lr0=5e-4`) and are applied in
//! order after the file, the last one winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::Split;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{Phase, TrainConfig};

pub type FlatConfig = BTreeMap<String, toml::Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size model and schedule.
    Full,
    /// Small model and 50-epoch schedule for a single CPU core.
    Desk,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub root: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub split: String,
    pub tile: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: "test".into(),
            tile: None,
        }
    }
}

impl EvalConfig {
    pub fn split(&self) -> Result<Split> {
        self.split.parse().map_err(|_| {
            Error::config(format!(
                "eval.split {:?} is not train, val or test",
                self.split
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn flatten_into(prefix: &str, table: &toml::Table, out: &mut FlatConfig) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten_into(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Reads a config file into dotted keys.
pub fn read_flat(path: &Path) -> Result<FlatConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_flat(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn parse_flat(text: &str) -> Result<FlatConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    let mut out = FlatConfig::new();
    flatten_into("", &table, &mut out);
    Ok(out)
}

/// Parses `key=value`. The value is read as a TOML value, falling back to
/// a bare string, so `model.branch_mode=full` needs no quotes.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn get_str<'a>(flat: &'a FlatConfig, key: &str) -> Result<Option<&'a str>> {
    match flat.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::config(format!(
            "{key} must be a string, got {other}"
        ))),
    }
}

fn set_path(root: &mut serde_json::Value, key: &str, value: serde_json::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::config(format!("{key}: {} is not a section", parts[..i].join(".")))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}

impl RunConfig {
    /// Defaults for `preset`, `phase` and `scale`.
    pub fn defaults(preset: Preset, phase: Phase, scale: u32) -> Result<Self> {
        let (model, train) = match preset {
            Preset::Full => (ModelConfig::default(), TrainConfig::defaults(phase, scale)?),
            Preset::Desk => (
                ModelConfig::desk(),
                TrainConfig {
                    phase,
                    ..TrainConfig::desk(scale)
                },
            ),
        };
        Ok(Self {
            preset,
            model,
            train,
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        })
    }

    /// Builds a config from dotted keys. `preset`, `train.phase` and
    /// `train.scale` pick the defaults that the remaining keys override;
    /// `phase` is used when the keys do not set one.
    pub fn from_flat(flat: &FlatConfig, phase: Phase) -> Result<Self> {
        let preset = match get_str(flat, "preset")? {
            None | Some("full") => Preset::Full,
            Some("desk") => Preset::Desk,
            Some(other) => {
                return Err(Error::config(format!(
                    "unknown preset {other:?}; expected full or desk"
                )))
            }
        };
        let phase = match get_str(flat, "train.phase")? {
            Some(p) => p.parse()?,
            None => phase,
        };
        let scale = match flat.get("train.scale") {
            None => 4,
            Some(toml::Value::Integer(s)) if *s == 2 || *s == 4 => *s as u32,
            Some(other) => {
                return Err(Error::config(format!(
                    "train.scale must be 2 or 4, got {other}"
                )))
            }
        };
        let mut json = serde_json::to_value(Self::defaults(preset, phase, scale)?)?;
        for (key, value) in flat {
            let v =
                serde_json::to_value(value).map_err(|e| Error::config(format!("{key}: {e}")))?;
            set_path(&mut json, key, v)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(json).map_err(|e| Error::config(e.to_string()))?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        cfg.eval.split()?;
        Ok(cfg)
    }

    /// Every setting as a dotted key, suitable for writing back to a file.
    pub fn to_flat(&self) -> FlatConfig {
        let value = toml::Value::try_from(self).expect("run config is representable in TOML");
        let mut out = FlatConfig::new();
        if let toml::Value::Table(t) = value {
            flatten_into("", &t, &mut out);
        }
        out
    }

    /// Fully resolved config as TOML text; loading it reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is representable in TOML")
    }
}

/// Loads `file` (if any), applies `overrides` in order and resolves.
pub fn resolve(
    file: Option<&Path>,
    overrides: &[String],
    phase: Phase,
) -> Result<(RunConfig, FlatConfig)> {
    let mut flat = match file {
        Some(p) => read_flat(p)?,
        None => FlatConfig::new(),
    };
    for spec in overrides {
        let (k, v) = parse_override(spec)?;
        flat.insert(k, v);
    }
    let cfg = RunConfig::from_flat(&flat, phase)?;
    Ok((cfg, flat))
}
