//! Run configuration as flat `section.key=value` text.
//!
//! Each section is a serde struct; a key path addresses a leaf of its JSON
//! form, so the set of accepted keys is exactly the set of fields. Values
//! take the type of the default they replace. Lists are comma separated.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_BUCKET_EDGES;
use crate::model::ModelConfig;
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

/// Name of the echoed configuration written next to every output.
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

/// Keys that are derived (dataset vocabularies, the global seed) and cannot be set.
const DERIVED_KEYS: &[&str] = &[
    "model.n_items",
    "model.n_side_info",
    "model.n_users",
    "model.profile_vocabs",
    "train.seed",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Lower edges of the user-diversity buckets.
    pub bucket_edges: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bucket_edges: DEFAULT_BUCKET_EDGES.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_list: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_list: vec![2, 4, 6, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Seeds generation, initialization and batch order.
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Training settings with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Apply `key=value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, unwrap_config(e))))?;
        }
        Ok(())
    }

    /// Set one key. Unknown and derived keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if DERIVED_KEYS.contains(&key) {
            return Err(Error::Config(format!("{key} is derived and cannot be set")));
        }
        let mut root = serde_json::to_value(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
        }
        if slot.is_object() {
            return Err(Error::Config(format!("{key} is a section, not a value")));
        }
        *slot = parse_like(slot, value).ok_or_else(|| Error::Config(format!("{key}: cannot parse {value:?}")))?;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Every settable key with its value, sorted.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let root = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        flatten("", &root, &mut out);
        out.retain(|(k, _)| !DERIVED_KEYS.contains(&k.as_str()));
        out.sort();
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Write the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        if self.synth.n_levels != self.model.n_levels {
            log::warn!(
                "synth.n_levels={} differs from model.n_levels={}; labels follow the model",
                self.synth.n_levels,
                self.model.n_levels
            );
        }
        if self.sweep.n_list.iter().any(|&n| n < 2) {
            return Err(Error::Config("sweep.n_list entries must be at least 2".into()));
        }
        Ok(())
    }
}

fn unwrap_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_like(current: &Value, text: &str) -> Option<Value> {
    Some(match current {
        Value::Bool(_) => Value::Bool(text.parse().ok()?),
        Value::Number(n) if n.is_u64() => Value::Number(text.parse::<u64>().ok()?.into()),
        Value::Number(n) if n.is_i64() => Value::Number(text.parse::<i64>().ok()?.into()),
        Value::Number(_) => Value::Number(Number::from_f64(text.parse().ok()?)?),
        Value::String(_) => Value::String(text.to_string()),
        Value::Array(items) => {
            let proto = items.first().cloned().unwrap_or(Value::Number(0u64.into()));
            if text.is_empty() {
                return Some(Value::Array(Vec::new()));
            }
            Value::Array(
                text.split(',')
                    .map(|t| parse_like(&proto, t.trim()))
                    .collect::<Option<Vec<_>>>()?,
            )
        }
        Value::Null | Value::Object(_) => return None,
    })
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => flatten_map(prefix, m, out),
        Value::Array(items) => out.push((
            prefix.to_string(),
            items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
        )),
        other => out.push((prefix.to_string(), scalar_text(other))),
    }
}

fn flatten_map(prefix: &str, m: &Map<String, Value>, out: &mut Vec<(String, String)>) {
    for (k, v) in m {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        flatten(&key, v, out);
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        // f64 values always carry a decimal point so re-reading keeps their type
        Value::Number(n) if n.is_f64() => format!("{:?}", n.as_f64().unwrap_or(f64::NAN)),
        other => other.to_string(),
    }
}
