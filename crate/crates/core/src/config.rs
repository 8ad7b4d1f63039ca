//! Run configuration: a TOML file of flat dotted keys layered over defaults,
//! with `key=value` overrides.
//!
//! Every key must already exist in the default configuration, so a typo is an
//! error that names the key instead of a silently ignored setting.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::encoder::EncoderConfig;
use crate::env::EnvConfig;
use crate::evalbench::SweepConfig;
use crate::learn::TrainConfig;
use crate::peds::{OrcaParams, SfmParams};
use crate::shaping::{ExtrinsicConfig, ShapingConfig};
use crate::sim::SimConfig;
use crate::world::{ArenaConfig, PedestrianController, Scenario};

/// Keys that may change when a training run is resumed.
pub const RESUMABLE_KEYS: [&str; 2] = ["train.total_steps", "output.dir"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` expects {expected}")]
    Type { key: String, expected: &'static str },
    #[error("malformed override `{0}` (expected key=value)")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config serialization: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Orca,
    Sfm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EgoKind {
    Checkpoint,
    Orca,
    Sfm,
    Random,
}

impl std::str::FromStr for EgoKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "checkpoint" => Ok(EgoKind::Checkpoint),
            "orca" => Ok(EgoKind::Orca),
            "sfm" => Ok(EgoKind::Sfm),
            "random" => Ok(EgoKind::Random),
            _ => Err(format!("unknown ego `{s}` (checkpoint, orca, sfm, random)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_min: usize,
    pub n_max: usize,
    pub horizon: usize,
    pub pedestrians: ControllerKind,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 5,
            horizon: 100,
            pedestrians: ControllerKind::Sfm,
        }
    }
}

/// Settings of the single-episode `run` command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub ego: EgoKind,
    pub n: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            ego: EgoKind::Orca,
            n: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arena: ArenaConfig,
    pub scenario: ScenarioSection,
    pub sim: SimConfig,
    pub orca: OrcaParams,
    pub sfm: SfmParams,
    pub encoder: EncoderConfig,
    pub shaping: ShapingConfig,
    pub reward: ExtrinsicConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub run: RunSection,
    pub output: OutputSection,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

/// Checks `v` against the default value's type, widening integers to floats.
fn coerce(default: &Value, v: &Value, key: &str) -> Result<Value, ConfigError> {
    let mismatch = || ConfigError::Type {
        key: key.to_string(),
        expected: type_name(default),
    };
    Ok(match (default, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
        (Value::Array(d), Value::Array(items)) => match d.first() {
            Some(proto) => Value::Array(items.iter().map(|x| coerce(proto, x, key)).collect::<Result<_, _>>()?),
            None => v.clone(),
        },
        (Value::Table(_), _) | (_, Value::Table(_)) => return Err(mismatch()),
        _ if std::mem::discriminant(default) == std::mem::discriminant(v) => v.clone(),
        _ => return Err(mismatch()),
    })
}

fn merge(base: &mut Table, over: &Table, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in over {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let slot = base.get_mut(k).ok_or_else(|| ConfigError::UnknownKey(key.clone()))?;
        match (slot, v) {
            (Value::Table(bt), Value::Table(ot)) => merge(bt, ot, &key)?,
            (slot, v) => *slot = coerce(slot, v, &key)?,
        }
    }
    Ok(())
}

/// Parses one `key=value` override. Values that are not valid TOML are taken
/// as bare strings.
pub fn parse_override(s: &str) -> Result<Table, ConfigError> {
    let (key, value) = s.split_once('=').ok_or_else(|| ConfigError::Override(s.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(ConfigError::Override(s.to_string()));
    }
    let value = value.trim();
    let parsed = toml::from_str::<Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let mut node = parsed;
    for part in key.rsplit('.') {
        let mut t = Table::new();
        t.insert(part.to_string(), node);
        node = Value::Table(t);
    }
    match node {
        Value::Table(t) => Ok(t),
        _ => unreachable!(),
    }
}

fn flatten(table: &Table, prefix: &str, out: &mut String) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(t, &key, out),
            v => {
                out.push_str(&key);
                out.push_str(" = ");
                out.push_str(&v.to_string());
                out.push('\n');
            }
        }
    }
}

impl RunConfig {
    fn default_table() -> Table {
        match Value::try_from(RunConfig::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("default configuration serializes to a table"),
        }
    }

    /// Layers `text` and then each override onto the defaults.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = Self::default_table();
        merge(&mut table, &toml::from_str::<Table>(text)?, "")?;
        for o in overrides {
            merge(&mut table, &parse_override(o)?, "")?;
        }
        let cfg: RunConfig = Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.scenario.n_min > self.scenario.n_max {
            return bad("scenario.n_min exceeds scenario.n_max");
        }
        if self.scenario.horizon == 0 {
            return bad("scenario.horizon must be positive");
        }
        if !(self.sim.dt > 0.0) || !(self.sim.ego_max_speed > 0.0) {
            return bad("sim.dt and sim.ego_max_speed must be positive");
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return bad("arena dimensions must be positive");
        }
        if self.train.n_envs == 0 || self.train.rollout_len == 0 || self.train.hidden == 0 {
            return bad("train.n_envs, train.rollout_len and train.hidden must be positive");
        }
        self.encoder.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// One `key = value` line per setting, sorted by key.
    pub fn to_flat_string(&self) -> Result<String, ConfigError> {
        let mut out = String::new();
        match Value::try_from(self)? {
            Value::Table(t) => flatten(&t, "", &mut out),
            _ => unreachable!(),
        }
        Ok(out)
    }

    /// SHA-256 of the flat text, hex encoded.
    pub fn hash(&self) -> Result<String, ConfigError> {
        Ok(hex::encode(Sha256::digest(self.to_flat_string()?.as_bytes())))
    }

    pub fn controller(&self) -> PedestrianController {
        match self.scenario.pedestrians {
            ControllerKind::Orca => PedestrianController::Orca(self.orca),
            ControllerKind::Sfm => PedestrianController::Sfm(self.sfm),
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            scenario: Scenario {
                arena: self.arena,
                n_min: self.scenario.n_min,
                n_max: self.scenario.n_max,
                horizon: self.scenario.horizon,
                controller: self.controller(),
            },
            sim: self.sim,
            encoder: self.encoder.clone(),
            shaping: self.shaping,
            extrinsic: self.reward,
        }
    }
}

/// Flat config text without the keys allowed to differ on resume.
pub fn resume_snapshot(flat: &str) -> String {
    flat.lines()
        .filter(|l| {
            let key = l.split(" = ").next().unwrap_or("");
            !RESUMABLE_KEYS.contains(&key)
        })
        .map(|l| format!("{l}\n"))
        .collect()
}
