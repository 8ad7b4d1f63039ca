//! Line-delimited episode traces and bit-exact replay.
//!
//! The first line is a header with the format version, the flat config text
//! and its hash, and the episode seed. Every following line is one
//! [`TraceStep`], starting with the initial state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::evalbench::{EpisodeRecord, TraceStep};
use crate::sim::{EgoAction, Episode, SimError};
use crate::world::{sample_episode, WorldError};

pub const TRACE_FORMAT: &str = "crowdnav-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("empty trace")]
    Empty,
    #[error("not a trace file (format {0:?})")]
    Format(String),
    #[error("unsupported trace version {0} (this build reads version {TRACE_VERSION})")]
    Version(u32),
    #[error("config hash does not match the embedded config")]
    HashMismatch,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: String,
    pub ego: String,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(config: &RunConfig, seed: u64, record: &EpisodeRecord) -> Result<Self, ConfigError> {
        Ok(Self {
            header: TraceHeader {
                format: TRACE_FORMAT.to_string(),
                version: TRACE_VERSION,
                config_hash: config.hash()?,
                config: config.to_flat_string()?,
                ego: record.method.clone(),
                n: record.n,
                seed,
            },
            steps: record.trace.clone(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("trace step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let probe: serde_json::Value = serde_json::from_str(first).map_err(|source| TraceError::Json { line: 1, source })?;
        let format = probe.get("format").and_then(|f| f.as_str()).unwrap_or_default();
        if format != TRACE_FORMAT {
            return Err(TraceError::Format(format.to_string()));
        }
        let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != TRACE_VERSION as u64 {
            return Err(TraceError::Version(version as u32));
        }
        let header: TraceHeader = serde_json::from_str(first).map_err(|source| TraceError::Json { line: 1, source })?;
        let steps = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|source| TraceError::Json { line: i + 1, source }))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, steps })
    }
}

/// Where a replay first disagreed with the recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub recorded: String,
    pub recomputed: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReplayReport {
    Match { steps: usize },
    Diverged(Divergence),
}

/// Re-simulates the episode from the header's config and seed, feeding the
/// recorded actions, and compares every state bit for bit.
pub fn replay(trace: &Trace) -> Result<ReplayReport, TraceError> {
    let cfg = RunConfig::from_toml_str(&trace.header.config, &[])?;
    if cfg.hash()? != trace.header.config_hash {
        return Err(TraceError::HashMismatch);
    }
    let mut env = cfg.env_config();
    env.scenario.n_min = trace.header.n;
    env.scenario.n_max = trace.header.n;
    let world = sample_episode(&env.scenario, trace.header.seed)?;
    let mut episode = Episode::new(env.simulator(), world);

    let diverged = |step: usize, recorded: &TraceStep, recomputed: &TraceStep| {
        ReplayReport::Diverged(Divergence {
            step,
            recorded: serde_json::to_string(recorded).unwrap_or_default(),
            recomputed: serde_json::to_string(recomputed).unwrap_or_default(),
        })
    };

    for (i, rec) in trace.steps.iter().enumerate() {
        let recomputed = if i == 0 {
            TraceStep::new(&episode.world, None, &Default::default())
        } else {
            let Some(action) = rec.action else {
                return Ok(diverged(i, rec, &TraceStep::new(&episode.world, None, &Default::default())));
            };
            if episode.is_done() {
                return Ok(diverged(i, rec, &TraceStep::new(&episode.world, None, &Default::default())));
            }
            let events = episode.step(EgoAction { command_velocity: action })?;
            TraceStep::new(&episode.world, Some(action), &events)
        };
        if !bit_equal(rec, &recomputed) {
            return Ok(diverged(i, rec, &recomputed));
        }
    }
    Ok(ReplayReport::Match { steps: trace.steps.len() })
}

/// Floats serialize as shortest round-trip decimals (with the sign of zero),
/// so equal text means equal bits.
fn bit_equal(a: &TraceStep, b: &TraceStep) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}
