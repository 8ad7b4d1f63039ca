use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, EgoPolicy, EpisodeRecord, EvalError};
use crate::env::EnvConfig;
use crate::rng::{self, Domain};
use crate::sim::OutcomeKind;
use crate::world::sample_episode;

pub const RAW_HEADER: [&str; 9] = [
    "method",
    "N",
    "seed",
    "episode",
    "outcome",
    "collision_steps",
    "freeze_fraction",
    "steps_taken",
    "final_goal_distance",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub densities: Vec<usize>,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            densities: vec![11, 13, 15, 17, 19, 21],
            seeds: vec![0, 1, 2, 3, 4],
            episodes_per_seed: 100,
            parallel: true,
        }
    }
}

/// Seed of episode `episode` for base seed `seed` at density `n`.
pub fn sweep_episode_seed(seed: u64, n: usize, episode: usize) -> u64 {
    rng::mix(&[Domain::SweepEpisode as u64, seed, n as u64, episode as u64])
}

/// Runs every (N, seed, episode) cell. Records come back sorted by
/// (N, seed, episode) whatever the scheduling.
pub fn density_sweep(policy: &EgoPolicy, env_config: &EnvConfig, sweep: &SweepConfig) -> Result<Vec<EpisodeRecord>, EvalError> {
    let mut jobs = Vec::new();
    for &n in &sweep.densities {
        for &seed in &sweep.seeds {
            for ep in 0..sweep.episodes_per_seed {
                jobs.push((n, seed, ep));
            }
        }
    }
    jobs.sort_unstable();
    jobs.dedup();
    let run = |&(n, seed, ep): &(usize, u64, usize)| {
        let mut cfg = env_config.clone();
        cfg.scenario.n_min = n;
        cfg.scenario.n_max = n;
        let episode_seed = sweep_episode_seed(seed, n, ep);
        let world = sample_episode(&cfg.scenario, episode_seed)?;
        let mut rec = run_episode(policy, world, &cfg, episode_seed, false)?;
        rec.seed = seed;
        rec.episode = ep;
        Ok(rec)
    };
    if sweep.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    }
}

pub fn raw_csv(records: &[EpisodeRecord]) -> Result<Vec<u8>, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RAW_HEADER)?;
    for r in records {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.outcome.as_str().to_string(),
            r.collision_steps.to_string(),
            r.freeze_fraction.to_string(),
            r.steps_taken.to_string(),
            r.final_goal_distance.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))
}

/// Reads records back from raw CSV. Fields not in the CSV are left empty.
pub fn parse_raw_csv(text: &str) -> Result<Vec<EpisodeRecord>, EvalError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |col: &str, reason: String| EvalError::Parse {
            row: i + 1,
            reason: format!("{col}: {reason}"),
        };
        if rec.len() != RAW_HEADER.len() {
            return Err(bad("row", format!("expected {} fields, got {}", RAW_HEADER.len(), rec.len())));
        }
        macro_rules! field {
            ($k:expr) => {
                rec[$k].parse().map_err(|e| bad(RAW_HEADER[$k], format!("{e}")))?
            };
        }
        out.push(EpisodeRecord {
            method: rec[0].to_string(),
            pedestrian_controller: String::new(),
            n: field!(1),
            seed: field!(2),
            episode: field!(3),
            outcome: OutcomeKind::parse(&rec[4]).ok_or_else(|| bad("outcome", rec[4].to_string()))?,
            collision_steps: field!(5),
            freeze_fraction: field!(6),
            steps_taken: field!(7),
            final_goal_distance: field!(8),
            ext_return: 0.0,
            trace: Vec::new(),
        });
    }
    Ok(out)
}
