use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, EvalError};
use crate::sim::OutcomeKind;

pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "N",
    "safe_success_mean",
    "safe_success_std",
    "collisions_per_ep_mean",
    "freezing_rate_mean",
    "timeout_rate",
    "n_episodes",
];

/// Three-way outcome coloring: green is a safe success, amber any episode
/// with a collision, red a collision-free timeout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FigCategory {
    Green,
    Amber,
    Red,
}

impl FigCategory {
    pub fn of(outcome: OutcomeKind, collision_steps: usize) -> Self {
        if collision_steps > 0 {
            FigCategory::Amber
        } else if outcome == OutcomeKind::Timeout {
            FigCategory::Red
        } else {
            FigCategory::Green
        }
    }
}

/// Rates for one (method, N, seed) cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub episodes: usize,
    pub safe_success: f64,
    pub unsafe_success: f64,
    pub timeout: f64,
    pub collisions_per_ep: f64,
    pub freezing: f64,
}

/// Aggregate for one (method, N): means over seeds, and the sample standard
/// deviation of the safe-success rate across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub n: usize,
    pub safe_success_mean: f64,
    pub safe_success_std: f64,
    pub unsafe_success_mean: f64,
    pub goal_rate: f64,
    pub collisions_per_ep_mean: f64,
    pub freezing_rate_mean: f64,
    pub timeout_rate: f64,
    pub n_episodes: usize,
    pub seeds: Vec<SeedMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for x in xs {
        s += x;
        n += 1.0;
    }
    s / n
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn seed_metrics(seed: u64, recs: &[&EpisodeRecord]) -> SeedMetrics {
    let frac = |k: OutcomeKind| recs.iter().filter(|r| r.outcome == k).count() as f64 / recs.len() as f64;
    SeedMetrics {
        seed,
        episodes: recs.len(),
        safe_success: frac(OutcomeKind::SafeSuccess),
        unsafe_success: frac(OutcomeKind::UnsafeSuccess),
        timeout: frac(OutcomeKind::Timeout),
        collisions_per_ep: mean(recs.iter().map(|r| r.collision_steps as f64)),
        freezing: mean(recs.iter().map(|r| r.freeze_fraction)),
    }
}

/// Groups records by (method, N, seed), sorted by episode index, and reduces
/// in key order so the result does not depend on input order.
pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<Vec<MetricsRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cells: BTreeMap<(String, usize), BTreeMap<u64, Vec<&EpisodeRecord>>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.method.clone(), r.n))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r);
    }
    Ok(cells
        .into_iter()
        .map(|((method, n), by_seed)| {
            let seeds: Vec<SeedMetrics> = by_seed
                .into_iter()
                .map(|(seed, mut recs)| {
                    recs.sort_by_key(|r| r.episode);
                    seed_metrics(seed, &recs)
                })
                .collect();
            let safe: Vec<f64> = seeds.iter().map(|s| s.safe_success).collect();
            let unsafe_mean = mean(seeds.iter().map(|s| s.unsafe_success));
            let safe_mean = mean(safe.iter().copied());
            MetricsRow {
                method,
                n,
                safe_success_mean: safe_mean,
                safe_success_std: sample_std(&safe),
                unsafe_success_mean: unsafe_mean,
                goal_rate: safe_mean + unsafe_mean,
                collisions_per_ep_mean: mean(seeds.iter().map(|s| s.collisions_per_ep)),
                freezing_rate_mean: mean(seeds.iter().map(|s| s.freezing)),
                timeout_rate: mean(seeds.iter().map(|s| s.timeout)),
                n_episodes: seeds.iter().map(|s| s.episodes).sum(),
                seeds,
            }
        })
        .collect())
}

pub fn summary_csv(rows: &[MetricsRow]) -> Result<Vec<u8>, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.safe_success_mean.to_string(),
            r.safe_success_std.to_string(),
            r.collisions_per_ep_mean.to_string(),
            r.freezing_rate_mean.to_string(),
            r.timeout_rate.to_string(),
            r.n_episodes.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))
}

/// Summary rows as (method, N, the six numeric columns).
pub fn parse_summary_csv(text: &str) -> Result<Vec<(String, usize, [f64; 6])>, EvalError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| EvalError::Parse { row: i + 1, reason };
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", SUMMARY_HEADER.len(), rec.len())));
        }
        let n = rec[1].parse().map_err(|e| bad(format!("N: {e}")))?;
        let mut vals = [0.0; 6];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k + 2].parse().map_err(|e| bad(format!("{}: {e}", SUMMARY_HEADER[k + 2])))?;
        }
        out.push((rec[0].to_string(), n, vals));
    }
    Ok(out)
}
