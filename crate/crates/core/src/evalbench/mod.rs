//! Episode runner, metrics and density sweeps.

mod metrics;
mod sweep;

pub use metrics::{
    compute_metrics, parse_summary_csv, summary_csv, FigCategory, MetricsRow, SeedMetrics, SUMMARY_HEADER,
};
pub use sweep::{density_sweep, parse_raw_csv, raw_csv, sweep_episode_seed, SweepConfig, RAW_HEADER};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, NavEnv};
use crate::geom::Vec2;
use crate::learn::{LearnedPolicy, TrainError};
use crate::peds::{orca_velocity, sfm_velocity, OrcaParams, SfmParams};
use crate::rng::{self, Domain, StreamRng};
use crate::sim::{EgoAction, OutcomeKind, StepEvents};
use crate::world::{AgentState, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Policy(#[from] TrainError),
    #[error("no episode records to aggregate")]
    EmptyInput,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed csv row {row}: {reason}")]
    Parse { row: usize, reason: String },
}

/// Ego controllers available to the evaluation harness.
#[derive(Clone, Debug)]
pub enum EgoPolicy {
    /// Learned policy acting with its mean under frozen statistics.
    Learned(LearnedPolicy),
    Orca(OrcaParams),
    Sfm(SfmParams),
    /// Uniform velocity commands inside the speed disk.
    Random,
}

impl EgoPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            EgoPolicy::Learned(_) => "checkpoint",
            EgoPolicy::Orca(_) => "orca",
            EgoPolicy::Sfm(_) => "sfm",
            EgoPolicy::Random => "random",
        }
    }

    pub fn act(&self, env: &NavEnv, rng: &mut StreamRng) -> Result<Vec2, EvalError> {
        let world = env.world();
        let dt = env.config.sim.dt;
        Ok(match self {
            EgoPolicy::Learned(p) => p.act(env.observe().as_slice())?,
            EgoPolicy::Orca(p) => orca_velocity(0, world, p, dt),
            EgoPolicy::Sfm(p) => sfm_velocity(0, world, p, dt),
            EgoPolicy::Random => {
                let r = env.config.sim.ego_max_speed * rng.gen::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.gen::<f64>();
                Vec2::new(r * libm::cos(theta), r * libm::sin(theta))
            }
        })
    }
}

/// One step of an episode: the state after the step and what happened.
/// Step 0 is the initial state and has no action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub step: usize,
    pub action: Option<Vec2>,
    pub ego: AgentState,
    pub pedestrians: Vec<AgentState>,
    pub collisions: Vec<usize>,
    pub ego_reached_goal: bool,
    pub ego_frozen: bool,
}

impl TraceStep {
    pub fn new(world: &WorldState, action: Option<Vec2>, events: &StepEvents) -> Self {
        Self {
            step: world.step_index,
            action,
            ego: world.ego,
            pedestrians: world.pedestrians.clone(),
            collisions: events.collisions.clone(),
            ego_reached_goal: events.ego_reached_goal,
            ego_frozen: events.ego_frozen,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub method: String,
    pub pedestrian_controller: String,
    pub n: usize,
    pub seed: u64,
    pub episode: usize,
    pub outcome: OutcomeKind,
    pub collision_steps: usize,
    pub freeze_fraction: f64,
    pub steps_taken: usize,
    pub final_goal_distance: f64,
    pub ext_return: f64,
    #[serde(skip)]
    pub trace: Vec<TraceStep>,
}

impl EpisodeRecord {
    pub fn category(&self) -> FigCategory {
        FigCategory::of(self.outcome, self.collision_steps)
    }
}

/// Rolls one episode from `world0` to termination. Random actions are drawn
/// from the ego-policy stream of `policy_seed`.
pub fn run_episode(
    policy: &EgoPolicy,
    world0: WorldState,
    env_config: &EnvConfig,
    policy_seed: u64,
    keep_trace: bool,
) -> Result<EpisodeRecord, EvalError> {
    let mut rng = rng::stream(policy_seed, Domain::EgoPolicy, 0, 0);
    let n = world0.pedestrians.len();
    let controller = world0.context.controller.name().to_string();
    let mut env = NavEnv::from_world(env_config.clone(), world0);
    let mut trace = Vec::new();
    if keep_trace {
        trace.push(TraceStep::new(env.world(), None, &StepEvents::default()));
    }
    let mut ext_return = 0.0;
    let outcome = loop {
        let action = policy.act(&env, &mut rng)?;
        let tr = env.step(EgoAction { command_velocity: action })?;
        ext_return += tr.ext_reward;
        if keep_trace {
            trace.push(TraceStep::new(env.world(), Some(action), &tr.events));
        }
        if let Some(o) = tr.outcome {
            break o;
        }
    };
    let tally = env.tally();
    Ok(EpisodeRecord {
        method: policy.name().to_string(),
        pedestrian_controller: controller,
        n,
        seed: 0,
        episode: 0,
        outcome: outcome.kind,
        collision_steps: outcome.total_collision_steps,
        freeze_fraction: tally.frozen_steps as f64 / outcome.steps_taken as f64,
        steps_taken: outcome.steps_taken,
        final_goal_distance: env.world().goal_distance(),
        ext_return,
        trace,
    })
}
