//! Navigation environment: episode sampling, encoding and reward assembly
//! around the simulator, shared by training and evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{encode, EncoderConfig, Observation};
use crate::rng;
use crate::shaping::{extrinsic_reward, pss_bound, ExtrinsicConfig, PotentialTracker, ShapingConfig, ShapingError};
use crate::sim::{EgoAction, Episode, EpisodeTally, Outcome, SimConfig, SimError, Simulator, StepEvents};
use crate::world::{sample_episode, Scenario, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub scenario: Scenario,
    pub sim: SimConfig,
    pub encoder: EncoderConfig,
    pub shaping: ShapingConfig,
    pub extrinsic: ExtrinsicConfig,
}

impl EnvConfig {
    pub fn simulator(&self) -> Simulator {
        Simulator::new(self.scenario.arena, self.sim)
    }
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub events: StepEvents,
    pub ext_reward: f64,
    /// Unweighted shaping reward `gamma * phi_next - phi_prev`.
    pub pss_reward: f64,
    pub outcome: Option<Outcome>,
}

/// A resettable environment. Episode `k` of an environment seeded with
/// `seed` is sampled from the stream `mix(seed, k)`.
#[derive(Clone, Debug)]
pub struct NavEnv {
    pub config: EnvConfig,
    seed: u64,
    episodes_started: u64,
    episode: Episode,
    tracker: PotentialTracker,
    shaping_bound: f64,
}

impl NavEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let world = sample_episode(&config.scenario, rng::mix(&[seed, 0]))?;
        let tracker = PotentialTracker::reset(&world, &config.shaping);
        let shaping_bound = pss_bound(&config.shaping, &config.scenario.arena, config.scenario.n_max);
        Ok(Self {
            episode: Episode::new(config.simulator(), world),
            config,
            seed,
            episodes_started: 1,
            tracker,
            shaping_bound,
        })
    }

    /// Environment whose first episode starts from `world`.
    pub fn from_world(config: EnvConfig, world: WorldState) -> Self {
        let tracker = PotentialTracker::reset(&world, &config.shaping);
        let n = config.scenario.n_max.max(world.pedestrians.len());
        let shaping_bound = pss_bound(&config.shaping, &config.scenario.arena, n);
        Self {
            episode: Episode::new(config.simulator(), world),
            config,
            seed: 0,
            episodes_started: 1,
            tracker,
            shaping_bound,
        }
    }

    pub fn tally(&self) -> &EpisodeTally {
        &self.episode.tally
    }

    /// Starts a fresh episode from the given initial world.
    pub fn reset_to(&mut self, world: WorldState) {
        self.tracker = PotentialTracker::reset(&world, &self.config.shaping);
        self.episode = Episode::new(self.config.simulator(), world);
    }

    /// Samples and starts the next episode of this environment's sequence.
    pub fn reset(&mut self) -> Result<(), EnvError> {
        let world = sample_episode(&self.config.scenario, rng::mix(&[self.seed, self.episodes_started]))?;
        self.episodes_started += 1;
        self.reset_to(world);
        Ok(())
    }

    pub fn world(&self) -> &WorldState {
        &self.episode.world
    }

    pub fn is_done(&self) -> bool {
        self.episode.is_done()
    }

    pub fn observe(&self) -> Observation {
        encode(&self.episode.world, &self.config.encoder)
    }

    pub fn step(&mut self, action: EgoAction) -> Result<Transition, EnvError> {
        let prev = self.episode.world.clone();
        let events = self.episode.step(action)?;
        let next = &self.episode.world;
        let ext_reward = extrinsic_reward(&prev, next, &events, &self.config.extrinsic);
        let pss_reward = self.tracker.advance(next, &self.config.shaping);
        if pss_reward.abs() > self.shaping_bound {
            return Err(ShapingError::BoundExceeded {
                value: pss_reward,
                bound: self.shaping_bound,
            }
            .into());
        }
        Ok(Transition {
            events,
            ext_reward,
            pss_reward,
            outcome: self.episode.outcome,
        })
    }
}
