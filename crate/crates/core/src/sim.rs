//! Episode engine: integrates ego and pedestrian motion, records contact
//! events and decides termination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::peds::controller_velocity;
use crate::rng::{self, Domain};
use crate::world::{sample_goal, ArenaConfig, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub ego_max_speed: f64,
    pub goal_tolerance: f64,
    pub freeze_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            ego_max_speed: 1.0,
            goal_tolerance: 0.2,
            freeze_speed: 0.05,
        }
    }
}

/// Velocity command for the ego. Clipped to the ego speed limit by the sim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoAction {
    pub command_velocity: Vec2,
}

impl EgoAction {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            command_velocity: Vec2::new(x, y),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    /// Pedestrian indices (0-based into `pedestrians`) in contact with the ego.
    pub collisions: Vec<usize>,
    pub ego_reached_goal: bool,
    pub ego_frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeKind {
    SafeSuccess,
    UnsafeSuccess,
    Timeout,
}

impl OutcomeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutcomeKind::SafeSuccess => "safe_success",
            OutcomeKind::UnsafeSuccess => "unsafe_success",
            OutcomeKind::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "safe_success" => Some(OutcomeKind::SafeSuccess),
            "unsafe_success" => Some(OutcomeKind::UnsafeSuccess),
            "timeout" => Some(OutcomeKind::Timeout),
            _ => None,
        }
    }

    pub fn reached_goal(&self) -> bool {
        !matches!(self, OutcomeKind::Timeout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub total_collision_steps: usize,
    pub steps_taken: usize,
}

/// Running per-episode event totals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeTally {
    pub steps: usize,
    pub collision_steps: usize,
    pub frozen_steps: usize,
}

impl EpisodeTally {
    pub fn record(&mut self, events: &StepEvents) {
        self.steps += 1;
        if !events.collisions.is_empty() {
            self.collision_steps += 1;
        }
        if events.ego_frozen {
            self.frozen_steps += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    Continue,
    Done(Outcome),
}

/// Pedestrian commands for one step, with goals after any respawn.
#[derive(Clone, Debug, PartialEq)]
pub struct PedestrianCommands {
    pub velocities: Vec<Vec2>,
    pub goals: Vec<Vec2>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),
    #[error("non-finite ego command ({0}, {1})")]
    NonFiniteAction(f64, f64),
}

/// Pedestrians in contact with the ego (`|p_i - p_0| < r_i + r_0`).
pub fn detect_collisions(world: &WorldState) -> Vec<usize> {
    let ego = &world.ego;
    world
        .pedestrians
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let reach = p.radius + ego.radius;
            (p.position - ego.position).length_squared() < reach * reach
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simulator {
    pub arena: ArenaConfig,
    pub config: SimConfig,
}

impl Simulator {
    pub fn new(arena: ArenaConfig, config: SimConfig) -> Self {
        Self { arena, config }
    }

    /// Pedestrian velocities for the current state. Pedestrians that have
    /// reached their goal first receive a fresh goal drawn from the stream
    /// keyed by `(seed, step_index, pedestrian)`.
    pub fn run_pedestrians(&self, world: &WorldState) -> PedestrianCommands {
        let tol = self.config.goal_tolerance;
        let goals: Vec<Vec2> = world
            .pedestrians
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.goal.distance(p.position) >= tol {
                    return p.goal;
                }
                let mut rng = rng::stream(
                    world.context.seed,
                    Domain::GoalRespawn,
                    world.step_index as u64,
                    i as u64,
                );
                let mut attempts = 0;
                sample_goal(&self.arena, p.position, p.radius, &mut rng, &mut attempts).unwrap_or(p.goal)
            })
            .collect();

        let respawned;
        let view = if goals.iter().zip(&world.pedestrians).any(|(g, p)| *g != p.goal) {
            let mut w = world.clone();
            for (p, g) in w.pedestrians.iter_mut().zip(&goals) {
                p.goal = *g;
            }
            respawned = w;
            &respawned
        } else {
            world
        };

        let velocities = (1..=view.pedestrians.len())
            .map(|i| controller_velocity(&view.context.controller, i, view, self.config.dt))
            .collect();
        PedestrianCommands { velocities, goals }
    }

    /// Advances the world by one step.
    pub fn step(&self, world: &WorldState, action: EgoAction) -> Result<(WorldState, StepEvents), SimError> {
        if world.step_index >= world.context.horizon {
            return Err(SimError::EpisodeFinished(world.step_index));
        }
        let cmd = action.command_velocity;
        if !cmd.is_finite() {
            return Err(SimError::NonFiniteAction(cmd.x, cmd.y));
        }
        let dt = self.config.dt;
        let peds = self.run_pedestrians(world);

        let mut next = world.clone();
        next.ego.velocity = cmd.clamp_length(self.config.ego_max_speed);
        next.ego.position = self.arena.clamp(next.ego.position + next.ego.velocity * dt, next.ego.radius);
        for ((p, v), g) in next.pedestrians.iter_mut().zip(peds.velocities).zip(peds.goals) {
            p.velocity = v;
            p.goal = g;
            p.position = self.arena.clamp(p.position + v * dt, p.radius);
        }
        next.step_index += 1;

        let events = StepEvents {
            collisions: detect_collisions(&next),
            ego_reached_goal: next.goal_distance() < self.config.goal_tolerance,
            ego_frozen: next.ego.velocity.length() < self.config.freeze_speed,
        };
        Ok((next, events))
    }

    /// Goal reached ends the episode with a success kind; reaching the horizon
    /// without the goal is a timeout. Collisions never end an episode.
    pub fn check_termination(&self, world: &WorldState, tally: &EpisodeTally) -> Termination {
        let outcome = |kind| {
            Termination::Done(Outcome {
                kind,
                total_collision_steps: tally.collision_steps,
                steps_taken: world.step_index,
            })
        };
        if world.goal_distance() < self.config.goal_tolerance {
            if tally.collision_steps == 0 {
                outcome(OutcomeKind::SafeSuccess)
            } else {
                outcome(OutcomeKind::UnsafeSuccess)
            }
        } else if world.step_index >= world.context.horizon {
            outcome(OutcomeKind::Timeout)
        } else {
            Termination::Continue
        }
    }
}

/// A single episode in progress. Refuses to step once terminated.
#[derive(Clone, Debug)]
pub struct Episode {
    pub sim: Simulator,
    pub world: WorldState,
    pub tally: EpisodeTally,
    pub outcome: Option<Outcome>,
}

impl Episode {
    pub fn new(sim: Simulator, world: WorldState) -> Self {
        Self {
            sim,
            world,
            tally: EpisodeTally::default(),
            outcome: None,
        }
    }

    pub fn step(&mut self, action: EgoAction) -> Result<StepEvents, SimError> {
        if self.outcome.is_some() {
            return Err(SimError::EpisodeFinished(self.world.step_index));
        }
        let (next, events) = self.sim.step(&self.world, action)?;
        self.world = next;
        self.tally.record(&events);
        if let Termination::Done(outcome) = self.sim.check_termination(&self.world, &self.tally) {
            self.outcome = Some(outcome);
        }
        Ok(events)
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }
}
