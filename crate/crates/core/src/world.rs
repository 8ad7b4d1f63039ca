//! Domain types, arena geometry, scenario sampling and density statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::peds::{OrcaParams, SfmParams};
use crate::rng::{self, Domain, StreamRng};

pub const EGO_RADIUS: f64 = 0.15;
pub const PEDESTRIAN_RADIUS: f64 = 0.15;
/// Extra gap beyond touching required between agents at spawn.
pub const PLACEMENT_CLEARANCE: f64 = 0.05;
pub const MIN_GOAL_DISTANCE: f64 = 1.0;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
}

impl AgentState {
    pub fn at_rest(position: Vec2, radius: f64, goal: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            radius,
            goal,
        }
    }
}

/// Axis-aligned rectangular arena `[0, width] x [0, height]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            width: 3.0,
            height: 3.0,
        }
    }
}

impl ArenaConfig {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Clamps a disk center of the given radius so the disk stays inside.
    pub fn clamp(&self, p: Vec2, radius: f64) -> Vec2 {
        Vec2::new(
            p.x.clamp(radius, self.width - radius),
            p.y.clamp(radius, self.height - radius),
        )
    }

    /// Uniform center position for a disk of `radius` fully inside the arena.
    pub fn sample_point(&self, radius: f64, rng: &mut StreamRng) -> Vec2 {
        Vec2::new(
            rng.gen_range(radius..=self.width - radius),
            rng.gen_range(radius..=self.height - radius),
        )
    }
}

/// Controller driving the pedestrians, with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PedestrianController {
    Orca(OrcaParams),
    Sfm(SfmParams),
}

impl PedestrianController {
    pub fn name(&self) -> &'static str {
        match self {
            PedestrianController::Orca(_) => "orca",
            PedestrianController::Sfm(_) => "sfm",
        }
    }

    pub fn max_speed(&self) -> f64 {
        match self {
            PedestrianController::Orca(p) => p.max_speed,
            PedestrianController::Sfm(p) => p.max_speed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeContext {
    pub pedestrian_count: usize,
    pub horizon: usize,
    pub seed: u64,
    pub controller: PedestrianController,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ego: AgentState,
    pub pedestrians: Vec<AgentState>,
    pub step_index: usize,
    pub context: EpisodeContext,
}

impl WorldState {
    /// Agent by index: 0 is the ego, `i >= 1` is pedestrian `i - 1`.
    pub fn agent(&self, index: usize) -> &AgentState {
        if index == 0 {
            &self.ego
        } else {
            &self.pedestrians[index - 1]
        }
    }

    pub fn agent_count(&self) -> usize {
        self.pedestrians.len() + 1
    }

    pub fn goal_distance(&self) -> f64 {
        self.ego.goal.distance(self.ego.position)
    }

    pub fn is_finite(&self) -> bool {
        std::iter::once(&self.ego)
            .chain(self.pedestrians.iter())
            .all(|a| a.position.is_finite() && a.velocity.is_finite() && a.goal.is_finite())
    }
}

/// Everything needed to sample an episode's initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arena: ArenaConfig,
    /// Inclusive pedestrian count range.
    pub n_min: usize,
    pub n_max: usize,
    pub horizon: usize,
    pub controller: PedestrianController,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("empty pedestrian range [{0}, {1}]")]
    EmptyRange(usize, usize),
    #[error("could not place {agents} agents after {attempts} rejection attempts")]
    PlacementFailure { agents: usize, attempts: usize },
}

/// Episode-level crowd density in pedestrians per square meter.
pub fn density(n: usize, arena: &ArenaConfig) -> f64 {
    n as f64 / arena.area()
}

/// Number of pedestrians within the closed ball of radius `r` around the ego.
pub fn local_count(world: &WorldState, r: f64) -> usize {
    let r_sq = r * r;
    world
        .pedestrians
        .iter()
        .filter(|p| (p.position - world.ego.position).length_squared() <= r_sq)
        .count()
}

/// Uniform goal at least `MIN_GOAL_DISTANCE` from `start`.
pub(crate) fn sample_goal(
    arena: &ArenaConfig,
    start: Vec2,
    radius: f64,
    rng: &mut StreamRng,
    attempts: &mut usize,
) -> Option<Vec2> {
    while *attempts < MAX_PLACEMENT_ATTEMPTS {
        *attempts += 1;
        let g = arena.sample_point(radius, rng);
        if g.distance(start) >= MIN_GOAL_DISTANCE {
            return Some(g);
        }
    }
    None
}

/// Samples the initial world of an episode.
///
/// The pedestrian count is uniform over `[n_min, n_max]`; the ego and then
/// each pedestrian are placed by rejection sampling so that every pair of
/// centers is farther apart than the radii sum plus the clearance margin.
/// The result depends only on `(scenario, seed)`.
pub fn sample_episode(scenario: &Scenario, seed: u64) -> Result<WorldState, WorldError> {
    if scenario.n_min > scenario.n_max {
        return Err(WorldError::EmptyRange(scenario.n_min, scenario.n_max));
    }
    let mut rng = rng::stream(seed, Domain::Episode, 0, 0);
    let n = rng.gen_range(scenario.n_min..=scenario.n_max);
    let arena = &scenario.arena;

    let radii: Vec<f64> = std::iter::once(EGO_RADIUS)
        .chain(std::iter::repeat(PEDESTRIAN_RADIUS).take(n))
        .collect();
    let mut positions: Vec<Vec2> = Vec::with_capacity(n + 1);
    let mut attempts = 0usize;
    let failure = WorldError::PlacementFailure {
        agents: n + 1,
        attempts: MAX_PLACEMENT_ATTEMPTS,
    };

    for &radius in &radii {
        loop {
            if attempts >= MAX_PLACEMENT_ATTEMPTS {
                return Err(failure);
            }
            attempts += 1;
            let p = arena.sample_point(radius, &mut rng);
            let free = positions.iter().zip(&radii).all(|(q, &rq)| {
                p.distance(*q) > radius + rq + PLACEMENT_CLEARANCE
            });
            if free {
                positions.push(p);
                break;
            }
        }
    }

    let mut agents = Vec::with_capacity(n + 1);
    for (p, &radius) in positions.iter().zip(&radii) {
        let goal = sample_goal(arena, *p, radius, &mut rng, &mut attempts).ok_or(
            WorldError::PlacementFailure {
                agents: n + 1,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            },
        )?;
        agents.push(AgentState::at_rest(*p, radius, goal));
    }

    let ego = agents.remove(0);
    Ok(WorldState {
        ego,
        pedestrians: agents,
        step_index: 0,
        context: EpisodeContext {
            pedestrian_count: n,
            horizon: scenario.horizon,
            seed,
            controller: scenario.controller,
        },
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn scenario(n_min: usize, n_max: usize) -> Scenario {
        Scenario {
            arena: ArenaConfig::default(),
            n_min,
            n_max,
            horizon: 100,
            controller: PedestrianController::Sfm(SfmParams::default()),
        }
    }

    /// A world with the ego at `ego` and pedestrians at the given positions.
    pub(crate) fn world_with(ego: Vec2, peds: &[Vec2]) -> WorldState {
        WorldState {
            ego: AgentState::at_rest(ego, EGO_RADIUS, Vec2::new(2.5, 2.5)),
            pedestrians: peds
                .iter()
                .map(|&p| AgentState::at_rest(p, PEDESTRIAN_RADIUS, Vec2::new(0.5, 0.5)))
                .collect(),
            step_index: 0,
            context: EpisodeContext {
                pedestrian_count: peds.len(),
                horizon: 100,
                seed: 0,
                controller: PedestrianController::Sfm(SfmParams::default()),
            },
        }
    }

    #[test]
    fn density_values() {
        let arena = ArenaConfig::default();
        assert!((density(21, &arena) - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(format!("{:.2}", density(21, &arena)), "2.33");
        assert_eq!(format!("{:.2}", density(11, &arena)), "1.22");
        assert_eq!(density(0, &arena), 0.0);
    }

    #[test]
    fn local_count_examples() {
        let w = world_with(Vec2::ZERO, &[]);
        assert_eq!(local_count(&w, 1.0), 0);
        let w = world_with(Vec2::ZERO, &[Vec2::new(0.5, 0.0), Vec2::new(2.0, 0.0)]);
        assert_eq!(local_count(&w, 1.0), 1);
        let w = world_with(Vec2::ZERO, &[Vec2::new(1.0, 0.0)]);
        assert_eq!(local_count(&w, 1.0), 1);
    }

    #[test]
    fn sampled_counts_cover_range() {
        let sc = scenario(11, 16);
        let mut seen = [false; 17];
        for seed in 0..200 {
            let w = sample_episode(&sc, seed).unwrap();
            let n = w.pedestrians.len();
            assert!((11..=16).contains(&n));
            assert_eq!(n, w.context.pedestrian_count);
            seen[n] = true;
        }
        assert!(seen[11..=16].iter().all(|&s| s));
    }

    #[test]
    fn sampling_is_deterministic() {
        let sc = scenario(11, 16);
        assert_eq!(sample_episode(&sc, 99).unwrap(), sample_episode(&sc, 99).unwrap());
    }

    #[test]
    fn dense_setting_is_feasible_and_non_overlapping() {
        let sc = scenario(21, 21);
        for seed in 0..50 {
            let w = sample_episode(&sc, seed).unwrap();
            let agents: Vec<_> = std::iter::once(&w.ego).chain(&w.pedestrians).collect();
            for i in 0..agents.len() {
                for j in i + 1..agents.len() {
                    let d = agents[i].position.distance(agents[j].position);
                    assert!(d > agents[i].radius + agents[j].radius + PLACEMENT_CLEARANCE);
                }
                assert!(agents[i].goal.distance(agents[i].position) >= MIN_GOAL_DISTANCE);
            }
        }
    }

    #[test]
    fn over_packed_arena_fails() {
        let mut sc = scenario(200, 200);
        sc.arena = ArenaConfig {
            width: 1.0,
            height: 1.0,
        };
        assert!(matches!(
            sample_episode(&sc, 1),
            Err(WorldError::PlacementFailure { .. })
        ));
    }

    #[test]
    fn empty_range_is_rejected() {
        assert_eq!(
            sample_episode(&scenario(5, 4), 0),
            Err(WorldError::EmptyRange(5, 4))
        );
    }

    proptest::proptest! {
        #[test]
        fn local_count_monotone_in_radius(seed in 0u64..500, r1 in 0.01f64..3.0, dr in 0.0f64..2.0) {
            let w = sample_episode(&scenario(0, 25), seed).unwrap();
            proptest::prop_assert!(local_count(&w, r1) <= local_count(&w, r1 + dr));
        }

        #[test]
        fn density_times_area_recovers_count(n in 0usize..100, w in 0.5f64..20.0, h in 0.5f64..20.0) {
            let arena = ArenaConfig { width: w, height: h };
            let back = density(n, &arena) * arena.area();
            proptest::prop_assert!((back - n as f64).abs() <= 4.0 * f64::EPSILON * (n as f64).max(1.0));
        }
    }
}
