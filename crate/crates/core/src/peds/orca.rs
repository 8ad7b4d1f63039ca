use serde::{Deserialize, Serialize};

use super::lp::{solve_lp2, HalfPlane};
use crate::geom::Vec2;
use crate::world::{AgentState, WorldState};

/// Rotation applied to the preferred velocity whenever neighbors are in
/// range, so that exactly symmetric encounters resolve to a fixed handedness.
pub const TIE_BREAK_ANGLE: f64 = 1e-4;

/// Fallback separation direction for coincident agents.
const DEGENERATE_DIRECTION: Vec2 = Vec2::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrcaParams {
    /// Seconds of lookahead for agent-agent velocity obstacles.
    pub time_horizon: f64,
    pub neighbor_dist: f64,
    pub max_neighbors: usize,
    pub max_speed: f64,
}

impl Default for OrcaParams {
    fn default() -> Self {
        Self {
            time_horizon: 2.0,
            neighbor_dist: 2.0,
            max_neighbors: 10,
            max_speed: 1.0,
        }
    }
}

/// Reciprocal avoidance constraint that `agent` places on its own velocity
/// because of `other`.
///
/// When the pair is separated, the truncated velocity obstacle over
/// `time_horizon` is used; when they already overlap, the obstacle is built
/// over `dt` so the constraint asks for separation within one step. The
/// boundary passes through `v + u/2`, where `u` is the smallest change that
/// takes the relative velocity out of the obstacle.
pub fn orca_halfplane(agent: &AgentState, other: &AgentState, params: &OrcaParams, dt: f64) -> HalfPlane {
    let mut rel_pos = other.position - agent.position;
    if rel_pos.length_squared() == 0.0 {
        rel_pos = DEGENERATE_DIRECTION * f64::MIN_POSITIVE.sqrt();
    }
    let rel_vel = agent.velocity - other.velocity;
    let dist_sq = rel_pos.length_squared();
    let combined_radius = agent.radius + other.radius;
    let combined_radius_sq = combined_radius * combined_radius;

    let (direction, u) = if dist_sq > combined_radius_sq {
        let inv_horizon = 1.0 / params.time_horizon;
        // Vector from the cutoff circle center to the relative velocity.
        let w = rel_vel - rel_pos * inv_horizon;
        let w_len_sq = w.length_squared();
        let dot = w.dot(rel_pos);

        if dot < 0.0 && dot * dot > combined_radius_sq * w_len_sq {
            // Project on the cutoff circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined_radius * inv_horizon - w_len),
            )
        } else {
            // Project on the nearer leg of the cone.
            let leg = (dist_sq - combined_radius_sq).sqrt();
            let direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined_radius,
                    rel_pos.x * combined_radius + rel_pos.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined_radius,
                    -rel_pos.x * combined_radius + rel_pos.y * leg,
                ) / dist_sq
            };
            (direction, direction * rel_vel.dot(direction) - rel_vel)
        }
    } else {
        // Already colliding: resolve within one time step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.length();
        let unit_w = w.try_normalize().unwrap_or(-DEGENERATE_DIRECTION);
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined_radius * inv_dt - w_len),
        )
    };

    HalfPlane {
        point: agent.velocity + u * 0.5,
        normal: direction.perp(),
    }
}

/// Goal-directed preferred velocity: full speed toward the goal, slowing so
/// that the goal is not overshot within one step.
pub fn preferred_velocity(agent: &AgentState, max_speed: f64, dt: f64) -> Vec2 {
    let to_goal = agent.goal - agent.position;
    let dist = to_goal.length();
    if dist == 0.0 {
        return Vec2::ZERO;
    }
    to_goal * (max_speed.min(dist / dt) / dist)
}

/// Indices (0 = ego) of the agents within `radius` of agent
/// `index`, nearest first, ties by index, at most `limit` of them.
pub(crate) fn nearest_neighbors(world: &WorldState, index: usize, radius: f64, limit: usize) -> Vec<usize> {
    let me = world.agent(index).position;
    let mut found: Vec<(f64, usize)> = (0..world.agent_count())
        .filter(|&j| j != index)
        .map(|j| (world.agent(j).position.distance(me), j))
        .filter(|&(d, _)| d < radius)
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    found.truncate(limit);
    found.into_iter().map(|(_, j)| j).collect()
}

/// ORCA velocity for agent `index` (0 = ego, `i >= 1` = pedestrian `i - 1`),
/// using privileged access to every agent's true state.
pub fn orca_velocity(index: usize, world: &WorldState, params: &OrcaParams, dt: f64) -> Vec2 {
    let agent = world.agent(index);
    let mut preferred = preferred_velocity(agent, params.max_speed, dt);
    let neighbors = nearest_neighbors(world, index, params.neighbor_dist, params.max_neighbors);
    if neighbors.is_empty() {
        return preferred.clamp_length(params.max_speed);
    }
    preferred = preferred.rotate(TIE_BREAK_ANGLE);
    let constraints: Vec<HalfPlane> = neighbors
        .iter()
        .map(|&j| orca_halfplane(agent, world.agent(j), params, dt))
        .collect();
    solve_lp2(&constraints, preferred, params.max_speed)
}
