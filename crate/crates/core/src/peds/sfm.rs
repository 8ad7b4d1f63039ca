use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::world::WorldState;

/// Used when two agents share a center, so the repulsion stays defined.
const DEGENERATE_DIRECTION: Vec2 = Vec2::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmParams {
    /// Repulsion strength `A` (m/s^2).
    pub strength_a: f64,
    /// Repulsion range `B` (m).
    pub range_b: f64,
    pub relaxation_time: f64,
    pub desired_speed: f64,
    pub max_speed: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self {
            strength_a: 2.0,
            range_b: 0.3,
            relaxation_time: 0.5,
            desired_speed: 1.0,
            max_speed: 1.0,
        }
    }
}

/// Pairwise repulsion on an agent at `position` from a neighbor at
/// `neighbor`, with `radius_sum` the sum of both radii.
pub fn repulsion(position: Vec2, neighbor: Vec2, radius_sum: f64, params: &SfmParams) -> Vec2 {
    let offset = position - neighbor;
    let d = offset.length();
    let n_hat = offset.try_normalize().unwrap_or(DEGENERATE_DIRECTION);
    n_hat * (params.strength_a * libm::exp((radius_sum - d) / params.range_b))
}

/// Total social force on agent `index` (0 = ego).
pub fn social_force(index: usize, world: &WorldState, params: &SfmParams, dt: f64) -> Vec2 {
    let agent = world.agent(index);
    let to_goal = agent.goal - agent.position;
    let dist = to_goal.length();
    let desired = if dist > 0.0 {
        to_goal * (params.desired_speed.min(dist / dt) / dist)
    } else {
        Vec2::ZERO
    };
    let mut force = (desired - agent.velocity) / params.relaxation_time;
    for j in (0..world.agent_count()).filter(|&j| j != index) {
        let other = world.agent(j);
        force += repulsion(agent.position, other.position, agent.radius + other.radius, params);
    }
    force
}

/// Social-force velocity update for agent `index`: `v + F dt`, speed-capped.
pub fn sfm_velocity(index: usize, world: &WorldState, params: &SfmParams, dt: f64) -> Vec2 {
    let agent = world.agent(index);
    (agent.velocity + social_force(index, world, params, dt) * dt).clamp_length(params.max_speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::tests::world_with;

    #[test]
    fn equilibrium_without_neighbors() {
        let mut w = world_with(Vec2::new(0.5, 0.5), &[]);
        w.ego.goal = Vec2::new(2.5, 0.5);
        w.ego.velocity = Vec2::new(1.0, 0.0);
        let p = SfmParams::default();
        assert!(social_force(0, &w, &p, 0.1).length() < 1e-15);
        assert_eq!(sfm_velocity(0, &w, &p, 0.1), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn relaxes_toward_goal_direction() {
        let mut w = world_with(Vec2::new(0.5, 0.5), &[]);
        w.ego.goal = Vec2::new(2.5, 0.5);
        let p = SfmParams::default();
        let mut v_prev = 0.0;
        for _ in 0..10 {
            w.ego.velocity = sfm_velocity(0, &w, &p, 0.1);
            assert!(w.ego.velocity.y.abs() < 1e-15);
            assert!(w.ego.velocity.x > v_prev);
            v_prev = w.ego.velocity.x;
        }
    }

    #[test]
    fn contact_repulsion_equals_strength() {
        let p = SfmParams::default();
        let f = repulsion(Vec2::ZERO, Vec2::new(0.3, 0.0), 0.3, &p);
        assert!((f.length() - p.strength_a).abs() < 1e-15);
        assert!(f.x < 0.0);
    }

    #[test]
    fn repulsion_decreases_with_distance() {
        let p = SfmParams::default();
        let near = repulsion(Vec2::ZERO, Vec2::new(0.4, 0.0), 0.3, &p).length();
        let far = repulsion(Vec2::ZERO, Vec2::new(0.8, 0.0), 0.3, &p).length();
        assert!(near > far);
    }

    proptest::proptest! {
        #[test]
        fn repulsion_is_rotation_equivariant(
            x in -2.0f64..2.0, y in -2.0f64..2.0, angle in 0.0f64..6.283,
        ) {
            proptest::prop_assume!(x.hypot(y) > 1e-3);
            let p = SfmParams::default();
            let q = Vec2::new(x, y);
            let f = repulsion(Vec2::ZERO, q, 0.3, &p);
            let fr = repulsion(Vec2::ZERO, q.rotate(angle), 0.3, &p);
            proptest::prop_assert!((f.rotate(angle) - fr).length() < 1e-9);
        }

        #[test]
        fn repulsion_strictly_decreasing(d1 in 0.0f64..3.0, gap in 1e-3f64..1.0) {
            let p = SfmParams::default();
            let a = repulsion(Vec2::ZERO, Vec2::new(d1, 0.0), 0.3, &p).length();
            let b = repulsion(Vec2::ZERO, Vec2::new(d1 + gap, 0.0), 0.3, &p).length();
            proptest::prop_assert!(a > b);
        }
    }
}
