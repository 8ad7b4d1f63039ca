//! Analytic agent controllers: reciprocal velocity obstacles (ORCA) and the
//! social force model. Both serve as pedestrian dynamics and as privileged
//! ego baselines. Every controller is a pure function of the world.

mod lp;
mod orca;
mod sfm;

pub use lp::{solve_lp2, HalfPlane};
pub use orca::{orca_halfplane, orca_velocity, preferred_velocity, OrcaParams, TIE_BREAK_ANGLE};
pub use sfm::{repulsion, sfm_velocity, social_force, SfmParams};

use crate::geom::Vec2;
use crate::world::{PedestrianController, WorldState};

/// Velocity the given controller commands for agent `index` (0 = ego).
pub fn controller_velocity(controller: &PedestrianController, index: usize, world: &WorldState, dt: f64) -> Vec2 {
    match controller {
        PedestrianController::Orca(p) => orca_velocity(index, world, p, dt),
        PedestrianController::Sfm(p) => sfm_velocity(index, world, p, dt),
    }
}
