//! Deterministic 2D crowd-navigation simulator with a density-invariant
//! observation encoding, potential-based proxemic reward shaping, analytic
//! pedestrian controllers, a small policy-gradient learner and a
//! density-sweep benchmark harness.

pub mod config;
pub mod encoder;
pub mod env;
pub mod evalbench;
pub mod geom;
pub mod learn;
pub mod peds;
pub mod rng;
pub mod shaping;
pub mod sim;
pub mod trace;
pub mod world;

pub use geom::Vec2;
pub use learn::checkpoint::write_atomic;
