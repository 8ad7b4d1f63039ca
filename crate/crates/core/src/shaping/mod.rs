//! Reward assembly: extrinsic navigation reward plus potential-based social
//! shaping with density-adaptive scaling of the proxemic costs.

pub mod gridworld;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::StepEvents;
use crate::world::{local_count, ArenaConfig, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum ShapingError {
    #[error("distance {d} outside the {zone} zone")]
    DomainError { d: f64, zone: &'static str },
    #[error("shaping reward {value} exceeds bound {bound}")]
    BoundExceeded { value: f64, bound: f64 },
}

/// Which shaping variant is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    /// Extrinsic reward only (shaping weight forced to zero).
    None,
    /// Proxemic potential without density scaling (`eta = 1`).
    PssOnly,
    /// Proxemic potential with density-adaptive scaling.
    PssSocial,
}

impl ShapingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShapingMode::None => "none",
            ShapingMode::PssOnly => "pss_only",
            ShapingMode::PssSocial => "pss_social",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ShapingConfig {
    pub mode: ShapingMode,
    /// Intimate-zone threshold (m).
    pub d_I: f64,
    /// Personal-zone threshold (m).
    pub d_P: f64,
    pub k_rep: f64,
    pub sigma_I: f64,
    /// Exponent clip `c`.
    pub clip_c: f64,
    pub kappa_P: f64,
    pub w_g: f64,
    pub w_I: f64,
    pub w_P: f64,
    /// Radius for the local count feeding `eta` (m).
    pub r_s: f64,
    pub gamma: f64,
    pub beta_0: f64,
    pub beta_T: f64,
    /// Environment steps over which beta anneals linearly.
    pub anneal_steps: u64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            mode: ShapingMode::PssSocial,
            d_I: 0.45,
            d_P: 1.2,
            k_rep: 1.0,
            sigma_I: 0.15,
            clip_c: 10.0,
            kappa_P: 0.5,
            w_g: 1.0,
            w_I: 1.0,
            w_P: 0.5,
            r_s: 1.2,
            gamma: 0.99,
            beta_0: 1.0,
            beta_T: 0.2,
            anneal_steps: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicConfig {
    pub goal_reward: f64,
    /// Applied once per colliding pedestrian per step.
    pub collision_penalty: f64,
    pub step_penalty: f64,
    /// Reward per meter of goal-distance reduction.
    pub progress_weight: f64,
}

impl Default for ExtrinsicConfig {
    fn default() -> Self {
        Self {
            goal_reward: 10.0,
            collision_penalty: -5.0,
            step_penalty: -0.01,
            progress_weight: 1.0,
        }
    }
}

/// Intimate-zone cost, defined for `0 <= d < d_I`.
pub fn phi_i(d: f64, cfg: &ShapingConfig) -> Result<f64, ShapingError> {
    if !(0.0..cfg.d_I).contains(&d) {
        return Err(ShapingError::DomainError { d, zone: "intimate" });
    }
    Ok(phi_i_unchecked(d, cfg))
}

fn phi_i_unchecked(d: f64, cfg: &ShapingConfig) -> f64 {
    let z = ((cfg.d_I - d) / cfg.sigma_I).clamp(-cfg.clip_c, cfg.clip_c);
    cfg.k_rep * libm::exp(z)
}

/// Personal-zone cost, defined for `d_I <= d < d_P`.
pub fn phi_p(d: f64, cfg: &ShapingConfig) -> Result<f64, ShapingError> {
    if !(cfg.d_I..cfg.d_P).contains(&d) {
        return Err(ShapingError::DomainError { d, zone: "personal" });
    }
    Ok(cfg.kappa_P * (cfg.d_P - d))
}

/// `(C_I, C_P)`: summed intimate and personal costs. Each pedestrian falls
/// in at most one zone.
pub fn zone_costs(world: &WorldState, cfg: &ShapingConfig) -> (f64, f64) {
    let ego = world.ego.position;
    world.pedestrians.iter().fold((0.0, 0.0), |(ci, cp), p| {
        let d = p.position.distance(ego);
        if d < cfg.d_I {
            (ci + phi_i_unchecked(d, cfg), cp)
        } else if d < cfg.d_P {
            (ci, cp + cfg.kappa_P * (cfg.d_P - d))
        } else {
            (ci, cp)
        }
    })
}

/// Density-adaptive scale `1 / sqrt(max(1, n))`.
pub fn eta(n: usize) -> f64 {
    1.0 / (n.max(1) as f64).sqrt()
}

/// Scale applied to the proxemic costs under the configured mode.
pub fn density_scale(world: &WorldState, cfg: &ShapingConfig) -> f64 {
    match cfg.mode {
        ShapingMode::PssSocial => eta(local_count(world, cfg.r_s)),
        ShapingMode::PssOnly | ShapingMode::None => 1.0,
    }
}

/// Potential `-w_g |p0 - g| - eta (w_I C_I + w_P C_P)`.
pub fn potential(world: &WorldState, cfg: &ShapingConfig) -> f64 {
    let (ci, cp) = zone_costs(world, cfg);
    -cfg.w_g * world.goal_distance() - density_scale(world, cfg) * (cfg.w_I * ci + cfg.w_P * cp)
}

/// `gamma * phi_next - phi_prev`.
pub fn pss_reward(phi_prev: f64, phi_next: f64, gamma: f64) -> f64 {
    gamma * phi_next - phi_prev
}

pub fn extrinsic_reward(prev: &WorldState, next: &WorldState, events: &StepEvents, cfg: &ExtrinsicConfig) -> f64 {
    let mut r = cfg.step_penalty;
    if events.ego_reached_goal {
        r += cfg.goal_reward;
    }
    r += cfg.collision_penalty * events.collisions.len() as f64;
    r + cfg.progress_weight * (prev.goal_distance() - next.goal_distance())
}

/// Shaping weight after `step` environment steps; zero in `None` mode.
pub fn beta_at(step: u64, cfg: &ShapingConfig) -> f64 {
    if cfg.mode == ShapingMode::None {
        return 0.0;
    }
    if cfg.anneal_steps == 0 || step >= cfg.anneal_steps {
        return cfg.beta_T;
    }
    let frac = step as f64 / cfg.anneal_steps as f64;
    cfg.beta_0 + (cfg.beta_T - cfg.beta_0) * frac
}

pub fn total_reward(ext: f64, pss: f64, beta: f64) -> f64 {
    ext + beta * pss
}

/// Upper bound on `|pss_reward|` for worlds with at most `max_pedestrians`.
pub fn pss_bound(cfg: &ShapingConfig, arena: &ArenaConfig, max_pedestrians: usize) -> f64 {
    let k = max_pedestrians as f64;
    (cfg.gamma + 1.0)
        * (cfg.w_g * arena.diagonal()
            + cfg.w_I * cfg.k_rep * libm::exp(cfg.clip_c) * k
            + cfg.w_P * cfg.kappa_P * cfg.d_P * k)
}

/// Per-episode shaping state: the previous potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialTracker {
    phi_prev: f64,
}

impl PotentialTracker {
    /// Initializes from a freshly reset world.
    pub fn reset(world: &WorldState, cfg: &ShapingConfig) -> Self {
        Self {
            phi_prev: potential(world, cfg),
        }
    }

    pub fn phi_prev(&self) -> f64 {
        self.phi_prev
    }

    /// Shaping reward for the transition into `next`, advancing the tracker.
    pub fn advance(&mut self, next: &WorldState, cfg: &ShapingConfig) -> f64 {
        let phi_next = potential(next, cfg);
        let r = pss_reward(self.phi_prev, phi_next, cfg.gamma);
        self.phi_prev = phi_next;
        r
    }
}
