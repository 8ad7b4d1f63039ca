//! Fixed-dimension observation encoding.
//!
//! An observation is `[ego; knn; summary]`:
//!
//! * ego (7): ego velocity, ego position, unit goal direction, goal distance;
//! * knn (4 * k_max): the nearest pedestrians in distance order, each slot
//!   holding clipped relative position and velocity, with slots past
//!   `min(N, k_cap)` set to a constant padding sentinel;
//! * summary (5 + J + L): crowd pressure and its alignment with the ego
//!   velocity, inverse distances of the J nearest, occupancy fractions for L
//!   radii, active fraction `N / k_max` and mean relative velocity nearby.
//!
//! The length never depends on the number of pedestrians.

mod normalizer;

pub use normalizer::{NormalizerError, RunningNormalizer};

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::world::{local_count, AgentState, WorldState};

pub const EGO_BLOCK_LEN: usize = 7;
pub const SLOT_LEN: usize = 4;
/// Magnitudes below this count as zero when computing the alignment cosine.
const ALIGNMENT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub k_max: usize,
    pub k_cap: usize,
    /// Per-axis bound on relative positions (m).
    pub pos_clip: f64,
    /// Per-axis bound on relative velocities (m/s).
    pub vel_clip: f64,
    pub pad_sentinel: [f64; SLOT_LEN],
    pub j_nearest: usize,
    pub occupancy_radii: Vec<f64>,
    pub velocity_radius: f64,
    pub social_eps: f64,
    /// Length scale of the pressure kernel (m).
    pub sigma_press: f64,
    pub pressure_clip: f64,
    pub inv_dist_clip: f64,
    /// Upper bound for occupancy fractions and the active fraction.
    pub fraction_clip: f64,
    /// Disable to fill up to `k_max` slots instead of `k_cap`.
    pub use_k_cap: bool,
    /// Disable to fill slots in pedestrian list order.
    pub sort_neighbors: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            k_max: 16,
            k_cap: 10,
            pos_clip: 3.0,
            vel_clip: 2.0,
            pad_sentinel: [3.0, 3.0, 0.0, 0.0],
            j_nearest: 3,
            occupancy_radii: vec![0.45, 1.2, 2.0],
            velocity_radius: 1.2,
            social_eps: 0.01,
            sigma_press: 0.8,
            pressure_clip: 5.0,
            inv_dist_clip: 20.0,
            fraction_clip: 4.0,
            use_k_cap: true,
            sort_neighbors: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncoderConfigError {
    #[error("k_cap must satisfy 1 <= k_cap <= k_max (k_cap = {k_cap}, k_max = {k_max})")]
    SlotBudget { k_cap: usize, k_max: usize },
    #[error("clip bounds, radii and eps must be positive")]
    NonPositive,
    #[error("occupancy radii must be strictly increasing")]
    RadiiOrder,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderConfigError> {
        if self.k_cap < 1 || self.k_cap > self.k_max {
            return Err(EncoderConfigError::SlotBudget {
                k_cap: self.k_cap,
                k_max: self.k_max,
            });
        }
        let positive = [
            self.pos_clip,
            self.vel_clip,
            self.velocity_radius,
            self.social_eps,
            self.sigma_press,
            self.pressure_clip,
            self.inv_dist_clip,
            self.fraction_clip,
        ];
        if positive.iter().any(|&x| !(x > 0.0)) || self.occupancy_radii.iter().any(|&r| !(r > 0.0)) {
            return Err(EncoderConfigError::NonPositive);
        }
        if self.occupancy_radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EncoderConfigError::RadiiOrder);
        }
        Ok(())
    }

    pub fn knn_len(&self) -> usize {
        SLOT_LEN * self.k_max
    }

    pub fn summary_len(&self) -> usize {
        5 + self.j_nearest + self.occupancy_radii.len()
    }

    pub fn observation_len(&self) -> usize {
        EGO_BLOCK_LEN + self.knn_len() + self.summary_len()
    }

    /// Number of filled slots for `n` pedestrians.
    pub fn active_slots(&self, n: usize) -> usize {
        n.min(if self.use_k_cap { self.k_cap } else { self.k_max })
    }

    /// Declared `(low, high)` range of every summary component, in order.
    pub fn summary_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, self.pressure_clip), (-1.0, 1.0)];
        b.extend(std::iter::repeat((0.0, self.inv_dist_clip)).take(self.j_nearest));
        b.extend(std::iter::repeat((0.0, self.fraction_clip)).take(self.occupancy_radii.len() + 1));
        b.extend([(-self.vel_clip, self.vel_clip); 2]);
        b
    }
}

/// Flat observation vector with block accessors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn ego<'a>(&'a self, _cfg: &EncoderConfig) -> &'a [f64] {
        &self.0[..EGO_BLOCK_LEN]
    }

    pub fn knn<'a>(&'a self, cfg: &EncoderConfig) -> &'a [f64] {
        &self.0[EGO_BLOCK_LEN..EGO_BLOCK_LEN + cfg.knn_len()]
    }

    pub fn summary<'a>(&'a self, cfg: &EncoderConfig) -> &'a [f64] {
        &self.0[EGO_BLOCK_LEN + cfg.knn_len()..]
    }

    pub fn slot<'a>(&'a self, cfg: &EncoderConfig, k: usize) -> &'a [f64] {
        &self.knn(cfg)[SLOT_LEN * k..SLOT_LEN * (k + 1)]
    }
}

/// `[v0, p0, dg / max(|dg|, eps), |dg|]`.
pub fn encode_ego(world: &WorldState, cfg: &EncoderConfig) -> [f64; EGO_BLOCK_LEN] {
    let ego = &world.ego;
    let dg = ego.goal - ego.position;
    let d = dg.length();
    let dir = dg / d.max(cfg.social_eps);
    [ego.velocity.x, ego.velocity.y, ego.position.x, ego.position.y, dir.x, dir.y, d]
}

fn distances(world: &WorldState) -> Vec<f64> {
    world
        .pedestrians
        .iter()
        .map(|p| (p.position - world.ego.position).length())
        .collect()
}

/// Pedestrian indices by non-decreasing ego distance, ties by index.
pub fn sort_neighbors(world: &WorldState) -> Vec<usize> {
    let d = distances(world);
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    order
}

pub fn encode_knn(world: &WorldState, cfg: &EncoderConfig) -> Vec<f64> {
    let order: Vec<usize> = if cfg.sort_neighbors {
        sort_neighbors(world)
    } else {
        (0..world.pedestrians.len()).collect()
    };
    let filled = cfg.active_slots(world.pedestrians.len());
    let ego = &world.ego;
    let mut out = Vec::with_capacity(cfg.knn_len());
    for &i in order.iter().take(filled) {
        let p = &world.pedestrians[i];
        let dp = (p.position - ego.position).clip_axes(cfg.pos_clip);
        let dv = (p.velocity - ego.velocity).clip_axes(cfg.vel_clip);
        out.extend_from_slice(&[dp.x, dp.y, dv.x, dv.y]);
    }
    for _ in filled..cfg.k_max {
        out.extend_from_slice(&cfg.pad_sentinel);
    }
    out
}

/// Pedestrians in an order that depends only on their states, so sums over
/// them are bit-identical under any relabeling.
fn canonical_order(world: &WorldState) -> Vec<&AgentState> {
    let ego = world.ego.position;
    let key = |p: &AgentState| {
        [
            (p.position - ego).length(),
            p.position.x,
            p.position.y,
            p.velocity.x,
            p.velocity.y,
        ]
    };
    let mut peds: Vec<&AgentState> = world.pedestrians.iter().collect();
    peds.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    peds
}

/// Aggregated repulsive interaction vector acting on the ego.
pub fn pressure_vector(world: &WorldState, cfg: &EncoderConfig) -> Vec2 {
    let ego = world.ego.position;
    canonical_order(world).into_iter().fold(Vec2::ZERO, |acc, p| {
        let dp = p.position - ego;
        let d = dp.length();
        acc - dp * (libm::exp(-d / cfg.sigma_press) / d.max(cfg.social_eps))
    })
}

/// `(P, A)`: log-scaled pressure magnitude and its cosine with the ego velocity.
pub fn crowd_pressure(world: &WorldState, cfg: &EncoderConfig) -> (f64, f64) {
    let f = pressure_vector(world, cfg);
    let magnitude = f.length();
    let pressure = libm::log1p(magnitude).clamp(0.0, cfg.pressure_clip);
    let speed = world.ego.velocity.length();
    let alignment = if magnitude < ALIGNMENT_EPS || speed < ALIGNMENT_EPS {
        0.0
    } else {
        (f.dot(world.ego.velocity) / (magnitude * speed)).clamp(-1.0, 1.0)
    };
    (pressure, alignment)
}

pub fn encode_summary(world: &WorldState, cfg: &EncoderConfig) -> Vec<f64> {
    let (pressure, alignment) = crowd_pressure(world, cfg);
    let mut d = distances(world);
    d.sort_by(f64::total_cmp);

    let k_max = cfg.k_max as f64;
    let mut out = Vec::with_capacity(cfg.summary_len());
    out.push(pressure);
    out.push(alignment);
    for j in 0..cfg.j_nearest {
        out.push(
            d.get(j)
                .map_or(0.0, |&dj| (1.0 / (dj + cfg.social_eps)).clamp(0.0, cfg.inv_dist_clip)),
        );
    }
    for &r in &cfg.occupancy_radii {
        out.push((local_count(world, r) as f64 / k_max).clamp(0.0, cfg.fraction_clip));
    }
    out.push((world.pedestrians.len() as f64 / k_max).clamp(0.0, cfg.fraction_clip));

    let ego = &world.ego;
    let rv_sq = cfg.velocity_radius * cfg.velocity_radius;
    let (sum, count) = canonical_order(world)
        .into_iter()
        .filter(|p| (p.position - ego.position).length_squared() <= rv_sq)
        .fold((Vec2::ZERO, 0usize), |(s, c), p| (s + (p.velocity - ego.velocity), c + 1));
    let mean = (sum / count.max(1) as f64).clip_axes(cfg.vel_clip);
    out.push(mean.x);
    out.push(mean.y);
    out
}

pub fn encode(world: &WorldState, cfg: &EncoderConfig) -> Observation {
    let mut v = Vec::with_capacity(cfg.observation_len());
    v.extend_from_slice(&encode_ego(world, cfg));
    v.extend(encode_knn(world, cfg));
    v.extend(encode_summary(world, cfg));
    Observation(v)
}
