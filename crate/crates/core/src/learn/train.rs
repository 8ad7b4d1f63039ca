//! Training loop: rollouts with per-step potential shaping, running
//! observation normalization and clipped-surrogate updates.
//!
//! Each environment worker owns its environment, random stream and a local
//! copy of the observation statistics. Workers only share the (read-only)
//! policy during collection, and their statistics are merged into the global
//! normalizer in worker order at the end of every iteration, so results do
//! not depend on how many threads run the workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{policy_forward, sample_action, NetworkError, PolicyParams};
use super::ppo::{gae, ppo_update, Adam, LossTerms, PpoConfig, PpoError, RolloutBatch};
use crate::encoder::{NormalizerError, RunningNormalizer};
use crate::env::{EnvConfig, EnvError, NavEnv};
use crate::geom::Vec2;
use crate::rng::{self, Domain, StreamRng};
use crate::shaping::{beta_at, total_reward};
use crate::sim::{EgoAction, OutcomeKind};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Normalizer(#[from] NormalizerError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub n_envs: usize,
    /// Steps collected per environment per iteration.
    pub rollout_len: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    /// Collect rollouts on the rayon pool; results are identical either way.
    pub parallel: bool,
    /// Iterations between checkpoints (0 disables periodic checkpoints).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            n_envs: 8,
            rollout_len: 256,
            hidden: 64,
            init_log_std: -0.5,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 5,
            minibatch_size: 256,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            seed: 0,
            parallel: true,
            checkpoint_every: 20,
        }
    }
}

impl TrainConfig {
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip_eps: self.clip_eps,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            lr: self.lr,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn steps_per_iteration(&self) -> u64 {
        (self.n_envs * self.rollout_len) as u64
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub iteration: u64,
    pub episodes: usize,
    pub mean_ext_return: f64,
    pub mean_pss_return: f64,
    pub mean_total_return: f64,
    pub safe_success_rate: f64,
    pub goal_rate: f64,
    pub beta: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str = "step,iteration,episodes,mean_ext_return,mean_pss_return,mean_total_return,safe_success_rate,goal_rate,beta,policy_loss,value_loss,entropy";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.iteration,
            self.episodes,
            self.mean_ext_return,
            self.mean_pss_return,
            self.mean_total_return,
            self.safe_success_rate,
            self.goal_rate,
            self.beta,
            self.policy_loss,
            self.value_loss,
            self.entropy
        )
    }
}

/// Per-episode sums recorded by workers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct EpisodeSums {
    ext: f64,
    pss: f64,
    total: f64,
    kind: Option<OutcomeKind>,
}

struct Worker {
    env: NavEnv,
    /// Global statistics plus this worker's observations since the last merge.
    view: RunningNormalizer,
    /// This worker's observations since the last merge.
    delta: RunningNormalizer,
    current: EpisodeSums,
}

#[derive(Default)]
struct WorkerRollout {
    batch: RolloutBatch,
    bootstrap: f64,
    finished: Vec<EpisodeSums>,
}

impl Worker {
    fn collect(
        &mut self,
        params: &PolicyParams,
        steps: usize,
        beta: f64,
        rng: &mut StreamRng,
    ) -> Result<WorkerRollout, TrainError> {
        let mut out = WorkerRollout::default();
        for _ in 0..steps {
            let raw = self.env.observe();
            self.view.update(raw.as_slice())?;
            self.delta.update(raw.as_slice())?;
            let obs = self.view.normalize(raw.as_slice())?;
            let pi = policy_forward(params, &obs)?;
            let (action, logp) = sample_action(pi.mean, pi.log_std, rng);
            let tr = self.env.step(EgoAction { command_velocity: action })?;
            let reward = total_reward(tr.ext_reward, tr.pss_reward, beta);
            self.current.ext += tr.ext_reward;
            self.current.pss += beta * tr.pss_reward;
            self.current.total += reward;

            let done = tr.outcome.is_some();
            out.batch.observations.push(obs);
            out.batch.actions.push(action);
            out.batch.log_probs.push(logp);
            out.batch.rewards.push(reward);
            out.batch.values.push(pi.value);
            out.batch.dones.push(done);
            if let Some(outcome) = tr.outcome {
                self.current.kind = Some(outcome.kind);
                out.finished.push(std::mem::take(&mut self.current));
                self.env.reset()?;
            }
        }
        let raw = self.env.observe();
        let obs = self.view.normalize(raw.as_slice())?;
        out.bootstrap = policy_forward(params, &obs)?.value;
        Ok(out)
    }
}

/// Training state that can be checkpointed and resumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub normalizer: RunningNormalizer,
    pub step: u64,
    pub iteration: u64,
}

pub struct Trainer {
    pub env_config: EnvConfig,
    pub config: TrainConfig,
    pub state: TrainerState,
    workers: Vec<Worker>,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, config: TrainConfig) -> Result<Self, TrainError> {
        let dim = env_config.encoder.observation_len();
        let mut init_rng = rng::stream(config.seed, Domain::Training, u64::MAX, u64::MAX);
        let params = PolicyParams::init(dim, config.hidden, config.init_log_std, &mut init_rng);
        let state = TrainerState {
            optimizer: Adam::new(&params),
            params,
            normalizer: RunningNormalizer::new(dim),
            step: 0,
            iteration: 0,
        };
        Self::resume(env_config, config, state)
    }

    /// Continues from a saved state. Environments restart with fresh episodes
    /// drawn from streams keyed by the resumed iteration.
    pub fn resume(env_config: EnvConfig, config: TrainConfig, state: TrainerState) -> Result<Self, TrainError> {
        if config.n_envs == 0 || config.rollout_len == 0 || config.hidden == 0 {
            return Err(TrainError::Config("n_envs, rollout_len and hidden must be positive".into()));
        }
        env_config
            .encoder
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        if state.params.obs_dim() != env_config.encoder.observation_len() {
            return Err(TrainError::Network(NetworkError::ShapeMismatch {
                expected: state.params.obs_dim(),
                got: env_config.encoder.observation_len(),
            }));
        }
        let workers = (0..config.n_envs)
            .map(|i| {
                let env = NavEnv::new(env_config.clone(), rng::mix(&[config.seed, i as u64, state.iteration]))?;
                Ok(Worker {
                    env,
                    view: state.normalizer.clone(),
                    delta: state.normalizer.empty_like(),
                    current: EpisodeSums::default(),
                })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(Self {
            env_config,
            config,
            state,
            workers,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.state.step >= self.config.total_steps
    }

    pub fn beta(&self) -> f64 {
        beta_at(self.state.step, &self.env_config.shaping)
    }

    /// Collects one rollout from every worker and applies one update.
    pub fn run_iteration(&mut self) -> Result<TrainLogRow, TrainError> {
        let beta = self.beta();
        let iteration = self.state.iteration;
        let seed = self.config.seed;
        let steps = self.config.rollout_len;
        let params = &self.state.params;
        let collect = |(i, w): (usize, &mut Worker)| {
            let mut rng = rng::stream(seed, Domain::Training, i as u64, iteration);
            w.collect(params, steps, beta, &mut rng)
        };
        let rollouts: Vec<WorkerRollout> = if self.config.parallel {
            self.workers.par_iter_mut().enumerate().map(collect).collect::<Result<_, _>>()?
        } else {
            self.workers.iter_mut().enumerate().map(collect).collect::<Result<_, _>>()?
        };

        for w in &self.workers {
            self.state.normalizer.merge(&w.delta)?;
        }
        for w in &mut self.workers {
            w.view = self.state.normalizer.clone();
            w.delta = self.state.normalizer.empty_like();
        }

        let gamma = self.env_config.shaping.gamma;
        let mut batch = RolloutBatch::default();
        let mut finished = Vec::new();
        for r in rollouts {
            let (adv, ret) = gae(&r.batch.rewards, &r.batch.values, &r.batch.dones, r.bootstrap, gamma, self.config.gae_lambda);
            let b = r.batch;
            batch.observations.extend(b.observations);
            batch.actions.extend(b.actions);
            batch.log_probs.extend(b.log_probs);
            batch.rewards.extend(b.rewards);
            batch.values.extend(b.values);
            batch.dones.extend(b.dones);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
            finished.extend(r.finished);
        }

        let mut update_rng = rng::stream(seed, Domain::Training, u64::MAX, iteration);
        let ppo = self.config.ppo();
        let losses = ppo_update(&mut self.state.params, &mut self.state.optimizer, &mut batch, &ppo, &mut update_rng)?;

        self.state.step += self.config.steps_per_iteration();
        self.state.iteration += 1;
        Ok(log_row(self.state.step, self.state.iteration, beta, &finished, &losses))
    }
}

fn log_row(step: u64, iteration: u64, beta: f64, finished: &[EpisodeSums], losses: &LossTerms) -> TrainLogRow {
    let n = finished.len() as f64;
    let mean = |f: fn(&EpisodeSums) -> f64| finished.iter().map(f).sum::<f64>() / n;
    TrainLogRow {
        step,
        iteration,
        episodes: finished.len(),
        mean_ext_return: mean(|e| e.ext),
        mean_pss_return: mean(|e| e.pss),
        mean_total_return: mean(|e| e.total),
        safe_success_rate: mean(|e| (e.kind == Some(OutcomeKind::SafeSuccess)) as u8 as f64),
        goal_rate: mean(|e| e.kind.is_some_and(|k| k.reached_goal()) as u8 as f64),
        beta,
        policy_loss: losses.policy,
        value_loss: losses.value,
        entropy: losses.entropy,
    }
}

/// Runs training to completion. Returns the final state and the log.
pub fn train(env_config: EnvConfig, config: TrainConfig) -> Result<(TrainerState, Vec<TrainLogRow>), TrainError> {
    let mut trainer = Trainer::new(env_config, config)?;
    let mut log = Vec::new();
    while !trainer.is_finished() {
        log.push(trainer.run_iteration()?);
    }
    Ok((trainer.state, log))
}

/// Deterministic evaluation policy: the Gaussian mean under frozen
/// observation statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedPolicy {
    pub params: PolicyParams,
    pub normalizer: RunningNormalizer,
}

impl LearnedPolicy {
    pub fn act(&self, raw_obs: &[f64]) -> Result<Vec2, TrainError> {
        let obs = self.normalizer.normalize(raw_obs)?;
        Ok(policy_forward(&self.params, &obs)?.mean)
    }
}
