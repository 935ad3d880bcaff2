//! Multi-agent PPO over tracklet graphs.
//!
//! Each agent optimizes its own clipped-surrogate objective on the graph it
//! observes. Collection fans out over episodes with rayon; every episode
//! draws from its own RNG stream keyed by (seed, episode index), so results
//! are identical for any worker count.

mod ppo;
mod returns;
mod rollout;

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{ArenaError, TaskConfig};
use crate::nets::{PolicyModel, PolicyNet, Representation};
use crate::perception::PerceptionError;
use crate::tracker::DEFAULT_ROLE_PENALTY;
use crate::tracklets::TrackletError;
use crate::Real;

pub use ppo::{sample_loss, surrogate_term, value_loss, Adam, AdamConfig, PpoCoefficients, SampleLoss};
pub use returns::{advantage, n_step_return, n_step_returns, standardize};
pub use rollout::{stream_rng, ActionMode, EpisodeRollout, Pipeline, Stream, Transition};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error(transparent)]
    Arena(#[from] ArenaError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Tracklet(#[from] TrackletError),
    #[error("non-finite loss or parameters in update {batch} (after {episodes} episodes)")]
    NonFinite { batch: u64, episodes: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Rewards are multiplied by this before computing returns, so the
    /// value head learns scaled targets. Reported rewards are unscaled.
    pub reward_scale: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Worker threads for collection and updates; 0 uses rayon's default.
    pub workers: usize,
    pub total_episodes: u64,
    pub episodes_per_batch: u64,
    pub eval_interval: u64,
    pub eval_episodes: u64,
    /// Evaluation rounds averaged into the final metric.
    pub final_rounds: usize,
    pub standardize_advantages: bool,
    /// One set of parameters for all agents instead of one per agent.
    pub share_params: bool,
    /// Fill `wallclock_s` in metrics rows. Off by default so that reruns
    /// reproduce metrics files byte for byte.
    pub record_wallclock: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.95,
            n_step: 5,
            clip_eps: 0.2,
            entropy_coef: 0.02,
            value_coef: 0.5,
            reward_scale: 0.1,
            epochs: 4,
            minibatch_size: 100,
            learning_rate: 3e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            workers: 0,
            total_episodes: 30_000,
            episodes_per_batch: 16,
            eval_interval: 1_000,
            eval_episodes: 100,
            final_rounds: 10,
            standardize_advantages: true,
            share_params: false,
            record_wallclock: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.n_step == 0 {
            return bad("n_step must be at least 1");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.episodes_per_batch == 0 {
            return bad("epochs, minibatch_size and episodes_per_batch must be positive");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 || self.final_rounds == 0 {
            return bad("eval_interval, eval_episodes and final_rounds must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning_rate and adam_eps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.entropy_coef >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if !(self.reward_scale > 0.0) || !self.reward_scale.is_finite() {
            return bad("reward_scale must be positive");
        }
        Ok(())
    }
}

/// How agents observe the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    pub representation: Representation,
    /// Neighbours per agent graph; `None` means every other object.
    pub k_neighbors: Option<usize>,
    /// Probability of deleting each detection during training.
    pub dropout: f64,
    /// Apply the same dropout during evaluation.
    pub eval_dropout: bool,
    pub role_penalty: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig {
            representation: Representation::TrackletsGcn,
            k_neighbors: None,
            dropout: 0.0,
            eval_dropout: false,
            role_penalty: DEFAULT_ROLE_PENALTY,
        }
    }
}

impl ObsConfig {
    pub fn neighbors(&self, task: &TaskConfig) -> usize {
        self.k_neighbors.unwrap_or(task.n_entities() - 1)
    }

    pub fn validate(&self, task: &TaskConfig) -> Result<(), TrainError> {
        let m = task.n_entities();
        let k = self.neighbors(task);
        if k == 0 || k > m - 1 {
            return Err(TrainError::Config(format!("k_neighbors must lie in 1..={}, got {k}", m - 1)));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout must lie in [0, 1], got {}", self.dropout)));
        }
        if !(self.role_penalty >= 0.0) {
            return Err(TrainError::Config("role_penalty must be non-negative".into()));
        }
        Ok(())
    }

    pub fn eval_rate(&self) -> f64 {
        if self.eval_dropout {
            self.dropout
        } else {
            0.0
        }
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub train_episodes: u64,
    pub eval_round: u32,
    pub mean_eval_reward: f64,
    pub std_eval_reward: f64,
    pub wallclock_s: Option<f64>,
    pub loss_policy: f64,
    pub loss_value: f64,
    pub entropy: f64,
}

pub const METRICS_COLUMNS: [&str; 8] = [
    "train_episodes",
    "eval_round",
    "mean_eval_reward",
    "std_eval_reward",
    "wallclock_s",
    "loss_policy",
    "loss_value",
    "entropy",
];

/// Mean over the last `rounds` evaluation rounds.
pub fn final_metric(rows: &[MetricsRow], rounds: usize) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let tail = &rows[rows.len().saturating_sub(rounds)..];
    Some(tail.iter().map(|r| r.mean_eval_reward).sum::<f64>() / tail.len() as f64)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Loss statistics averaged over every minibatch sample seen.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub samples: u64,
}

impl UpdateStats {
    fn add(&mut self, o: &UpdateStats) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.samples += o.samples;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let n = self.samples.max(1) as f64;
        (self.policy_loss / n, self.value_loss / n, self.entropy / n)
    }

    fn is_finite(&self) -> bool {
        self.policy_loss.is_finite() && self.value_loss.is_finite() && self.entropy.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub final_metric: Option<f64>,
    /// Set when training stopped early; the trainer then holds the last
    /// finite parameters.
    pub aborted: Option<String>,
}

/// Greedy evaluation on the fixed evaluation stream. Returns one team
/// reward per episode.
pub fn evaluate<T: Real>(
    pipeline: &Pipeline,
    models: &[PolicyModel<T>],
    seed: u64,
    episodes: u64,
    dropout: f64,
) -> Result<Vec<f64>, TrainError> {
    let eps = pipeline.collect_rollouts(models, seed, Stream::EvalEpisode, 0..episodes, dropout, ActionMode::Greedy, false)?;
    Ok(eps.iter().map(|e| e.team_reward).collect())
}

struct Sample<'a, T> {
    tr: &'a Transition<T>,
    ret: T,
    adv: T,
}

pub struct Trainer<T> {
    pipeline: Pipeline,
    obs: ObsConfig,
    cfg: TrainerConfig,
    seed: u64,
    models: Vec<PolicyModel<T>>,
    optims: Vec<Adam<T>>,
    episodes_done: u64,
    batches_done: u64,
    pool: Option<rayon::ThreadPool>,
}

impl<T: Real> Trainer<T> {
    pub fn new(task: &TaskConfig, obs: &ObsConfig, cfg: &TrainerConfig, seed: u64) -> Result<Self, TrainError> {
        task.validate()?;
        obs.validate(task)?;
        cfg.validate()?;
        let pipeline = Pipeline::new(task, obs)?;
        let groups = if cfg.share_params { 1 } else { task.n_agents };
        let models: Vec<PolicyModel<T>> = (0..groups)
            .map(|i| {
                let mut rng = stream_rng(seed, Stream::Init, i as u64);
                PolicyModel::new(obs.representation, pipeline.n_nodes(), pipeline.node_dim(), crate::arena::Action::COUNT, &mut rng)
            })
            .collect();
        let adam = AdamConfig {
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.adam_beta1),
            beta2: T::lit(cfg.adam_beta2),
            eps: T::lit(cfg.adam_eps),
        };
        let optims = models.iter().map(|m| Adam::new(adam, m.params())).collect();
        let pool = match cfg.workers {
            0 => None,
            w => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?,
            ),
        };
        Ok(Trainer {
            pipeline,
            obs: obs.clone(),
            cfg: cfg.clone(),
            seed,
            models,
            optims,
            episodes_done: 0,
            batches_done: 0,
            pool,
        })
    }

    pub fn models(&self) -> &[PolicyModel<T>] {
        &self.models
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    pub fn evaluate(&self) -> Result<Vec<f64>, TrainError> {
        self.install(|| evaluate(&self.pipeline, &self.models, self.seed, self.cfg.eval_episodes, self.obs.eval_rate()))
    }

    /// Collect `episodes` training episodes and apply one PPO update. On a
    /// non-finite loss or parameter the previous parameters are restored.
    pub fn train_batch(&mut self, episodes: u64) -> Result<UpdateStats, TrainError> {
        let start = self.episodes_done;
        let rollouts = self.install(|| {
            self.pipeline.collect_rollouts(
                &self.models,
                self.seed,
                Stream::TrainEpisode,
                start..start + episodes,
                self.obs.dropout,
                ActionMode::Sample,
                true,
            )
        })?;
        let snapshot = (self.models.clone(), self.optims.clone());
        let stats = self.update(&rollouts);
        self.batches_done += 1;
        self.episodes_done += episodes;
        let finite = stats.is_finite() && self.models.iter().all(|m| m.params().all_finite());
        if !finite {
            (self.models, self.optims) = snapshot;
            return Err(TrainError::NonFinite { batch: self.batches_done, episodes: self.episodes_done });
        }
        Ok(stats)
    }

    fn group_samples<'a>(&self, rollouts: &'a [EpisodeRollout<T>], group: usize) -> Vec<Sample<'a, T>> {
        let gamma = T::lit(self.cfg.gamma);
        let scale = T::lit(self.cfg.reward_scale);
        let n_agents = self.pipeline.task().n_agents;
        let agents: Vec<usize> = if self.models.len() == 1 { (0..n_agents).collect() } else { vec![group] };
        let mut samples = Vec::new();
        for ep in rollouts {
            for &i in &agents {
                let traj = &ep.agents[i];
                let rewards: Vec<T> = traj.iter().map(|t| t.reward * scale).collect();
                let values: Vec<T> = traj.iter().map(|t| t.value).collect();
                let dones: Vec<bool> = traj.iter().map(|t| t.done).collect();
                let rets = n_step_returns(&rewards, &values, &dones, gamma, self.cfg.n_step);
                for (tr, ret) in traj.iter().zip(rets) {
                    samples.push(Sample { tr, ret, adv: advantage(ret, tr.value) });
                }
            }
        }
        if self.cfg.standardize_advantages {
            let mut advs: Vec<T> = samples.iter().map(|s| s.adv).collect();
            standardize(&mut advs);
            for (s, a) in samples.iter_mut().zip(advs) {
                s.adv = a;
            }
        }
        samples
    }

    fn update(&mut self, rollouts: &[EpisodeRollout<T>]) -> UpdateStats {
        let coef = PpoCoefficients {
            clip_eps: T::lit(self.cfg.clip_eps),
            entropy_coef: T::lit(self.cfg.entropy_coef),
            value_coef: T::lit(self.cfg.value_coef),
        };
        let groups: Vec<Vec<Sample<T>>> = (0..self.models.len()).map(|g| self.group_samples(rollouts, g)).collect();
        let (epochs, mb) = (self.cfg.epochs, self.cfg.minibatch_size);
        let (seed, batch) = (self.seed, self.batches_done);
        let mut models = std::mem::take(&mut self.models);
        let mut optims = std::mem::take(&mut self.optims);
        let per_group: Vec<UpdateStats> = self.install(|| {
            models
                .par_iter_mut()
                .zip(optims.par_iter_mut())
                .zip(groups.par_iter())
                .enumerate()
                .map(|(g, ((model, opt), samples))| {
                    let mut rng = stream_rng(seed, Stream::Shuffle, (batch << 8) | g as u64);
                    update_group(model, opt, samples, &coef, epochs, mb, &mut rng)
                })
                .collect()
        });
        self.models = models;
        self.optims = optims;
        let mut total = UpdateStats::default();
        for s in &per_group {
            total.add(s);
        }
        total
    }

    /// Full schedule: batches of training episodes with an evaluation round
    /// after every `eval_interval` episodes. `on_row` sees each row as it is
    /// produced.
    pub fn run(&mut self, mut on_row: impl FnMut(&MetricsRow)) -> Result<TrainOutcome, TrainError> {
        let clock = Instant::now();
        let mut rows = Vec::new();
        let mut window = UpdateStats::default();
        let mut aborted = None;
        while self.episodes_done < self.cfg.total_episodes {
            let n = self.cfg.episodes_per_batch.min(self.cfg.total_episodes - self.episodes_done);
            match self.train_batch(n) {
                Ok(stats) => window.add(&stats),
                Err(e @ TrainError::NonFinite { .. }) => {
                    log::error!("{e}; keeping the last finite parameters");
                    aborted = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
            let round = self.episodes_done / self.cfg.eval_interval;
            if round > rows.len() as u64 {
                let rewards = self.evaluate()?;
                let (mean, std) = mean_std(&rewards);
                let (loss_policy, loss_value, entropy) = window.mean();
                let row = MetricsRow {
                    train_episodes: self.episodes_done,
                    eval_round: round as u32,
                    mean_eval_reward: mean,
                    std_eval_reward: std,
                    wallclock_s: self.cfg.record_wallclock.then(|| clock.elapsed().as_secs_f64()),
                    loss_policy,
                    loss_value,
                    entropy,
                };
                log::info!(
                    "episodes {} round {} reward {:.3} ± {:.3}",
                    row.train_episodes,
                    row.eval_round,
                    row.mean_eval_reward,
                    row.std_eval_reward
                );
                on_row(&row);
                rows.push(row);
                window = UpdateStats::default();
            }
        }
        let final_metric = final_metric(&rows, self.cfg.final_rounds);
        Ok(TrainOutcome { rows, final_metric, aborted })
    }
}

fn update_group<T: Real, R: rand::Rng>(
    model: &mut PolicyModel<T>,
    opt: &mut Adam<T>,
    samples: &[Sample<T>],
    coef: &PpoCoefficients<T>,
    epochs: usize,
    mb: usize,
    rng: &mut R,
) -> UpdateStats {
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let mut grads = model.params().zeros_like();
            for &j in chunk {
                let s = &samples[j];
                let fwd = model.forward(&s.tr.obs);
                let (loss, seeds) = sample_loss(&fwd, s.tr.action, s.tr.log_prob, s.adv, s.ret, coef, chunk.len());
                model.backward(&fwd, &seeds, &mut grads);
                stats.policy_loss -= loss.surrogate.to_f64_lossy();
                stats.value_loss += loss.value_error.to_f64_lossy();
                stats.entropy += loss.entropy.to_f64_lossy();
                stats.samples += 1;
            }
            if !grads.all_finite() {
                stats.policy_loss = f64::NAN;
                return stats;
            }
            opt.step(model.params_mut(), &grads);
        }
    }
    stats
}
