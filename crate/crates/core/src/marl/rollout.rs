//! Episode workers: arena → render → detect → dropout → track → tracklets → policy.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ObsConfig, TrainError};
use crate::arena::{Action, Arena, TaskConfig};
use crate::nets::{GraphInput, PolicyModel, PolicyNet};
use crate::perception::{inject_dropout, Detector};
use crate::tracker::{advance_tracks, init_tracks, TrackSet};
use crate::tracklets::{knn_graph, TrackletWindows};
use crate::Real;

/// One agent's view of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub obs: GraphInput<T>,
    pub action: usize,
    pub reward: T,
    pub value: T,
    pub log_prob: T,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRollout<T> {
    /// `agents[i][t]`; empty when transitions were not recorded.
    pub agents: Vec<Vec<Transition<T>>>,
    /// Sum over steps of the mean per-agent reward.
    pub team_reward: f64,
}

impl<T> EpisodeRollout<T> {
    pub fn n_transitions(&self) -> usize {
        self.agents.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Independent RNG stream for each (purpose, index) pair of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    TrainEpisode,
    EvalEpisode,
    Shuffle,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let tag = match stream {
        Stream::Init => 0u64,
        Stream::TrainEpisode => 1,
        Stream::EvalEpisode => 2,
        Stream::Shuffle => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) | (index & ((1 << 56) - 1)));
    rng
}

/// Everything an episode worker needs, shared read-only between workers.
#[derive(Debug, Clone)]
pub struct Pipeline {
    arena: Arena,
    detector: Detector,
    census: BTreeMap<crate::arena::Role, usize>,
    k: usize,
    role_penalty: f64,
}

impl Pipeline {
    pub fn new(task: &TaskConfig, obs: &ObsConfig) -> Result<Self, TrainError> {
        let arena = Arena::new(task.clone())?;
        let detector = Detector::new(arena.colors().clone(), task.image_size, task.arena_half_extent);
        let k = obs.neighbors(task);
        Ok(Pipeline { arena, detector, census: task.census(), k, role_penalty: obs.role_penalty })
    }

    pub fn task(&self) -> &TaskConfig {
        self.arena.config()
    }

    pub fn n_nodes(&self) -> usize {
        self.k + 1
    }

    pub fn node_dim(&self) -> usize {
        crate::tracklets::embedding_dim(self.task().n_roles())
    }

    /// Run one episode. Agent `i` acts with `models[i]`, or `models[0]` when
    /// parameters are shared.
    pub fn run_episode<T: Real, R: Rng>(
        &self,
        models: &[PolicyModel<T>],
        dropout: f64,
        mode: ActionMode,
        record: bool,
        rng: &mut R,
    ) -> Result<EpisodeRollout<T>, TrainError> {
        let task = self.task();
        let n = task.n_agents;
        let len = task.episode_len;
        let mut state = self.arena.reset(rng);
        let mut tracks: TrackSet = Vec::new();
        let mut windows = TrackletWindows::new(task.n_roles(), task.arena_half_extent);
        let mut agents: Vec<Vec<Transition<T>>> = (0..n).map(|_| Vec::with_capacity(if record { len } else { 0 })).collect();
        let mut team_reward = 0.0;

        for t in 0..len {
            let frame = self.arena.render(&state);
            let dets = inject_dropout(&self.detector.detect(&frame)?, dropout, rng);
            tracks = if t == 0 { init_tracks(&dets, &self.census) } else { advance_tracks(&tracks, &dets, self.role_penalty) };
            windows.push_frame(&tracks)?;

            let mut actions = Vec::with_capacity(n);
            let mut pending = Vec::with_capacity(n);
            for i in 0..n {
                // agents hold the first n roles, one track each
                let graph = knn_graph(&windows, &tracks, i, self.k)?;
                let obs = GraphInput::<T>::from_graph(&graph);
                let model = &models[if models.len() == 1 { 0 } else { i }];
                let out = model.forward(&obs).output;
                let a = match mode {
                    ActionMode::Sample => out.sample(rng),
                    ActionMode::Greedy => out.greedy(),
                };
                actions.push(Action::from_index(a).expect("policy has one output per action"));
                if record {
                    pending.push((obs, a, out.value, out.log_prob(a)));
                }
            }

            let (next, rewards) = self.arena.step(&state, &actions)?;
            state = next;
            team_reward += rewards.iter().sum::<f64>() / n as f64;
            for (i, (obs, action, value, log_prob)) in pending.into_iter().enumerate() {
                agents[i].push(Transition {
                    obs,
                    action,
                    reward: T::lit(rewards[i]),
                    value,
                    log_prob,
                    done: t + 1 == len,
                });
            }
        }
        Ok(EpisodeRollout { agents, team_reward })
    }

    /// Episodes `indices` of a stream, run in parallel. Output order follows
    /// `indices`, so results do not depend on the worker count.
    pub fn collect_rollouts<T: Real>(
        &self,
        models: &[PolicyModel<T>],
        seed: u64,
        stream: Stream,
        indices: std::ops::Range<u64>,
        dropout: f64,
        mode: ActionMode,
        record: bool,
    ) -> Result<Vec<EpisodeRollout<T>>, TrainError> {
        indices
            .into_par_iter()
            .map(|e| {
                let mut rng = stream_rng(seed, stream, e);
                self.run_episode(models, dropout, mode, record, &mut rng)
            })
            .collect()
    }
}
