//! Semantic tracklets: per-object feature histories and KNN agent graphs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::Role;
use crate::tracker::Track;

/// Frames of history per node embedding.
pub const HISTORY: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackletError {
    #[error("K = {k} neighbours requested but only {available} other objects exist")]
    TooManyNeighbors { k: usize, available: usize },
    #[error("no track with id {0}")]
    UnknownTrack(usize),
    #[error("windows are empty; push a frame first")]
    Uninitialized,
    #[error("expected {expected} tracks, got {got}")]
    TrackCount { expected: usize, got: usize },
}

/// Distances to the left, right, bottom and top arena edges.
pub fn global_info(coords: [f64; 2], half_extent: f64) -> [f64; 4] {
    let [x, y] = coords;
    [x + half_extent, half_extent - x, y + half_extent, half_extent - y]
}

/// Width of one frame feature: role one-hot, coordinates, edge distances.
pub fn frame_dim(n_roles: usize) -> usize {
    n_roles + 2 + 4
}

/// Width of a node embedding.
pub fn embedding_dim(n_roles: usize) -> usize {
    HISTORY * frame_dim(n_roles)
}

/// `[role one-hot | x, y | global info]` for one object at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature(Vec<f64>);

impl FrameFeature {
    pub fn new(role: Role, n_roles: usize, coords: [f64; 2], half_extent: f64) -> Self {
        let mut v = vec![0.0; frame_dim(n_roles)];
        v[role.index()] = 1.0;
        v[n_roles] = coords[0];
        v[n_roles + 1] = coords[1];
        v[n_roles + 2..].copy_from_slice(&global_info(coords, half_extent));
        FrameFeature(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn n_roles(&self) -> usize {
        self.0.len() - 6
    }

    pub fn role_onehot(&self) -> &[f64] {
        &self.0[..self.n_roles()]
    }

    pub fn coords(&self) -> [f64; 2] {
        let r = self.n_roles();
        [self.0[r], self.0[r + 1]]
    }

    pub fn global(&self) -> &[f64] {
        &self.0[self.n_roles() + 2..]
    }
}

/// Last [`HISTORY`] features of one object, newest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackletWindow {
    frames: Vec<FrameFeature>,
}

impl TrackletWindow {
    pub fn new(first: FrameFeature) -> Self {
        TrackletWindow { frames: vec![first; HISTORY] }
    }

    pub fn push(&mut self, f: FrameFeature) {
        self.frames.pop();
        self.frames.insert(0, f);
    }

    pub fn frames(&self) -> &[FrameFeature] {
        &self.frames
    }

    /// `[x_t, x_{t-1}, x_{t-2}, x_{t-3}]` concatenated.
    pub fn node_embedding(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.as_slice().iter().copied()).collect()
    }
}

/// One window per track id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackletWindows {
    n_roles: usize,
    half_extent: f64,
    windows: Vec<TrackletWindow>,
}

impl TrackletWindows {
    pub fn new(n_roles: usize, half_extent: f64) -> Self {
        TrackletWindows { n_roles, half_extent, windows: Vec::new() }
    }

    pub fn n_roles(&self) -> usize {
        self.n_roles
    }

    pub fn embedding_dim(&self) -> usize {
        embedding_dim(self.n_roles)
    }

    pub fn window(&self, id: usize) -> Option<&TrackletWindow> {
        self.windows.get(id)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Append the current track states. The first push pads each history by
    /// repetition.
    pub fn push_frame(&mut self, tracks: &[Track]) -> Result<(), TrackletError> {
        let feats = tracks.iter().map(|t| FrameFeature::new(t.role, self.n_roles, t.coords, self.half_extent));
        if self.windows.is_empty() {
            self.windows = feats.map(TrackletWindow::new).collect();
            return Ok(());
        }
        if tracks.len() != self.windows.len() {
            return Err(TrackletError::TrackCount { expected: self.windows.len(), got: tracks.len() });
        }
        for (w, f) in self.windows.iter_mut().zip(feats) {
            w.push(f);
        }
        Ok(())
    }
}

/// Complete graph over one controlled agent and its K nearest objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGraph {
    pub center: usize,
    /// Neighbour track ids, ascending.
    pub neighbors: Vec<usize>,
    pub dim: usize,
    /// Row-major `(K+1) × dim`; row 0 is the agent.
    pub features: Vec<f64>,
}

impl AgentGraph {
    pub fn n_nodes(&self) -> usize {
        self.neighbors.len() + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Track id of node `i`.
    pub fn node_track(&self, i: usize) -> usize {
        if i == 0 {
            self.center
        } else {
            self.neighbors[i - 1]
        }
    }

    /// Complete-graph adjacency: ones off the diagonal, row-major.
    pub fn adjacency(&self) -> Vec<f64> {
        complete_adjacency(self.n_nodes())
    }
}

pub fn complete_adjacency(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect()
}

/// Build the agent's graph from its K nearest tracks by current distance,
/// ties going to the smaller track id.
pub fn knn_graph(
    windows: &TrackletWindows,
    tracks: &[Track],
    agent: usize,
    k: usize,
) -> Result<AgentGraph, TrackletError> {
    if windows.is_empty() {
        return Err(TrackletError::Uninitialized);
    }
    let me = tracks.iter().find(|t| t.id == agent).ok_or(TrackletError::UnknownTrack(agent))?;
    let available = tracks.len() - 1;
    if k > available {
        return Err(TrackletError::TooManyNeighbors { k, available });
    }
    let mut others: Vec<(f64, usize)> = tracks
        .iter()
        .filter(|t| t.id != agent)
        .map(|t| {
            let dx = t.coords[0] - me.coords[0];
            let dy = t.coords[1] - me.coords[1];
            (dx * dx + dy * dy, t.id)
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut neighbors: Vec<usize> = others.into_iter().take(k).map(|(_, id)| id).collect();
    neighbors.sort_unstable();

    let dim = windows.embedding_dim();
    let mut features = Vec::with_capacity((k + 1) * dim);
    for id in std::iter::once(agent).chain(neighbors.iter().copied()) {
        let w = windows.window(id).ok_or(TrackletError::UnknownTrack(id))?;
        features.extend(w.node_embedding());
    }
    Ok(AgentGraph { center: agent, neighbors, dim, features })
}
