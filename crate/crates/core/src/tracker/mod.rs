//! Identity-stable tracking of a fixed object population.
//!
//! Each frame the previous tracks are matched to the new detections by an
//! unbalanced assignment, padded to a square problem with zero-cost
//! surrogate entries. A track matched to a surrogate keeps its previous
//! role and position.

pub mod assignment;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arena::Role;
use crate::perception::Detection;

pub use assignment::{solve_assignment, Assignment, AssignmentError, Cost, CostMatrix};

pub const DEFAULT_ROLE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub role: Role,
    pub coords: [f64; 2],
    /// Frames since the last matched detection.
    pub staleness: u32,
}

pub type TrackSet = Vec<Track>;

/// Square cost matrix of side `max(tracks, detections)`. Rows past the last
/// track and columns past the last detection are surrogates with zero cost.
pub fn build_cost_matrix(tracks: &[Track], dets: &[Detection], role_penalty: f64) -> CostMatrix<f64> {
    let n = tracks.len().max(dets.len());
    let mut cost = CostMatrix::zeros(n);
    for (o, t) in tracks.iter().enumerate() {
        for (k, d) in dets.iter().enumerate() {
            let dx = t.coords[0] - d.coords[0];
            let dy = t.coords[1] - d.coords[1];
            let role_cost = if t.role == d.role { 0.0 } else { role_penalty };
            cost.set(o, k, dx * dx + dy * dy + role_cost);
        }
    }
    cost
}

/// Match tracks to detections and update them. Unmatched detections are
/// dropped; unmatched tracks are carried forward.
pub fn advance_tracks(tracks: &[Track], dets: &[Detection], role_penalty: f64) -> TrackSet {
    let cost = build_cost_matrix(tracks, dets, role_penalty);
    let assignment = solve_assignment(&cost).expect("cost matrix is square and non-negative");
    tracks
        .iter()
        .zip(&assignment.columns)
        .map(|(t, &k)| match dets.get(k) {
            Some(d) => Track { coords: d.coords, staleness: 0, ..*t },
            None => Track { staleness: t.staleness.saturating_add(1), ..*t },
        })
        .collect()
}

/// Bootstrap tracks from the first frame: detections are ordered by
/// (role, x, y); roles short of their census count get placeholders at the
/// arena center. Surplus detections of a role keep the largest blobs.
pub fn init_tracks(dets: &[Detection], census: &BTreeMap<Role, usize>) -> TrackSet {
    let mut tracks = Vec::with_capacity(census.values().sum());
    for (&role, &count) in census {
        let mut mine: Vec<&Detection> = dets.iter().filter(|d| d.role == role).collect();
        if mine.len() > count {
            // stable sort keeps (x, y) order among equal areas
            mine.sort_by(|a, b| cmp_xy(a, b));
            mine.sort_by_key(|d| std::cmp::Reverse(d.area.unwrap_or(0)));
            mine.truncate(count);
        }
        mine.sort_by(|a, b| cmp_xy(a, b));
        for d in &mine {
            tracks.push(Track { id: 0, role, coords: d.coords, staleness: 0 });
        }
        for _ in mine.len()..count {
            tracks.push(Track { id: 0, role, coords: [0.0, 0.0], staleness: 1 });
        }
    }
    for (i, t) in tracks.iter_mut().enumerate() {
        t.id = i;
    }
    tracks
}

fn cmp_xy(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    a.coords[0].total_cmp(&b.coords[0]).then(a.coords[1].total_cmp(&b.coords[1]))
}
