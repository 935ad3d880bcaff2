//! Deterministic multi-agent particle world and its rasterizer.
//!
//! Entities follow damped double-integrator dynamics with soft pairwise
//! contacts. The only state handed to learners is the frame produced by
//! [`Arena::render`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::ColorMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArenaError {
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} actions (one per agent), got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("episode already finished at step {0}")]
    EpisodeOver(usize),
}

/// Categorical identity of an object class. Every agent has its own role;
/// landmarks, preys and the ball share one role per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Role(pub u8);

impl Role {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CoopNav,
    PreyPredator,
    CoopPush,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::CoopNav => "coop_nav",
            Task::PreyPredator => "prey_predator",
            Task::CoopPush => "coop_push",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Agent,
    Prey,
    Landmark,
    Ball,
}

impl EntityKind {
    /// Landmarks are static markers and never take part in contacts.
    pub fn is_dynamic(self) -> bool {
        !matches!(self, EntityKind::Landmark)
    }

    pub fn mass(self) -> f64 {
        match self {
            EntityKind::Ball => 4.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Radii {
    pub agent: f64,
    pub prey: f64,
    pub landmark: f64,
    pub ball: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Radii { agent: 0.05, prey: 0.05, landmark: 0.05, ball: 0.1 }
    }
}

impl Radii {
    pub fn of(&self, kind: EntityKind) -> f64 {
        match kind {
            EntityKind::Agent => self.agent,
            EntityKind::Prey => self.prey,
            EntityKind::Landmark => self.landmark,
            EntityKind::Ball => self.ball,
        }
    }

    fn max(&self) -> f64 {
        self.agent.max(self.prey).max(self.landmark).max(self.ball)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub task: Task,
    pub n_agents: usize,
    pub episode_len: usize,
    pub dt: f64,
    pub accel_gain: f64,
    pub damping: f64,
    pub contact_stiffness: f64,
    /// Agent top speed; preys move 1.3 times faster.
    pub agent_max_speed: f64,
    pub arena_half_extent: f64,
    pub entity_radii: Radii,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            task: Task::CoopNav,
            n_agents: 3,
            episode_len: 25,
            dt: 0.1,
            accel_gain: 5.0,
            damping: 0.5,
            contact_stiffness: 100.0,
            agent_max_speed: 1.0,
            arena_half_extent: 1.0,
            entity_radii: Radii::default(),
            image_size: 64,
            seed: 0,
        }
    }
}

pub const PREY_SPEED_RATIO: f64 = 1.3;
const SPAWN_EXTENT: f64 = 0.9;
const SPAWN_TRIES: usize = 100;

impl TaskConfig {
    pub fn coop_nav(n_agents: usize) -> Self {
        TaskConfig { task: Task::CoopNav, n_agents, ..Default::default() }
    }

    pub fn prey_predator(n_agents: usize) -> Self {
        TaskConfig { task: Task::PreyPredator, n_agents, ..Default::default() }
    }

    pub fn coop_push(n_agents: usize) -> Self {
        TaskConfig { task: Task::CoopPush, n_agents, episode_len: 50, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ArenaError> {
        let bad = |msg: String| Err(ArenaError::InvalidConfig(msg));
        if self.n_agents < 2 {
            return bad(format!("n_agents must be at least 2, got {}", self.n_agents));
        }
        if self.task == Task::PreyPredator && !self.n_agents.is_multiple_of(3) {
            return bad(format!("prey_predator needs n_agents divisible by 3, got {}", self.n_agents));
        }
        if self.episode_len == 0 {
            return bad("episode_len must be positive".into());
        }
        if !(self.dt > 0.0) || !(self.accel_gain >= 0.0) || !(self.agent_max_speed > 0.0) {
            return bad("dt, accel_gain and agent_max_speed must be positive".into());
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad(format!("damping must lie in [0, 1), got {}", self.damping));
        }
        if !(self.contact_stiffness >= 0.0) {
            return bad("contact_stiffness must be non-negative".into());
        }
        if !(self.arena_half_extent > 0.0) {
            return bad("arena_half_extent must be positive".into());
        }
        let r = &self.entity_radii;
        for (name, v) in [("agent", r.agent), ("prey", r.prey), ("landmark", r.landmark), ("ball", r.ball)] {
            if !(v > 0.0 && v < self.arena_half_extent) {
                return bad(format!("{name} radius {v} outside (0, arena_half_extent)"));
            }
        }
        if self.image_size < 32 {
            return bad(format!("image_size must be at least 32, got {}", self.image_size));
        }
        if self.n_roles() > u8::MAX as usize {
            return bad("too many roles".into());
        }
        Ok(())
    }

    /// Entity kinds in canonical order: agents, scripted entities, then
    /// landmarks or ball.
    pub fn layout(&self) -> Vec<(Role, EntityKind)> {
        let n = self.n_agents;
        let mut out: Vec<(Role, EntityKind)> = (0..n).map(|i| (Role(i as u8), EntityKind::Agent)).collect();
        let shared = Role(n as u8);
        match self.task {
            Task::CoopNav => out.extend((0..n).map(|_| (shared, EntityKind::Landmark))),
            Task::PreyPredator => out.extend((0..n / 3).map(|_| (shared, EntityKind::Prey))),
            Task::CoopPush => {
                out.push((shared, EntityKind::Ball));
                out.push((Role(n as u8 + 1), EntityKind::Landmark));
            }
        }
        out
    }

    pub fn n_entities(&self) -> usize {
        self.layout().len()
    }

    pub fn n_roles(&self) -> usize {
        match self.task {
            Task::CoopNav | Task::PreyPredator => self.n_agents + 1,
            Task::CoopPush => self.n_agents + 2,
        }
    }

    /// Expected number of objects per role.
    pub fn census(&self) -> BTreeMap<Role, usize> {
        let mut census = BTreeMap::new();
        for (role, _) in self.layout() {
            *census.entry(role).or_insert(0) += 1;
        }
        census
    }

    pub fn max_speed(&self, kind: EntityKind) -> f64 {
        match kind {
            EntityKind::Prey => self.agent_max_speed * PREY_SPEED_RATIO,
            _ => self.agent_max_speed,
        }
    }

    /// Largest entity radius in pixels at the configured resolution.
    pub fn max_radius_px(&self) -> f64 {
        self.radius_to_px(self.entity_radii.max())
    }

    pub fn radius_to_px(&self, r: f64) -> f64 {
        r / (2.0 * self.arena_half_extent) * (self.image_size as f64 - 1.0)
    }
}

/// Pixel index of a world coordinate along one axis.
pub fn world_to_pixel(x: f64, half_extent: f64, size: usize) -> i64 {
    ((x / half_extent + 1.0) / 2.0 * (size as f64 - 1.0)).round() as i64
}

/// Inverse of [`world_to_pixel`] for fractional pixel positions.
pub fn pixel_to_world(p: f64, half_extent: f64, size: usize) -> f64 {
    (p / (size as f64 - 1.0) * 2.0 - 1.0) * half_extent
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    pub role: Role,
    pub kind: EntityKind,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
    pub controllable: bool,
}

impl EntityState {
    pub fn speed(&self) -> f64 {
        norm(self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step_index: usize,
    pub entities: Vec<EntityState>,
}

impl WorldState {
    pub fn agents(&self) -> impl Iterator<Item = &EntityState> {
        self.entities.iter().filter(|e| e.controllable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Noop,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Noop, Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 5;

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn direction(self) -> [f64; 2] {
        match self {
            Action::Noop => [0.0, 0.0],
            Action::Up => [0.0, 1.0],
            Action::Down => [0.0, -1.0],
            Action::Left => [-1.0, 0.0],
            Action::Right => [1.0, 0.0],
        }
    }
}

/// H×W RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Frame {
    pub fn black(width: usize, height: usize) -> Self {
        Frame { width, height, data: vec![0; width * height * 3] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn is_black(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    /// Binary PPM (P6) dump for debugging.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    /// Fill a disc around an integer pixel center, clipped to the frame.
    pub fn fill_disc(&mut self, cx: i64, cy: i64, radius_px: f64, rgb: [u8; 3]) {
        let reach = radius_px.floor() as i64;
        let r2 = radius_px * radius_px;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if ((dx * dx + dy * dy) as f64) > r2 {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    self.set_pixel(x as usize, y as usize, rgb);
                }
            }
        }
    }
}

/// A task instance: configuration plus the palette used for rendering.
#[derive(Debug, Clone)]
pub struct Arena {
    cfg: TaskConfig,
    colors: ColorMap,
}

impl Arena {
    pub fn new(cfg: TaskConfig) -> Result<Self, ArenaError> {
        cfg.validate()?;
        let colors = ColorMap::palette(cfg.n_roles())
            .ok_or_else(|| ArenaError::InvalidConfig(format!("no palette for {} roles", cfg.n_roles())))?;
        Ok(Arena { cfg, colors })
    }

    pub fn with_colors(cfg: TaskConfig, colors: ColorMap) -> Result<Self, ArenaError> {
        cfg.validate()?;
        for role in cfg.census().keys() {
            if colors.color(*role).is_none() {
                return Err(ArenaError::InvalidConfig(format!("no color for role {role}")));
            }
        }
        Ok(Arena { cfg, colors })
    }

    pub fn config(&self) -> &TaskConfig {
        &self.cfg
    }

    pub fn colors(&self) -> &ColorMap {
        &self.colors
    }

    /// Random initial placement in the inner square, resampling overlapping
    /// spawns a bounded number of times.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        let h = self.cfg.arena_half_extent;
        let mut entities: Vec<EntityState> = Vec::new();
        for (role, kind) in self.cfg.layout() {
            let radius = self.cfg.entity_radii.of(kind);
            let mut pos = [0.0; 2];
            for attempt in 0..SPAWN_TRIES {
                pos = [
                    rng.gen_range(-SPAWN_EXTENT..=SPAWN_EXTENT) * h,
                    rng.gen_range(-SPAWN_EXTENT..=SPAWN_EXTENT) * h,
                ];
                let clear = entities.iter().all(|e| dist(e.position, pos) >= e.radius + radius);
                if clear {
                    break;
                }
                if attempt == SPAWN_TRIES - 1 {
                    log::debug!("spawn of {role} overlaps after {SPAWN_TRIES} tries");
                }
            }
            entities.push(EntityState {
                role,
                kind,
                position: pos,
                velocity: [0.0; 2],
                radius,
                controllable: kind == EntityKind::Agent,
            });
        }
        WorldState { step_index: 0, entities }
    }

    /// Advance one step. Returns the next state and one reward per agent.
    pub fn step(&self, state: &WorldState, actions: &[Action]) -> Result<(WorldState, Vec<f64>), ArenaError> {
        let cfg = &self.cfg;
        let n_agents = state.agents().count();
        if actions.len() != n_agents {
            return Err(ArenaError::ActionCount { expected: n_agents, got: actions.len() });
        }
        if state.step_index >= cfg.episode_len {
            return Err(ArenaError::EpisodeOver(state.step_index));
        }

        let ents = &state.entities;
        let forces = self.contact_forces(ents);
        let flee = self.flee_directions(ents);
        let h = cfg.arena_half_extent;

        let mut next = state.clone();
        next.step_index += 1;
        let mut agent_i = 0;
        for (i, e) in next.entities.iter_mut().enumerate() {
            if !e.kind.is_dynamic() {
                continue;
            }
            let control = match e.kind {
                EntityKind::Agent => {
                    let d = actions[agent_i].direction();
                    agent_i += 1;
                    scale(d, cfg.accel_gain)
                }
                EntityKind::Prey => scale(flee[i], cfg.accel_gain * PREY_SPEED_RATIO),
                _ => [0.0; 2],
            };
            let m = e.kind.mass();
            let mut v = [0.0; 2];
            for k in 0..2 {
                v[k] = e.velocity[k] * (1.0 - cfg.damping) + (control[k] + forces[i][k] / m) * cfg.dt;
            }
            let vmax = cfg.max_speed(e.kind);
            let s = norm(v);
            if s > vmax {
                v = scale(v, vmax / s);
            }
            e.velocity = v;
            for (p, vk) in e.position.iter_mut().zip(v) {
                *p = (*p + vk * cfg.dt).clamp(-h, h);
            }
        }

        let r = self.reward(&next);
        Ok((next, vec![r; n_agents]))
    }

    fn contact_forces(&self, ents: &[EntityState]) -> Vec<[f64; 2]> {
        let k = self.cfg.contact_stiffness;
        let mut f = vec![[0.0; 2]; ents.len()];
        for i in 0..ents.len() {
            if !ents[i].kind.is_dynamic() {
                continue;
            }
            for j in (i + 1)..ents.len() {
                if !ents[j].kind.is_dynamic() {
                    continue;
                }
                let delta = sub(ents[i].position, ents[j].position);
                let d = norm(delta);
                let pen = ents[i].radius + ents[j].radius - d;
                if pen <= 0.0 || d == 0.0 {
                    continue;
                }
                let push = scale(delta, k * pen / d);
                for c in 0..2 {
                    f[i][c] += push[c];
                    f[j][c] -= push[c];
                }
            }
        }
        f
    }

    /// Unit direction down the gradient of Σ 1/d over all agents.
    fn flee_directions(&self, ents: &[EntityState]) -> Vec<[f64; 2]> {
        ents.iter()
            .map(|e| {
                if e.kind != EntityKind::Prey {
                    return [0.0; 2];
                }
                let mut g = [0.0; 2];
                for a in ents.iter().filter(|a| a.kind == EntityKind::Agent) {
                    let delta = sub(e.position, a.position);
                    let d = norm(delta).max(1e-6);
                    let w = 1.0 / (d * d * d);
                    g[0] += delta[0] * w;
                    g[1] += delta[1] * w;
                }
                let n = norm(g);
                if n > 0.0 {
                    scale(g, 1.0 / n)
                } else {
                    g
                }
            })
            .collect()
    }

    /// Shared team reward evaluated on a state.
    pub fn reward(&self, state: &WorldState) -> f64 {
        let ents = &state.entities;
        let of_kind = |k: EntityKind| ents.iter().filter(move |e| e.kind == k);
        match self.cfg.task {
            Task::CoopNav => -of_kind(EntityKind::Landmark)
                .map(|l| {
                    of_kind(EntityKind::Agent)
                        .map(|a| dist(a.position, l.position))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>(),
            Task::PreyPredator => {
                let agents: Vec<_> = of_kind(EntityKind::Agent).collect();
                let mut r = 0.0;
                for (i, a) in agents.iter().enumerate() {
                    for p in of_kind(EntityKind::Prey) {
                        if touching(a, p) {
                            r += 10.0;
                        }
                    }
                    for b in &agents[i + 1..] {
                        if touching(a, b) {
                            r -= 5.0;
                        }
                    }
                }
                r
            }
            Task::CoopPush => {
                let ball = of_kind(EntityKind::Ball).next().expect("coop_push has a ball");
                let mark = of_kind(EntityKind::Landmark).next().expect("coop_push has a landmark");
                -dist(ball.position, mark.position)
            }
        }
    }

    /// Rasterize a state: filled discs on black, later entities on top.
    pub fn render(&self, state: &WorldState) -> Frame {
        let size = self.cfg.image_size;
        let h = self.cfg.arena_half_extent;
        let mut frame = Frame::black(size, size);
        for e in &state.entities {
            let Some(rgb) = self.colors.color(e.role) else { continue };
            let cx = world_to_pixel(e.position[0], h, size);
            let cy = world_to_pixel(e.position[1], h, size);
            frame.fill_disc(cx, cy, self.cfg.radius_to_px(e.radius), rgb);
        }
        frame
    }
}

fn touching(a: &EntityState, b: &EntityState) -> bool {
    dist(a.position, b.position) < a.radius + b.radius
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn scale(a: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] * s, a[1] * s]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}
