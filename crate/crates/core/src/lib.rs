//! Visual multi-agent reinforcement learning from rendered frames.
//!
//! The pipeline runs `arena` (particle world + rasterizer) → `perception`
//! (color thresholding) → `tracker` (assignment-based identity tracking) →
//! `tracklets` (per-object feature histories and KNN graphs) → `nets`
//! (permutation-invariant GCN policy/value networks) → `marl` (multi-agent
//! PPO trainer).
//!
//! Numeric code in `nets`, `marl` and the assignment solver is generic over
//! the scalar type; the aliases at the crate root fix the precision used by
//! the trainer and the command-line tools.

pub mod arena;
pub mod marl;
pub mod nets;
pub mod perception;
pub mod scalar;
pub mod tracker;
pub mod tracklets;

pub use scalar::Real;

/// Scalar type used for training and checkpoints.
pub type Precision = f32;

pub type GcnNet = nets::GcnNet<Precision>;
pub type FlatMlpNet = nets::FlatMlpNet<Precision>;
pub type PolicyModel = nets::PolicyModel<Precision>;
pub type ParamSet = nets::ParamSet<Precision>;
pub type Trainer = marl::Trainer<Precision>;

/// Double-precision variants, used by gradient checks.
pub type GcnNet64 = nets::GcnNet<f64>;
pub type FlatMlpNet64 = nets::FlatMlpNet<f64>;
pub type PolicyModel64 = nets::PolicyModel<f64>;
