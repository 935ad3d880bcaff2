//! Policy/value networks over agent graphs.
//!
//! [`GcnNet`] stacks graph convolutions, max-pools over the node axis and
//! feeds two separate MLP heads, so its output does not depend on neighbour
//! order. [`FlatMlpNet`] concatenates node rows in a fixed order and is the
//! order-sensitive baseline. Both carry exact hand-written backward passes.

pub mod checkpoint;
mod gcn;
pub mod linalg;
mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracklets::{complete_adjacency, AgentGraph};
use crate::Real;

pub use gcn::{gcn_layer_backward, gcn_layer_forward, GcnArch, GcnNet};
pub use mlp::{FlatMlpArch, FlatMlpNet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { name: name.into(), shape, data: vec![T::zero(); n] }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn glorot<R: Rng + ?Sized>(name: impl Into<String>, shape: Vec<usize>, rng: &mut R) -> Self {
        let fan_out = *shape.last().expect("weight has a shape");
        let fan_in: usize = shape[..shape.len() - 1].iter().product();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = fan_in * fan_out;
        let data = (0..n).map(|_| T::lit(rng.gen_range(-limit..=limit))).collect();
        Tensor { name: name.into(), shape, data }
    }
}

/// Ordered list of tensors. Gradients and optimizer moments share the
/// layout of the parameters they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.name.clone(), t.shape.clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// Flat element access across tensors, in layout order.
    pub fn flat_get(&self, mut i: usize) -> T {
        for t in &self.tensors {
            if i < t.data.len() {
                return t.data[i];
            }
            i -= t.data.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut i: usize, v: T) {
        for t in &mut self.tensors {
            if i < t.data.len() {
                t.data[i] = v;
                return;
            }
            i -= t.data.len();
        }
        panic!("flat index out of range");
    }

    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, &b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.values_mut() {
            *a *= s;
        }
    }

    pub fn l2_norm(&self) -> T {
        self.values().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &ParamSet<T>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| U::lit(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }
}

/// Node features and adjacency of one agent graph, in the network's scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInput<T> {
    pub n_nodes: usize,
    pub dim: usize,
    /// Row-major `n_nodes × dim`; row 0 is the controlled agent.
    pub features: Vec<T>,
    /// Row-major `n_nodes × n_nodes`.
    pub adjacency: Vec<T>,
}

impl<T: Real> GraphInput<T> {
    pub fn new(n_nodes: usize, dim: usize, features: Vec<T>) -> Self {
        assert_eq!(features.len(), n_nodes * dim, "feature matrix size");
        let adjacency = complete_adjacency(n_nodes).into_iter().map(T::lit).collect();
        GraphInput { n_nodes, dim, features, adjacency }
    }

    pub fn from_graph(g: &AgentGraph) -> Self {
        GraphInput::new(g.n_nodes(), g.dim, g.features.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Same graph with non-agent rows reordered: new row `1 + i` is old row
    /// `1 + perm[i]`.
    pub fn permute_neighbors(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len() + 1, self.n_nodes);
        let mut features = self.row(0).to_vec();
        for &p in perm {
            features.extend_from_slice(self.row(p + 1));
        }
        GraphInput { features, ..self.clone() }
    }
}

/// Action distribution and value estimate for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput<T> {
    pub probs: Vec<T>,
    pub log_probs: Vec<T>,
    pub value: T,
    pub entropy: T,
}

impl<T: Real> PolicyOutput<T> {
    pub fn from_logits(logits: &[T], value: T) -> Self {
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        let log_probs: Vec<T> = logits.iter().map(|&z| z - lse).collect();
        let probs: Vec<T> = log_probs.iter().map(|&l| l.exp()).collect();
        let entropy = -probs
            .iter()
            .zip(&log_probs)
            .map(|(&p, &l)| if p > T::zero() { p * l } else { T::zero() })
            .sum::<T>();
        PolicyOutput { probs, log_probs, value, entropy }
    }

    pub fn log_prob(&self, action: usize) -> T {
        self.log_probs[action]
    }

    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::lit(rng.gen::<f64>());
        let mut acc = T::zero();
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left `u` above the running total
        self.probs.iter().rposition(|&p| p > T::zero()).unwrap_or(0)
    }
}

/// Partial derivatives of a scalar loss with respect to the log-probability
/// of `action`, the policy entropy and the value estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSeeds<T> {
    pub action: usize,
    pub d_log_prob: T,
    pub d_entropy: T,
    pub d_value: T,
}

impl<T: Real> LossSeeds<T> {
    pub fn value_only(d_value: T) -> Self {
        LossSeeds { action: 0, d_log_prob: T::zero(), d_entropy: T::zero(), d_value }
    }

    /// Chain the seeds through log-softmax and entropy to the logits.
    pub fn logit_grad(&self, out: &PolicyOutput<T>) -> Vec<T> {
        out.probs
            .iter()
            .zip(&out.log_probs)
            .enumerate()
            .map(|(k, (&p, &lp))| {
                let onehot = if k == self.action { T::one() } else { T::zero() };
                let d_h = if p > T::zero() { p * (lp + out.entropy) } else { T::zero() };
                self.d_log_prob * (onehot - p) - self.d_entropy * d_h
            })
            .collect()
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub output: PolicyOutput<T>,
    pub(crate) cache: Cache<T>,
}

impl<T: Real> Forward<T> {
    /// Identifies the linear piece the network was evaluated on: the sign
    /// of every ReLU input and, for the GCN, the winning node per pooled
    /// channel. Finite differences are only meaningful within one piece.
    pub fn region(&self) -> Vec<usize> {
        let signs = |v: &[T]| v.iter().map(|&z| usize::from(z > T::zero())).collect::<Vec<_>>();
        let mut out = Vec::new();
        let heads = match &self.cache {
            Cache::Gcn(c) => {
                for p in c.pres() {
                    out.extend(signs(p));
                }
                out.extend(c.argmax());
                c.heads()
            }
            Cache::Mlp(c) => {
                out.extend(signs(c.trunk_pre()));
                for p in &c.trunk().pre {
                    out.extend(signs(p));
                }
                c.heads()
            }
        };
        for h in heads {
            for p in &h.pre {
                out.extend(signs(p));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Gcn(gcn::GcnCache<T>),
    Mlp(mlp::MlpCache<T>),
}

pub trait PolicyNet<T: Real>: Clone + Send + Sync {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn n_actions(&self) -> usize;
    fn forward(&self, input: &GraphInput<T>) -> Forward<T>;
    /// Accumulate parameter gradients of the seeded loss into `grads`.
    fn backward(&self, fwd: &Forward<T>, seeds: &LossSeeds<T>, grads: &mut ParamSet<T>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    TrackletsGcn,
    TrackletsMlp,
}

/// Either architecture behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyModel<T> {
    Gcn(GcnNet<T>),
    Mlp(FlatMlpNet<T>),
}

impl<T: Real> PolicyModel<T> {
    pub fn new<R: Rng + ?Sized>(
        repr: Representation,
        n_nodes: usize,
        node_dim: usize,
        n_actions: usize,
        rng: &mut R,
    ) -> Self {
        match repr {
            Representation::TrackletsGcn => PolicyModel::Gcn(GcnNet::new(GcnArch::standard(node_dim, n_actions), rng)),
            Representation::TrackletsMlp => {
                PolicyModel::Mlp(FlatMlpNet::new(FlatMlpArch::standard(n_nodes, node_dim, n_actions), rng))
            }
        }
    }

    pub fn representation(&self) -> Representation {
        match self {
            PolicyModel::Gcn(_) => Representation::TrackletsGcn,
            PolicyModel::Mlp(_) => Representation::TrackletsMlp,
        }
    }

    pub fn cast<U: Real>(&self) -> PolicyModel<U> {
        match self {
            PolicyModel::Gcn(n) => PolicyModel::Gcn(n.cast()),
            PolicyModel::Mlp(n) => PolicyModel::Mlp(n.cast()),
        }
    }
}

impl<T: Real> PolicyNet<T> for PolicyModel<T> {
    fn params(&self) -> &ParamSet<T> {
        match self {
            PolicyModel::Gcn(n) => n.params(),
            PolicyModel::Mlp(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        match self {
            PolicyModel::Gcn(n) => n.params_mut(),
            PolicyModel::Mlp(n) => n.params_mut(),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            PolicyModel::Gcn(n) => n.n_actions(),
            PolicyModel::Mlp(n) => n.n_actions(),
        }
    }

    fn forward(&self, input: &GraphInput<T>) -> Forward<T> {
        match self {
            PolicyModel::Gcn(n) => n.forward(input),
            PolicyModel::Mlp(n) => n.forward(input),
        }
    }

    fn backward(&self, fwd: &Forward<T>, seeds: &LossSeeds<T>, grads: &mut ParamSet<T>) {
        match self {
            PolicyModel::Gcn(n) => n.backward(fwd, seeds, grads),
            PolicyModel::Mlp(n) => n.backward(fwd, seeds, grads),
        }
    }
}

/// Stack of affine layers with ReLU between them and a linear output.
/// Tensors are `{prefix}.{i}.w` and `{prefix}.{i}.b`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HeadLayout {
    pub first: usize,
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache<T> {
    /// Inputs of each layer (post-activation of the previous one).
    pub inputs: Vec<Vec<T>>,
    /// Pre-activations of each layer.
    pub pre: Vec<Vec<T>>,
}

impl HeadLayout {
    pub fn push_tensors<T: Real, R: Rng + ?Sized>(
        prefix: &str,
        widths: &[usize],
        tensors: &mut Vec<Tensor<T>>,
        rng: &mut R,
    ) -> HeadLayout {
        let first = tensors.len();
        for (i, pair) in widths.windows(2).enumerate() {
            tensors.push(Tensor::glorot(format!("{prefix}.{i}.w"), vec![pair[0], pair[1]], rng));
            tensors.push(Tensor::zeros(format!("{prefix}.{i}.b"), vec![pair[1]]));
        }
        HeadLayout { first, widths: widths.to_vec() }
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &[T]) -> (Vec<T>, HeadCache<T>) {
        let mut cache = HeadCache { inputs: Vec::new(), pre: Vec::new() };
        let mut h = x.to_vec();
        for l in 0..self.n_layers() {
            let w = &params.tensors[self.first + 2 * l].data;
            let b = &params.tensors[self.first + 2 * l + 1].data;
            let z = linalg::affine(&h, w, b);
            cache.inputs.push(h);
            h = if l + 1 < self.n_layers() { linalg::relu(&z) } else { z.clone() };
            cache.pre.push(z);
        }
        (h, cache)
    }

    /// Returns the gradient with respect to the head input.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &HeadCache<T>,
        d_out: &[T],
        grads: &mut ParamSet<T>,
    ) -> Vec<T> {
        let mut d = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            if l + 1 < self.n_layers() {
                linalg::relu_backward(&cache.pre[l], &mut d);
            }
            let w = &params.tensors[self.first + 2 * l].data;
            let (dw, db) = two_mut(&mut grads.tensors, self.first + 2 * l);
            d = linalg::affine_backward(&cache.inputs[l], w, &d, &mut dw.data, &mut db.data);
        }
        d
    }
}

/// Mutable access to tensors `i` and `i + 1`.
pub(crate) fn two_mut<T>(ts: &mut [Tensor<T>], i: usize) -> (&mut Tensor<T>, &mut Tensor<T>) {
    let (a, b) = ts.split_at_mut(i + 1);
    (&mut a[i], &mut b[0])
}
