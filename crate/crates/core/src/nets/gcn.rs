use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{matmul, matmul_a_bt, matmul_at_b_acc, relu, relu_backward};
use super::{Cache, Forward, GraphInput, HeadCache, HeadLayout, LossSeeds, NetError, ParamSet, PolicyNet, PolicyOutput, Tensor};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnArch {
    pub input_dim: usize,
    pub gcn_widths: Vec<usize>,
    /// Hidden widths of each head MLP.
    pub head_hidden: Vec<usize>,
    pub n_actions: usize,
}

impl GcnArch {
    /// Two graph convolutions of width 64 and heads with one hidden layer of 64.
    pub fn standard(input_dim: usize, n_actions: usize) -> Self {
        GcnArch { input_dim, gcn_widths: vec![64, 64], head_hidden: vec![64], n_actions }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut d = self.input_dim;
        for &w in &self.gcn_widths {
            dims.push((d, w));
            d = w;
        }
        dims
    }

    fn pooled_dim(&self) -> usize {
        *self.gcn_widths.last().unwrap_or(&self.input_dim)
    }
}

/// Shared graph convolutions → node max-pool → separate policy and value MLPs.
///
/// Tensor layout: `gcn{l}.w_other`, `gcn{l}.w_self` per layer, then the
/// policy head (`policy.{i}.w/b`), then the value head (`value.{i}.w/b`).
#[derive(Debug, Clone, PartialEq)]
pub struct GcnNet<T> {
    arch: GcnArch,
    params: ParamSet<T>,
    policy: HeadLayout,
    value: HeadLayout,
}

#[derive(Debug, Clone)]
pub(crate) struct GcnCache<T> {
    n_nodes: usize,
    adjacency: Vec<T>,
    /// Φ_{l-1} for each layer.
    inputs: Vec<Vec<T>>,
    /// A·Φ_{l-1} for each layer.
    aggs: Vec<Vec<T>>,
    pres: Vec<Vec<T>>,
    /// Winning node per pooled channel.
    argmax: Vec<usize>,
    policy: HeadCache<T>,
    value: HeadCache<T>,
}

impl<T> GcnCache<T> {
    pub(crate) fn pres(&self) -> &[Vec<T>] {
        &self.pres
    }

    pub(crate) fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub(crate) fn heads(&self) -> [&HeadCache<T>; 2] {
        [&self.policy, &self.value]
    }
}

impl<T: Real> GcnNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: GcnArch, rng: &mut R) -> Self {
        let mut tensors = Vec::new();
        for (l, (din, dout)) in arch.layer_dims().into_iter().enumerate() {
            tensors.push(Tensor::glorot(format!("gcn{l}.w_other"), vec![din, dout], rng));
            tensors.push(Tensor::glorot(format!("gcn{l}.w_self"), vec![din, dout], rng));
        }
        let pooled = arch.pooled_dim();
        let mut pw = vec![pooled];
        pw.extend(&arch.head_hidden);
        pw.push(arch.n_actions);
        let policy = HeadLayout::push_tensors("policy", &pw, &mut tensors, rng);
        let mut vw = vec![pooled];
        vw.extend(&arch.head_hidden);
        vw.push(1);
        let value = HeadLayout::push_tensors("value", &vw, &mut tensors, rng);
        GcnNet { arch, params: ParamSet { tensors }, policy, value }
    }

    /// Rebuild from loaded tensors, checking them against the layout `arch` implies.
    pub fn from_params(arch: GcnArch, params: ParamSet<T>) -> Result<Self, NetError> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut net = GcnNet::<T>::new(arch, &mut rng);
        if !net.params.same_layout(&params) {
            return Err(NetError::Shape("tensors do not match the GCN layout".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &GcnArch {
        &self.arch
    }

    pub fn cast<U: Real>(&self) -> GcnNet<U> {
        GcnNet {
            arch: self.arch.clone(),
            params: self.params.cast(),
            policy: self.policy.clone(),
            value: self.value.clone(),
        }
    }

    fn layer(&self, l: usize) -> (&Tensor<T>, &Tensor<T>) {
        (&self.params.tensors[2 * l], &self.params.tensors[2 * l + 1])
    }
}

/// One graph convolution: `ReLU((A·Φ·W_other + Φ·W_self) / n_nodes)`.
pub fn gcn_layer_forward<T: Real>(
    phi: &[T],
    n_nodes: usize,
    adjacency: &[T],
    w_other: &Tensor<T>,
    w_self: &Tensor<T>,
) -> Result<Vec<T>, NetError> {
    let (agg, pre) = layer_pre(phi, n_nodes, adjacency, w_other, w_self)?;
    drop(agg);
    Ok(relu(&pre))
}

fn layer_pre<T: Real>(
    phi: &[T],
    n: usize,
    adjacency: &[T],
    w_other: &Tensor<T>,
    w_self: &Tensor<T>,
) -> Result<(Vec<T>, Vec<T>), NetError> {
    if w_other.shape.len() != 2 || w_other.shape != w_self.shape {
        return Err(NetError::Shape(format!("W_other {:?} vs W_self {:?}", w_other.shape, w_self.shape)));
    }
    let (din, dout) = (w_other.shape[0], w_other.shape[1]);
    if n == 0 || phi.len() != n * din {
        return Err(NetError::Shape(format!("feature matrix has {} entries, expected {n}x{din}", phi.len())));
    }
    if adjacency.len() != n * n {
        return Err(NetError::Shape(format!("adjacency has {} entries, expected {n}x{n}", adjacency.len())));
    }
    let agg = aggregate(adjacency, phi, n, din);
    let mut pre = matmul(&agg, &w_other.data, n, din, dout);
    let own = matmul(phi, &w_self.data, n, din, dout);
    let inv_n = T::one() / T::lit(n as f64);
    for (p, o) in pre.iter_mut().zip(own) {
        *p = (*p + o) * inv_n;
    }
    Ok((agg, pre))
}

/// `A·Φ`, accumulated in f64 so that for f32 features the neighbour sum is
/// exact and does not depend on row order.
fn aggregate<T: Real>(adjacency: &[T], phi: &[T], n: usize, din: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * din];
    let mut acc = vec![0.0f64; din];
    for i in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..n {
            let a = adjacency[i * n + j].to_f64_lossy();
            if a != 0.0 {
                for (s, &x) in acc.iter_mut().zip(&phi[j * din..(j + 1) * din]) {
                    *s += a * x.to_f64_lossy();
                }
            }
        }
        for (o, &s) in out[i * din..(i + 1) * din].iter_mut().zip(&acc) {
            *o = T::lit(s);
        }
    }
    out
}

/// Gradients of one graph convolution given `d_out` (w.r.t. its output).
/// Accumulates into `d_w_other`/`d_w_self` and returns the gradient with
/// respect to `phi`.
pub fn gcn_layer_backward<T: Real>(
    phi: &[T],
    agg: &[T],
    pre: &[T],
    n: usize,
    adjacency: &[T],
    w_other: &Tensor<T>,
    w_self: &Tensor<T>,
    mut d_out: Vec<T>,
    d_w_other: &mut [T],
    d_w_self: &mut [T],
) -> Vec<T> {
    let (din, dout) = (w_other.shape[0], w_other.shape[1]);
    relu_backward(pre, &mut d_out);
    let inv_n = T::one() / T::lit(n as f64);
    for d in d_out.iter_mut() {
        *d *= inv_n;
    }
    matmul_at_b_acc(agg, &d_out, n, din, dout, d_w_other);
    matmul_at_b_acc(phi, &d_out, n, din, dout, d_w_self);
    let d_agg = matmul_a_bt(&d_out, &w_other.data, n, dout, din);
    let mut d_phi = matmul_a_bt(&d_out, &w_self.data, n, dout, din);
    matmul_at_b_acc(adjacency, &d_agg, n, n, din, &mut d_phi);
    d_phi
}

impl<T: Real> PolicyNet<T> for GcnNet<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn n_actions(&self) -> usize {
        self.arch.n_actions
    }

    fn forward(&self, input: &GraphInput<T>) -> Forward<T> {
        let n = input.n_nodes;
        assert_eq!(input.dim, self.arch.input_dim, "node feature width");
        let mut phi = input.features.clone();
        let mut inputs = Vec::new();
        let mut aggs = Vec::new();
        let mut pres = Vec::new();
        for l in 0..self.arch.gcn_widths.len() {
            let (wo, ws) = self.layer(l);
            let (agg, pre) = layer_pre(&phi, n, &input.adjacency, wo, ws).expect("shapes fixed by the architecture");
            let next = relu(&pre);
            inputs.push(std::mem::replace(&mut phi, next));
            aggs.push(agg);
            pres.push(pre);
        }

        let width = self.arch.pooled_dim();
        let mut argmax = vec![0usize; width];
        let mut pooled = phi[..width].to_vec();
        for node in 1..n {
            for c in 0..width {
                let v = phi[node * width + c];
                if v > pooled[c] {
                    pooled[c] = v;
                    argmax[c] = node;
                }
            }
        }

        let (logits, policy) = self.policy.forward(&self.params, &pooled);
        let (value, value_cache) = self.value.forward(&self.params, &pooled);
        Forward {
            output: PolicyOutput::from_logits(&logits, value[0]),
            cache: Cache::Gcn(GcnCache {
                n_nodes: n,
                adjacency: input.adjacency.clone(),
                inputs,
                aggs,
                pres,
                argmax,
                policy,
                value: value_cache,
            }),
        }
    }

    fn backward(&self, fwd: &Forward<T>, seeds: &LossSeeds<T>, grads: &mut ParamSet<T>) {
        let Cache::Gcn(cache) = &fwd.cache else {
            panic!("forward cache from a different architecture");
        };
        let d_logits = seeds.logit_grad(&fwd.output);
        let mut d_pooled = self.policy.backward(&self.params, &cache.policy, &d_logits, grads);
        let dv = self.value.backward(&self.params, &cache.value, &[seeds.d_value], grads);
        for (a, b) in d_pooled.iter_mut().zip(dv) {
            *a += b;
        }

        let n = cache.n_nodes;
        let width = self.arch.pooled_dim();
        let mut d_out = vec![T::zero(); n * width];
        for (c, (&node, &g)) in cache.argmax.iter().zip(&d_pooled).enumerate() {
            d_out[node * width + c] = g;
        }
        for l in (0..self.arch.gcn_widths.len()).rev() {
            let (wo, ws) = self.layer(l);
            let (gwo, gws) = super::two_mut(&mut grads.tensors, 2 * l);
            d_out = gcn_layer_backward(
                &cache.inputs[l],
                &cache.aggs[l],
                &cache.pres[l],
                n,
                &cache.adjacency,
                wo,
                ws,
                d_out,
                &mut gwo.data,
                &mut gws.data,
            );
        }
    }
}
