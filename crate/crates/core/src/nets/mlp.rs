use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{relu, relu_backward};
use super::{Cache, Forward, GraphInput, HeadCache, HeadLayout, LossSeeds, NetError, ParamSet, PolicyNet, PolicyOutput};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatMlpArch {
    pub n_nodes: usize,
    pub node_dim: usize,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
}

impl FlatMlpArch {
    /// Two shared hidden layers of width 128.
    pub fn standard(n_nodes: usize, node_dim: usize, n_actions: usize) -> Self {
        FlatMlpArch { n_nodes, node_dim, hidden: vec![128, 128], n_actions }
    }

    pub fn input_dim(&self) -> usize {
        self.n_nodes * self.node_dim
    }
}

/// Order-sensitive baseline: node rows are concatenated, passed through a
/// ReLU trunk and split into linear policy and value outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatMlpNet<T> {
    arch: FlatMlpArch,
    params: ParamSet<T>,
    trunk: HeadLayout,
    policy: HeadLayout,
    value: HeadLayout,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache<T> {
    trunk: HeadCache<T>,
    /// Trunk output before the final ReLU.
    trunk_pre: Vec<T>,
    policy: HeadCache<T>,
    value: HeadCache<T>,
}

impl<T> MlpCache<T> {
    pub(crate) fn trunk(&self) -> &HeadCache<T> {
        &self.trunk
    }

    pub(crate) fn trunk_pre(&self) -> &[T] {
        &self.trunk_pre
    }

    pub(crate) fn heads(&self) -> [&HeadCache<T>; 2] {
        [&self.policy, &self.value]
    }
}

impl<T: Real> FlatMlpNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: FlatMlpArch, rng: &mut R) -> Self {
        let mut tensors = Vec::new();
        let mut tw = vec![arch.input_dim()];
        tw.extend(&arch.hidden);
        let trunk = HeadLayout::push_tensors("trunk", &tw, &mut tensors, rng);
        let last = *tw.last().unwrap();
        let policy = HeadLayout::push_tensors("policy", &[last, arch.n_actions], &mut tensors, rng);
        let value = HeadLayout::push_tensors("value", &[last, 1], &mut tensors, rng);
        FlatMlpNet { arch, params: ParamSet { tensors }, trunk, policy, value }
    }

    pub fn from_params(arch: FlatMlpArch, params: ParamSet<T>) -> Result<Self, NetError> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut net = FlatMlpNet::<T>::new(arch, &mut rng);
        if !net.params.same_layout(&params) {
            return Err(NetError::Shape("tensors do not match the MLP layout".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &FlatMlpArch {
        &self.arch
    }

    pub fn cast<U: Real>(&self) -> FlatMlpNet<U> {
        FlatMlpNet {
            arch: self.arch.clone(),
            params: self.params.cast(),
            trunk: self.trunk.clone(),
            policy: self.policy.clone(),
            value: self.value.clone(),
        }
    }
}

impl<T: Real> PolicyNet<T> for FlatMlpNet<T> {
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
        assert_eq!(input.features.len(), self.arch.input_dim(), "flattened input width");
        let (trunk_pre, trunk) = self.trunk.forward(&self.params, &input.features);
        let h = relu(&trunk_pre);
        let (logits, policy) = self.policy.forward(&self.params, &h);
        let (value, value_cache) = self.value.forward(&self.params, &h);
        Forward {
            output: PolicyOutput::from_logits(&logits, value[0]),
            cache: Cache::Mlp(MlpCache { trunk, trunk_pre, policy, value: value_cache }),
        }
    }

    fn backward(&self, fwd: &Forward<T>, seeds: &LossSeeds<T>, grads: &mut ParamSet<T>) {
        let Cache::Mlp(cache) = &fwd.cache else {
            panic!("forward cache from a different architecture");
        };
        let d_logits = seeds.logit_grad(&fwd.output);
        let mut dh = self.policy.backward(&self.params, &cache.policy, &d_logits, grads);
        let dv = self.value.backward(&self.params, &cache.value, &[seeds.d_value], grads);
        for (a, b) in dh.iter_mut().zip(dv) {
            *a += b;
        }
        relu_backward(&cache.trunk_pre, &mut dh);
        self.trunk.backward(&self.params, &cache.trunk, &dh, grads);
    }
}
