//! Clipped surrogate, value regression and the Adam update.

use crate::nets::{Forward, LossSeeds, ParamSet};
use crate::Real;

/// `min(ξ·D, clip(ξ, 1−ε, 1+ε)·D)` and its derivative with respect to ξ,
/// which is zero whenever the clipped branch is selected.
pub fn surrogate_term<T: Real>(ratio: T, adv: T, eps: T) -> (T, T) {
    let unclipped = ratio * adv;
    let clipped = ratio.max(T::one() - eps).min(T::one() + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, T::zero())
    }
}

/// Mean squared error between returns and value estimates.
pub fn value_loss<T: Real>(returns: &[T], values: &[T]) -> T {
    assert_eq!(returns.len(), values.len());
    if returns.is_empty() {
        return T::zero();
    }
    let sum = returns.iter().zip(values).map(|(&r, &v)| (r - v) * (r - v)).sum::<T>();
    sum / T::lit(returns.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoCoefficients<T> {
    pub clip_eps: T,
    pub entropy_coef: T,
    pub value_coef: T,
}

/// Per-sample pieces of the loss, before averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss<T> {
    pub ratio: T,
    pub surrogate: T,
    pub entropy: T,
    pub value_error: T,
}

/// Loss contribution of one sample in a minibatch of `batch` samples, with
/// the seeds for [`crate::nets::PolicyNet::backward`]. The minibatch loss is
/// `−mean(surrogate) − λ·mean(entropy) + c_v·mean((R − V)²)`.
pub fn sample_loss<T: Real>(
    fwd: &Forward<T>,
    action: usize,
    log_prob_old: T,
    adv: T,
    ret: T,
    coef: &PpoCoefficients<T>,
    batch: usize,
) -> (SampleLoss<T>, LossSeeds<T>) {
    let out = &fwd.output;
    let ratio = (out.log_prob(action) - log_prob_old).exp();
    let (surrogate, d_ratio) = surrogate_term(ratio, adv, coef.clip_eps);
    let scale = T::one() / T::lit(batch as f64);
    let err = out.value - ret;
    let seeds = LossSeeds {
        action,
        // dξ/dlogπ = ξ
        d_log_prob: -(d_ratio * ratio) * scale,
        d_entropy: -coef.entropy_coef * scale,
        d_value: coef.value_coef * (err + err) * scale,
    };
    (SampleLoss { ratio, surrogate, entropy: out.entropy, value_error: err * err }, seeds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    cfg: AdamConfig<T>,
    m: ParamSet<T>,
    v: ParamSet<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig<T>, like: &ParamSet<T>) -> Self {
        Adam { cfg, m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = T::one() - c.beta1.powi(self.t);
        let bc2 = T::one() - c.beta2.powi(self.t);
        let moments = self.m.values_mut().zip(self.v.values_mut());
        for ((p, &g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
            *m = c.beta1 * *m + (T::one() - c.beta1) * g;
            *v = c.beta2 * *v + (T::one() - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Tensor;

    #[test]
    fn clip_examples() {
        assert_eq!(surrogate_term(1.0, 2.0, 0.2), (2.0, 2.0));
        let (t, g) = surrogate_term(1.5f64, 1.0, 0.2);
        assert!((t - 1.2).abs() < 1e-12);
        assert_eq!(g, 0.0);
        let (t, g) = surrogate_term(0.5f64, -1.0, 0.2);
        assert!((t + 0.8).abs() < 1e-12);
        assert_eq!(g, 0.0);
        // pessimistic side keeps its gradient
        assert_eq!(surrogate_term(1.5, -1.0, 0.2), (-1.5, -1.0));
        assert_eq!(surrogate_term(0.5, 1.0, 0.2), (0.5, 1.0));
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(&[2.0], &[1.0]), 1.0);
        assert_eq!(value_loss(&[1.0, -3.0], &[1.0, -3.0]), 0.0);
        assert_eq!(value_loss(&[1.0, 0.0], &[0.0, 2.0]), 2.5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParamSet { tensors: vec![Tensor { name: "w".into(), shape: vec![2], data: vec![1.0f64, -1.0] }] };
        let g = ParamSet { tensors: vec![Tensor { name: "w".into(), shape: vec![2], data: vec![0.3, -7.0] }] };
        let mut adam = Adam::new(AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, &p);
        adam.step(&mut p, &g);
        assert!((p.tensors[0].data[0] - 0.99).abs() < 1e-9);
        assert!((p.tensors[0].data[1] + 0.99).abs() < 1e-9);
        assert_eq!(adam.steps(), 1);
    }
}
