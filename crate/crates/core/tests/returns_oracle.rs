//! n-step returns against a recursive oracle, in exact rational arithmetic.

use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracklet_core::marl::{n_step_return, n_step_returns};

type Q = Ratio<i64>;

/// `R = r_0 + γ R'`, stopping at a done flag or when the window is used up.
fn oracle(rewards: &[Q], bootstrap: Q, gamma: Q, dones: &[bool]) -> Q {
    match rewards.split_first() {
        None => bootstrap,
        Some((&r, _)) if dones[0] => r,
        Some((&r, rest)) => r + gamma * oracle(rest, bootstrap, gamma, &dones[1..]),
    }
}

#[test]
fn agrees_with_recursion_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=6);
        let rewards: Vec<Q> = (0..n).map(|_| Q::new(rng.gen_range(-20..=20), rng.gen_range(1..=4))).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
        let gamma = Q::new(rng.gen_range(1..=8), 8);
        let v = Q::new(rng.gen_range(-50..=50), rng.gen_range(1..=3));
        assert_eq!(n_step_return(&rewards, v, gamma, &dones), oracle(&rewards, v, gamma, &dones));
    }
}

#[test]
fn floats_agree_with_the_same_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=6);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let dones = vec![false; n];
        let (g, v) = (rng.gen_range(0.0..1.0), rng.gen_range(-10.0..10.0));
        let naive = rewards.iter().rev().fold(v, |acc, &r| r + g * acc);
        assert_eq!(n_step_return(&rewards, v, g, &dones), naive);
    }
}

#[test]
fn spec_examples() {
    let r = n_step_return(&[Q::from(1), Q::from(1)], Q::from(10), Q::new(9, 10), &[false, false]);
    assert_eq!(r, Q::from(10));
    assert_eq!(n_step_return(&[Q::from(3), Q::from(4)], Q::from(10), Q::from(0), &[false, false]), Q::from(3));
    assert_eq!(n_step_return(&[Q::from(3)], Q::from(99), Q::new(1, 2), &[true]), Q::from(3));
}

proptest! {
    /// Windowed trajectory returns equal direct sums of discounted rewards.
    #[test]
    fn trajectory_windows(rs in proptest::collection::vec(-10i64..10, 1..30), n in 1usize..8, gnum in 1i64..4) {
        let gamma = Q::new(gnum, 4);
        let rewards: Vec<Q> = rs.iter().map(|&r| Q::from(r)).collect();
        let values: Vec<Q> = (0..rs.len()).map(|t| Q::from(t as i64 * 3 - 7)).collect();
        let mut dones = vec![false; rs.len()];
        *dones.last_mut().unwrap() = true;
        let got = n_step_returns(&rewards, &values, &dones, gamma, n);
        for t in 0..rs.len() {
            let end = (t + n).min(rs.len());
            let mut want = Q::from(0);
            let mut g = Q::from(1);
            for r in &rewards[t..end] {
                want += g * r;
                g *= gamma;
            }
            if t + n < rs.len() {
                want += g * values[t + n];
            }
            prop_assert_eq!(got[t], want);
        }
    }
}
