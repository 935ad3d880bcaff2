//! n-step returns and advantages.

use num_traits::Num;

use crate::Real;

/// `Σ_k γ^k r_{t+k} + γ^n V(s_{t+n})` over one window of at most `n`
/// rewards. A done flag at position `k` cuts the window after `r_{t+k}`
/// and drops the bootstrap.
///
/// Evaluated innermost-first, `r_t + γ(r_{t+1} + γ(… + γ V))`, so exact
/// scalar types give exact results.
pub fn n_step_return<T: Num + Copy>(rewards: &[T], bootstrap: T, gamma: T, dones: &[bool]) -> T {
    assert_eq!(rewards.len(), dones.len(), "one done flag per reward");
    let (window, tail) = match dones.iter().position(|&d| d) {
        Some(k) => (&rewards[..=k], T::zero()),
        None => (rewards, bootstrap),
    };
    window.iter().rev().fold(tail, |acc, &r| r + gamma * acc)
}

/// Returns for every step of one trajectory. `values[t]` is `V(s_t)`;
/// windows reaching past the last step have no bootstrap.
pub fn n_step_returns<T: Num + Copy>(rewards: &[T], values: &[T], dones: &[bool], gamma: T, n: usize) -> Vec<T> {
    assert!(n >= 1, "n-step horizon must be at least 1");
    assert_eq!(rewards.len(), values.len());
    let len = rewards.len();
    (0..len)
        .map(|t| {
            let end = (t + n).min(len);
            let bootstrap = if t + n < len { values[t + n] } else { T::zero() };
            let mut flags = dones[t..end].to_vec();
            if end == len {
                // trajectory ends inside the window
                *flags.last_mut().unwrap() = true;
            }
            n_step_return(&rewards[t..end], bootstrap, gamma, &flags)
        })
        .collect()
}

pub fn advantage<T: Num + Copy>(ret: T, value: T) -> T {
    ret - value
}

/// Shift to zero mean and scale to unit (population) variance. Constant
/// batches are only centered.
pub fn standardize<T: Real>(xs: &mut [T]) {
    if xs.is_empty() {
        return;
    }
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if std > T::lit(1e-8) {
            *x /= std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_example() {
        let r = n_step_return(&[1.0, 1.0], 10.0, 0.9, &[false, false]);
        assert!((r - 10.0f64).abs() < 1e-12);
    }

    #[test]
    fn zero_discount_and_terminal() {
        assert_eq!(n_step_return(&[3.0, 7.0, 9.0], 100.0, 0.0, &[false; 3]), 3.0);
        assert_eq!(n_step_return(&[-2.5], 100.0, 0.9, &[true]), -2.5);
        assert_eq!(n_step_return(&[1.0, 5.0, 5.0], 100.0, 1.0, &[false, true, false]), 6.0);
    }

    #[test]
    fn integer_returns() {
        assert_eq!(n_step_return(&[1i64, 2, 3], 4, 2, &[false; 3]), 1 + 2 * 2 + 4 * 3 + 8 * 4);
    }

    #[test]
    fn trajectory_returns() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [10.0, 20.0, 30.0];
        let dones = [false, false, true];
        let r = n_step_returns(&rewards, &values, &dones, 0.5, 1);
        assert_eq!(r, vec![1.0 + 0.5 * 20.0, 2.0 + 0.5 * 30.0, 3.0]);
        let r = n_step_returns(&rewards, &values, &dones, 0.5, 5);
        assert_eq!(r, vec![1.0 + 0.5 * (2.0 + 0.5 * 3.0), 2.0 + 0.5 * 3.0, 3.0]);
    }

    #[test]
    fn advantages() {
        assert_eq!(advantage(10.0, 9.0), 1.0);
        assert_eq!(advantage(4.5, 4.5), 0.0);
        let mut xs = [1.0f64, -1.0];
        standardize(&mut xs);
        assert_eq!(xs, [1.0, -1.0]);
        let mut xs = [2.0f64, 4.0, 9.0];
        standardize(&mut xs);
        let mean: f64 = xs.iter().sum::<f64>() / 3.0;
        let var: f64 = xs.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let mut flat = [3.0f64; 4];
        standardize(&mut flat);
        assert_eq!(flat, [0.0; 4]);
    }
}
