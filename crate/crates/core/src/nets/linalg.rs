//! Dense row-major kernels used by the forward and backward passes.

use crate::Real;

/// `out = a · b` for `a: m×k`, `b: k×n`.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out += aᵀ · b` for `a: m×k`, `b: m×n`, `out: k×n`.
pub fn matmul_at_b_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out = a · bᵀ` for `a: m×n`, `b: k×n`.
pub fn matmul_a_bt<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] = dot(arow, &b[p * n..(p + 1) * n]);
        }
    }
    out
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y = x · w + b` for a single row `x` of width `n_in`.
pub fn affine<T: Real>(x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let n_out = b.len();
    let mut y = b.to_vec();
    for (i, &xv) in x.iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        for (o, &wv) in y.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
            *o += xv * wv;
        }
    }
    y
}

/// Backward of [`affine`]: accumulates `dw += xᵀ dy`, `db += dy` and returns `dx = dy · wᵀ`.
pub fn affine_backward<T: Real>(x: &[T], w: &[T], dy: &[T], dw: &mut [T], db: &mut [T]) -> Vec<T> {
    let n_out = dy.len();
    for (i, &xv) in x.iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        for (g, &d) in dw[i * n_out..(i + 1) * n_out].iter_mut().zip(dy) {
            *g += xv * d;
        }
    }
    for (g, &d) in db.iter_mut().zip(dy) {
        *g += d;
    }
    (0..x.len()).map(|i| dot(&w[i * n_out..(i + 1) * n_out], dy)).collect()
}

pub fn relu<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect()
}

/// Zero the gradient where the pre-activation was not positive.
pub fn relu_backward<T: Real>(pre: &[T], grad: &mut [T]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        assert_eq!(matmul_a_bt(&a, &b, 2, 2, 2), vec![17.0, 23.0, 39.0, 53.0]);
        let mut out = vec![0.0; 4];
        matmul_at_b_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, vec![26.0, 30.0, 38.0, 44.0]);
        assert_eq!(affine(&[1.0, 2.0], &a, &[0.5, 0.5]), vec![7.5, 10.5]);
    }
}
