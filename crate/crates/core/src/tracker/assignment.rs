//! Square linear assignment via the Hungarian method with potentials.
//!
//! The solver is generic over the cost type, so integer and rational costs
//! are solved exactly. Among all optimal assignments the lexicographically
//! smallest row→column vector is returned.

use std::fmt::Debug;

use num_traits::{Num, Signed};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("cost matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("cost matrix entry ({row}, {col}) is negative or not a number")]
    NegativeCost { row: usize, col: usize },
    #[error("cost matrix data has {got} entries, expected {expected}")]
    DataLength { expected: usize, got: usize },
}

/// Cost scalar accepted by the solver.
pub trait Cost: Num + Signed + Copy + PartialOrd + Debug {
    /// Whether a reduced cost counts as zero. Exact types compare with zero;
    /// floats allow round-off relative to the largest cost magnitude.
    fn is_tight(reduced: Self, scale: Self) -> bool;
}

macro_rules! exact_cost {
    ($($t:ty),*) => {$(
        impl Cost for $t {
            fn is_tight(reduced: Self, _scale: Self) -> bool {
                reduced == <$t as num_traits::Zero>::zero()
            }
        }
    )*};
}
exact_cost!(i32, i64, i128);

macro_rules! float_cost {
    ($($t:ty),*) => {$(
        impl Cost for $t {
            fn is_tight(reduced: Self, scale: Self) -> bool {
                reduced.abs() <= 64.0 * <$t>::EPSILON * (1.0 + scale)
            }
        }
    )*};
}
float_cost!(f32, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Cost> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::DataLength { expected: rows * cols, got: data.len() });
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn zeros(n: usize) -> Self {
        CostMatrix { rows: n, cols: n, data: vec![T::zero(); n * n] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AssignmentError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(AssignmentError::NotSquare { rows: n, cols: bad.len() });
        }
        Self::new(n, cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    /// `columns[row]` is the column assigned to `row`.
    pub columns: Vec<usize>,
    pub total: T,
}

/// Minimum-cost perfect matching of rows to columns.
pub fn solve_assignment<T: Cost>(cost: &CostMatrix<T>) -> Result<Assignment<T>, AssignmentError> {
    let n = cost.rows;
    if cost.cols != n {
        return Err(AssignmentError::NotSquare { rows: cost.rows, cols: cost.cols });
    }
    let mut scale = T::zero();
    for r in 0..n {
        for c in 0..n {
            let v = cost.get(r, c);
            // rejects NaN as well as negatives
            if !(v >= T::zero()) {
                return Err(AssignmentError::NegativeCost { row: r, col: c });
            }
            if v > scale {
                scale = v;
            }
        }
    }
    if n == 0 {
        return Ok(Assignment { columns: Vec::new(), total: T::zero() });
    }

    let (row_pot, col_pot, initial) = hungarian(cost);
    let columns = lexicographic_tight_matching(cost, &row_pot, &col_pot, initial, scale);
    let total = columns.iter().enumerate().fold(T::zero(), |acc, (r, &c)| acc + cost.get(r, c));
    Ok(Assignment { columns, total })
}

/// Shortest-augmenting-path Hungarian algorithm. Returns row potentials,
/// column potentials (with `u[r] + v[c] <= cost[r][c]` everywhere) and an
/// optimal matching as `row → column`.
fn hungarian<T: Cost>(cost: &CostMatrix<T>) -> (Vec<T>, Vec<T>, Vec<usize>) {
    let n = cost.rows;
    // 1-based with column 0 as the virtual source
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<T>> = vec![None; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if minv[j].is_none_or(|m| cur < m) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].expect("set above");
                if delta.is_none_or(|d| mj < d) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column always exists");
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(m) = minv[j] {
                    minv[j] = Some(m - delta);
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut columns = vec![0usize; n];
    for j in 1..=n {
        columns[owner[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), columns)
}

/// Every optimal assignment uses only edges that are tight under an optimal
/// dual, so the lexicographic minimum is found greedily on the tight graph:
/// for each row in turn, take the smallest tight column that still admits a
/// perfect matching of the remaining rows.
fn lexicographic_tight_matching<T: Cost>(
    cost: &CostMatrix<T>,
    u: &[T],
    v: &[T],
    mut matching: Vec<usize>,
    scale: T,
) -> Vec<usize> {
    let n = cost.rows;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|r| (0..n).map(|c| T::is_tight(cost.get(r, c) - u[r] - v[c], scale)).collect())
        .collect();
    let mut owner = vec![usize::MAX; n];
    for (r, &c) in matching.iter().enumerate() {
        owner[c] = r;
    }
    let mut fixed_col = vec![false; n];

    for r in 0..n {
        for c in 0..n {
            if fixed_col[c] || !tight[r][c] {
                continue;
            }
            if matching[r] == c {
                break;
            }
            // free r's current column, then try to re-home c's owner into it
            let displaced = owner[c];
            let freed = matching[r];
            let mut visited = vec![false; n];
            visited[c] = true;
            if let Some(path) = augment(displaced, freed, &tight, &matching, &owner, &fixed_col, &mut visited, r) {
                for (row, col) in path {
                    matching[row] = col;
                    owner[col] = row;
                }
                matching[r] = c;
                owner[c] = r;
                break;
            }
        }
        fixed_col[matching[r]] = true;
    }
    matching
}

/// Alternating path from `row` ending at the free column `target`, over
/// tight edges of unfixed rows (> `frozen`) and unfixed columns. Returns the
/// (row, column) reassignments along the path.
fn augment(
    row: usize,
    target: usize,
    tight: &[Vec<bool>],
    matching: &[usize],
    owner: &[usize],
    fixed_col: &[bool],
    visited: &mut [bool],
    frozen: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = tight.len();
    for c in 0..n {
        if visited[c] || fixed_col[c] || !tight[row][c] || c == matching[row] {
            continue;
        }
        visited[c] = true;
        if c == target {
            return Some(vec![(row, c)]);
        }
        let next = owner[c];
        if next <= frozen {
            continue;
        }
        if let Some(mut path) = augment(next, target, tight, matching, owner, fixed_col, visited, frozen) {
            path.push((row, c));
            return Some(path);
        }
    }
    None
}
