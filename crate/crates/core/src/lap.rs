//! Dense linear assignment in maximization form.
//!
//! [`solve_lap`] is a shortest-augmenting-path solver (Hungarian method with
//! dual potentials, O(d³)). [`brute_force_lap`] enumerates every permutation
//! and exists as a test oracle for small `d`.

use std::fmt;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`brute_force_lap`] (9! = 362 880 candidates).
pub const BRUTE_FORCE_MAX_DIM: usize = 9;

/// Square matrix of finite profits; entry `(i, j)` is the gain of matching
/// reference unit `i` to candidate unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitMatrix(Array2<f64>);

impl ProfitMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(Error::invalid(format!(
                "profit matrix must be square, got {rows}x{cols}"
            )));
        }
        if let Some(((i, j), v)) = entries.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "profit matrix entry ({i}, {j}) is not finite: {v}"
            )));
        }
        Ok(ProfitMatrix(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::invalid(format!(
                "profit matrix must be square, got a row of length {} with {d} rows",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((d, d), flat).expect("shape checked"))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// A bijection on `{0, .., d-1}`. Index `i` of the reference is matched to
/// `perm[i]` of the candidate; as a matrix, `P[i, perm[i]] = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in &perm {
            if p >= d || seen[p] {
                return Err(Error::invalid(format!(
                    "{perm:?} is not a permutation of 0..{d}"
                )));
            }
            seen[p] = true;
        }
        Ok(Assignment(perm))
    }

    pub fn identity(d: usize) -> Self {
        Assignment((0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Assignment(inv)
    }

    /// Matrix product `self · inner`: the result maps `i` to `inner[self[i]]`.
    ///
    /// Permuting rows by `inner` and then by `self` equals permuting once by
    /// `self.compose(inner)`.
    pub fn compose(&self, inner: &Assignment) -> Self {
        assert_eq!(self.len(), inner.len(), "composing permutations of different sizes");
        Assignment(self.0.iter().map(|&p| inner.0[p]).collect())
    }

    /// `Σ_i profit[i, perm[i]]`, summed in row order.
    pub fn objective(&self, profit: &ProfitMatrix) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &j)| profit.0[[i, j]])
            .sum()
    }
}

impl std::ops::Index<usize> for Assignment {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Maximum-profit assignment.
///
/// Rows are inserted one at a time, each followed by a Dijkstra-style search
/// for the cheapest augmenting path over reduced costs. When several columns
/// tie for the smallest reduced cost, the lowest column index is taken, so the
/// output is a deterministic function of the matrix.
pub fn solve_lap(profit: &ProfitMatrix) -> Assignment {
    let n = profit.dim();
    if n == 0 {
        return Assignment(Vec::new());
    }
    let cost = |i: usize, j: usize| -profit.0[[i, j]];

    // 1-based arrays with a sentinel column 0, as in the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|u| *u = false);

        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }

        loop {
            let prev = way[j0];
            col_owner[j0] = col_owner[prev];
            j0 = prev;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[col_owner[j] - 1] = j - 1;
    }
    Assignment(perm)
}

/// Exhaustive maximum-profit assignment; ties go to the lexicographically
/// smallest permutation.
pub fn brute_force_lap(profit: &ProfitMatrix) -> Result<Assignment> {
    let n = profit.dim();
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(Error::SizeLimit {
            what: format!("{n}x{n} assignment"),
            limit: BRUTE_FORCE_MAX_DIM as u64,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = Assignment(perm.clone());
    let mut best_value = best.objective(profit);
    while next_permutation(&mut perm) {
        let candidate = Assignment(perm.clone());
        let value = candidate.objective(profit);
        if value > best_value {
            best_value = value;
            best = candidate;
        }
    }
    Ok(best)
}

/// Advances `perm` to the next permutation in lexicographic order. Returns
/// `false` (leaving `perm` untouched) when it is already the last one.
pub(crate) fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let Some(pivot) = (0..n - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
        return false;
    };
    let successor = (pivot + 1..n)
        .rev()
        .find(|&j| perm[j] > perm[pivot])
        .expect("a larger element exists right of the pivot");
    perm.swap(pivot, successor);
    perm[pivot + 1..].reverse();
    true
}
