//! Sparse Cholesky factorization `P A Pᵀ = L Lᵀ` with reverse Cuthill-McKee
//! ordering and an up-looking (row by row) numeric phase.

use std::collections::VecDeque;

use crate::sparse::Csr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CholeskyError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("non-positive pivot {value:e} at row {row}: matrix is not positive definite")]
    NotPositiveDefinite { row: usize, value: f64 },
}

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

/// Reverse Cuthill-McKee ordering of the symmetric pattern of `a`.
pub fn rcm_ordering(a: &Csr<f64>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row_indices(i).len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row_indices(v).iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &Csr<f64>, start: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
    let mut touched = vec![start];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        depth = depth.max(level[v]);
        for &w in a.row_indices(v) {
            if level[w] == NONE {
                level[w] = level[v] + 1;
                touched.push(w);
                queue.push_back(w);
            }
        }
    }
    (depth, touched)
}

fn pseudo_peripheral(a: &Csr<f64>, seed: usize, degree: &[usize]) -> usize {
    let mut level = vec![NONE; a.nrows()];
    let mut current = seed;
    let (mut depth, mut touched) = bfs_levels(a, current, &mut level);
    for _ in 0..8 {
        let candidate = touched
            .iter()
            .copied()
            .filter(|&v| level[v] == depth)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        for &v in &touched {
            level[v] = NONE;
        }
        let (d, t) = bfs_levels(a, candidate, &mut level);
        if d <= depth {
            for &v in &t {
                level[v] = NONE;
            }
            break;
        }
        current = candidate;
        depth = d;
        touched = t;
    }
    current
}

impl SparseCholesky {
    /// Factors a symmetric positive definite matrix stored with both triangles.
    pub fn factor(a: &Csr<f64>) -> Result<Self, CholeskyError> {
        if a.nrows() != a.ncols() {
            return Err(CholeskyError::NotSquare(a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        let perm = rcm_ordering(a);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // upper part of C = P A Pᵀ, stored by rows: row k holds C(i,k) for i <= k
        let mut c_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for old_i in 0..n {
            let i = iperm[old_i];
            for (old_j, v) in a.row(old_i) {
                let j = iperm[old_j];
                if j <= i {
                    c_rows[i].push((j, v));
                }
            }
        }
        for r in &mut c_rows {
            r.sort_by_key(|e| e.0);
        }

        // elimination tree
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &(i0, _) in &c_rows[k] {
                let mut i = i0;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        // column counts
        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(&c_rows[k], k, &parent, &mut mark, &mut stack, &mut path);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + counts[j];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut fill = lp.clone();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);

        for k in 0..n {
            let top = ereach(&c_rows[k], k, &parent, &mut mark, &mut stack, &mut path);
            let mut d = 0.0;
            for &(i, v) in &c_rows[k] {
                if i == k {
                    d += v;
                } else {
                    x[i] += v;
                }
            }
            for &j in &stack[top..] {
                let lkj = x[j] / lx[lp[j]];
                x[j] = 0.0;
                for p in lp[j] + 1..fill[j] {
                    x[li[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                li[fill[j]] = k;
                lx[fill[j]] = lkj;
                fill[j] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(CholeskyError::NotPositiveDefinite { row: perm[k], value: d });
            }
            li[fill[k]] = k;
            lx[fill[k]] = d.sqrt();
            fill[k] += 1;
        }
        Ok(SparseCholesky { n, perm, lp, li, lx })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lx.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            y[j] /= self.lx[self.lp[j]];
            let yj = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                y[self.li[p]] -= self.lx[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let mut s = y[j];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                s -= self.lx[p] * y[self.li[p]];
            }
            y[j] = s / self.lx[self.lp[j]];
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }
}

/// Nonzero pattern of row k of L (excluding the diagonal), in topological order
/// as `stack[top..]`.
fn ereach(
    row: &[(usize, f64)],
    k: usize,
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
    path: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for &(i0, _) in row {
        if i0 >= k {
            continue;
        }
        let mut len = 0;
        let mut i = i0;
        while mark[i] != k {
            path[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = path[len];
        }
    }
    top
}
