//! Symmetric sparse storage and an up-looking sparse Cholesky factorization.
//!
//! The symbolic phase (minimum-degree ordering, elimination tree, column
//! counts) depends only on the sparsity pattern and is computed once; the
//! numeric phase is repeated whenever the values change.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Full (both triangles plus diagonal) symmetric matrix in compressed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricCsr {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) values: Vec<f64>,
}

impl SymmetricCsr {
    /// Pattern with an explicit diagonal plus the given symmetric off-diagonal
    /// neighbor lists. Values start at zero.
    pub fn from_adjacency(adj: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(adj.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (p, nb) in adj.iter().enumerate() {
            let mut cols: Vec<usize> = nb.iter().copied().chain(std::iter::once(p)).collect();
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend(cols);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[p]..self.row_ptr[p + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        let r = self.row_ptr[p]..self.row_ptr[p + 1];
        match self.col_idx[r.clone()].binary_search(&q) {
            Ok(i) => self.values[r.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|p| self.row(p).map(|(q, v)| v * x[q]).sum())
            .collect()
    }

    /// xᵀ A x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|p| x[p] * self.row(p).map(|(q, v)| v * x[q]).sum::<f64>())
            .sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (p, row) in d.iter_mut().enumerate() {
            for (q, v) in self.row(p) {
                row[q] = v;
            }
        }
        d
    }
}

const NONE: usize = usize::MAX;

/// Pattern-only part of the factorization `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
    /// Strictly-upper pattern of each column of the permuted matrix.
    upper: Vec<Vec<usize>>,
}

impl SymbolicCholesky {
    pub fn analyze(pattern: &SymmetricCsr) -> Self {
        let n = pattern.dim();
        let perm = minimum_degree(pattern);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        let upper: Vec<Vec<usize>> = (0..n)
            .map(|k| {
                let mut u: Vec<usize> = pattern
                    .row(perm[k])
                    .map(|(j, _)| iperm[j])
                    .filter(|&i| i < k)
                    .collect();
                u.sort_unstable();
                u
            })
            .collect();

        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &upper[k] {
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

        let mut counts = vec![1usize; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0; n];
        for k in 0..n {
            let top = ereach(&upper[k], k, &parent, &mut mark, &mut stack);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut col_ptr = vec![0; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        Self {
            n,
            perm,
            iperm,
            parent,
            col_ptr,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in L, including the diagonal.
    pub fn factor_nnz(&self) -> usize {
        self.col_ptr[self.n]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn factor(&self, a: &SymmetricCsr) -> Result<CholeskyFactor> {
        let n = self.n;
        if a.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: a.dim(),
            });
        }
        let nnz = self.factor_nnz();
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0f64; nnz];
        let mut next = self.col_ptr[..n].to_vec();
        let mut x = vec![0.0f64; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];

        for k in 0..n {
            let top = ereach(&self.upper[k], k, &self.parent, &mut mark, &mut stack);
            x[k] = 0.0;
            for (j, v) in a.row(self.perm[k]) {
                let i = self.iperm[j];
                if i <= k {
                    x[i] = v;
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[self.col_ptr[i]];
                x[i] = 0.0;
                for p in self.col_ptr[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[k],
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(CholeskyFactor {
            n,
            perm: self.perm.clone(),
            col_ptr: self.col_ptr.clone(),
            row_idx: li,
            values: lx,
        })
    }
}

/// Nonzero pattern of row k of L, returned in `stack[top..]` in topological
/// order.
fn ereach(
    upper_k: &[usize],
    k: usize,
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    let mut path = Vec::new();
    for &i0 in upper_k {
        let mut i = i0;
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
        }
        while let Some(j) = path.pop() {
            top -= 1;
            stack[top] = j;
        }
    }
    top
}

/// Greedy minimum-degree ordering on the explicit elimination graph. Ties are
/// broken by the smaller index so the ordering is deterministic.
pub fn minimum_degree(pattern: &SymmetricCsr) -> Vec<usize> {
    let n = pattern.dim();
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|p| pattern.row(p).map(|(q, _)| q).filter(|&q| q != p).collect())
        .collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|p| (adj[p].len(), p)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nb: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nb {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
            for &w in &nb {
                if w != u {
                    adj[u].insert(w);
                }
            }
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

/// Numeric factor `P A Pᵀ = L Lᵀ`, L stored by columns with the diagonal
/// first.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// ln det A
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|j| self.values[self.col_ptr[j]].ln())
            .sum::<f64>()
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Returns x with x ~ N(0, A⁻¹) when z ~ N(0, I): solves Lᵀ u = z and
    /// undoes the permutation.
    pub fn solve_transposed_unpermuted(&self, z: &[f64]) -> Vec<f64> {
        let mut u = z.to_vec();
        self.upper_solve(&mut u);
        let mut x = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = u[k];
        }
        x
    }

    fn lower_solve(&self, y: &mut [f64]) {
        for j in 0..self.n {
            let r = self.col_ptr[j]..self.col_ptr[j + 1];
            y[j] /= self.values[r.start];
            let yj = y[j];
            for p in r.start + 1..r.end {
                y[self.row_idx[p]] -= self.values[p] * yj;
            }
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        for j in (0..self.n).rev() {
            let r = self.col_ptr[j]..self.col_ptr[j + 1];
            let mut s = y[j];
            for p in r.start + 1..r.end {
                s -= self.values[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.values[r.start];
        }
    }
}
