//! Compressed sparse rows over free degrees of freedom, and an envelope
//! Cholesky factorization under reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use super::SolveError;
use crate::mesh::Mesh;

/// Numbering of the non-Dirichlet nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    node_of: Vec<usize>,
    dof_of: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut node_of = Vec::new();
        let dof_of = (0..mesh.node_count())
            .map(|n| {
                (!mesh.is_dirichlet(n)).then(|| {
                    node_of.push(n);
                    node_of.len() - 1
                })
            })
            .collect();
        Self { node_of, dof_of }
    }

    pub fn len(&self) -> usize {
        self.node_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of.is_empty()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.node_of[dof]
    }

    /// Restricts a nodal vector to free dofs.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.node_of.iter().map(|&n| nodal[n]).collect()
    }

    /// Extends a free-dof vector by zeros on Dirichlet nodes.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_of.len()];
        for (d, &n) in self.node_of.iter().enumerate() {
            out[n] = free[d];
        }
        out
    }
}

/// Square sparse matrix in CSR form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Sums duplicate `(row, col, value)` entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    /// Diagonal matrix.
    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// max |A_ij − A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entrywise max |A − B| over the union of both patterns.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        (0..self.n)
            .flat_map(|i| {
                self.row(i)
                    .map(move |(j, v)| (v - other.get(i, j)).abs())
                    .chain(other.row(i).map(move |(j, v)| (v - self.get(i, j)).abs()))
            })
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { vals: self.vals.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

fn reverse_cuthill_mckee(a: &SparseOperator) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| (degree[j], j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// L Lᵀ factorization of a symmetric positive definite operator.
#[derive(Debug, Clone)]
pub struct Cholesky {
    /// `perm[k]` is the original index of permuted row `k`.
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &SparseOperator) -> Result<Self, SolveError> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inv[i] = k;
        }
        let first: Vec<usize> = (0..n)
            .map(|k| a.row(perm[k]).map(|(j, _)| inv[j]).filter(|&j| j <= k).min().unwrap_or(k))
            .collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for k in 0..n {
            offset.push(offset[k] + (k - first[k] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for k in 0..n {
            for (j, v) in a.row(perm[k]) {
                let j = inv[j];
                if j <= k {
                    data[offset[k] + j - first[k]] = v;
                }
            }
        }

        for i in 0..n {
            let (fi, oi) = (first[i], offset[i]);
            for j in fi..i {
                let (fj, oj) = (first[j], offset[j]);
                let lo = fi.max(fj);
                let mut s = data[oi + j - fi];
                for k in lo..j {
                    s -= data[oi + k - fi] * data[oj + k - fj];
                }
                data[oi + j - fi] = s / data[oj + j - fj];
            }
            let mut d = data[oi + i - fi];
            for k in fi..i {
                d -= data[oi + k - fi].powi(2);
            }
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite { pivot: perm[i], value: d });
            }
            data[oi + i - fi] = d.sqrt();
        }
        Ok(Self { perm, first, offset, data })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let (fi, oi) = (self.first[i], self.offset[i]);
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[oi + k - fi] * y[k];
            }
            y[i] = s / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, oi) = (self.first[i], self.offset[i]);
            y[i] /= self.data[oi + i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.data[oi + k - fi] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseOperator::from_triplets(n, t)
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = SparseOperator::from_triplets(2, vec![(1, 0, 1.0), (0, 0, 2.0), (1, 0, 3.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.max_asymmetry(), 4.0);
    }

    #[test]
    fn cholesky_solves_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        // sparse random SPD: 1D laplacian plus random symmetric couplings made diagonally dominant
        let mut t = Vec::new();
        let mut diag = vec![1.0; n];
        for _ in 0..80 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i != j {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
                diag[i] += v.abs();
                diag[j] += v.abs();
            }
        }
        t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        let a = SparseOperator::from_triplets(n, t);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.mul_vec(&x);
        let sol = Cholesky::new(&a).unwrap().solve(&b);
        for (u, v) in sol.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_envelope_stays_small() {
        let a = laplacian_1d(500);
        let c = Cholesky::new(&a).unwrap();
        assert!(c.envelope_size() <= 2 * 500);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(Cholesky::new(&a), Err(SolveError::NotPositiveDefinite { .. })));
    }
}
