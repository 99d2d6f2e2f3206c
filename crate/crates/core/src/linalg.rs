//! Sparse matrices and LU factorization for the admittance and Jacobian
//! systems.
//!
//! Grid matrices are structurally symmetric and strongly diagonal, so the
//! factorization uses a minimum-degree symmetric ordering with diagonal
//! pivots. When a pivot comes out too small relative to its row the
//! factorization falls back to nalgebra's dense partial-pivoting LU.

use std::collections::BTreeSet;

use nalgebra::{ComplexField, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Scalar types the factorization works over (`f64` and `Complex64`).
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

/// Row-compressed sparse matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Square matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            rows[i].push((j, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        Self { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(p) => self.rows[i][p].1,
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        self.rows
            .iter()
            .map(|row| row.iter().fold(T::zero(), |acc, &(j, v)| acc + v * x[j]))
            .collect()
    }

    /// `self * m` for a dense right-hand matrix.
    pub fn mul_dense(&self, m: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(m.nrows(), self.n);
        let mut out = DMatrix::zeros(self.n, m.ncols());
        for c in 0..m.ncols() {
            let col = m.column(c);
            for (i, row) in self.rows.iter().enumerate() {
                out[(i, c)] = row.iter().fold(T::zero(), |acc, &(j, v)| acc + v * col[j]);
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Rows `rows` restricted to columns `cols`, re-indexed to `0..cols.len()`.
    pub fn sub_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<(usize, T)>> {
        let mut col_pos = vec![usize::MAX; self.n];
        for (p, &c) in cols.iter().enumerate() {
            col_pos[c] = p;
        }
        rows.iter()
            .map(|&r| {
                self.rows[r]
                    .iter()
                    .filter(|(j, _)| col_pos[*j] != usize::MAX)
                    .map(|&(j, v)| (col_pos[j], v))
                    .collect()
            })
            .collect()
    }

    /// Square principal sub-matrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> SparseMatrix<T> {
        SparseMatrix { n: idx.len(), rows: self.sub_block(idx, idx) }
    }
}

/// Greedy minimum-degree elimination order on the symmetrized pattern.
///
/// Returns the order (position -> original index) and, per position, the
/// original indices adjacent at elimination time; those neighbour sets are
/// the fill pattern of the factor.
fn minimum_degree<T: Scalar>(a: &SparseMatrix<T>) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = a.n;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in a.rows.iter().enumerate() {
        for &(j, _) in row {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut fill = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (adj[v].len(), v))
            .expect("a live node remains");
        alive[v] = false;
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
            for &b in &nbrs {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[v].clear();
        order.push(v);
        fill.push(nbrs);
    }
    (order, fill)
}

/// Sparse LU with a symmetric permutation and no row exchanges.
#[derive(Debug, Clone)]
pub struct SparseLu<T> {
    n: usize,
    /// position -> original index
    order: Vec<usize>,
    /// original index -> position
    position: Vec<usize>,
    lower: Vec<Vec<(usize, T)>>,
    upper: Vec<Vec<(usize, T)>>,
    diag: Vec<T>,
}

const PIVOT_RATIO: f64 = 1e-10;

impl<T: Scalar> SparseLu<T> {
    pub fn factor(a: &SparseMatrix<T>) -> Result<Self> {
        let n = a.n;
        let (order, fill) = minimum_degree(a);
        let mut position = vec![0; n];
        for (p, &o) in order.iter().enumerate() {
            position[o] = p;
        }
        // Upper pattern of position k is its elimination neighbourhood; the
        // lower pattern of row i collects every k whose neighbourhood holds i.
        let mut upper_pat: Vec<Vec<usize>> = fill
            .iter()
            .map(|nb| {
                let mut p: Vec<usize> = nb.iter().map(|&o| position[o]).collect();
                p.sort_unstable();
                p
            })
            .collect();
        let mut lower_pat: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, pat) in upper_pat.iter().enumerate() {
            for &i in pat {
                lower_pat[i].push(k);
            }
        }

        let mut work = vec![T::zero(); n];
        let mut lower = Vec::with_capacity(n);
        let mut upper: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let orig = order[i];
            let mut scale = 0.0f64;
            for &(j, v) in a.row(orig) {
                work[position[j]] = v;
                scale = scale.max(v.modulus());
            }
            let mut lrow = Vec::with_capacity(lower_pat[i].len());
            for &k in &lower_pat[i] {
                let l = work[k] / diag[k];
                work[k] = T::zero();
                if l != T::zero() {
                    for &(j, u) in &upper[k] {
                        work[j] -= l * u;
                    }
                }
                lrow.push((k, l));
            }
            let pivot = work[i];
            work[i] = T::zero();
            if !(pivot.modulus() > PIVOT_RATIO * scale) || !pivot.modulus().is_finite() {
                return Err(Error::SingularMatrix);
            }
            let urow: Vec<(usize, T)> = std::mem::take(&mut upper_pat[i])
                .into_iter()
                .map(|j| {
                    let v = work[j];
                    work[j] = T::zero();
                    (j, v)
                })
                .collect();
            lower.push(lrow);
            upper.push(urow);
            diag.push(pivot);
        }
        Ok(Self { n, order, position, lower, upper, diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal factor entries.
    pub fn fill(&self) -> usize {
        self.lower.iter().chain(self.upper.iter()).map(Vec::len).sum()
    }

    fn solve_permuted(&self, y: &mut [T], first_nonzero: usize) {
        for i in first_nonzero..self.n {
            let mut s = y[i];
            for &(k, l) in &self.lower[i] {
                s -= l * y[k];
            }
            y[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for &(j, u) in &self.upper[i] {
                s -= u * y[j];
            }
            y[i] = s / self.diag[i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut y: Vec<T> = self.order.iter().map(|&o| b[o]).collect();
        self.solve_permuted(&mut y, 0);
        let mut x = vec![T::zero(); self.n];
        for (p, &o) in self.order.iter().enumerate() {
            x[o] = y[p];
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<T> {
        let n = self.n;
        let mut inv = DMatrix::zeros(n, n);
        let mut y = vec![T::zero(); n];
        for j in 0..n {
            y.iter_mut().for_each(|v| *v = T::zero());
            let p = self.position[j];
            y[p] = T::one();
            self.solve_permuted(&mut y, p);
            let mut col = inv.column_mut(j);
            for (q, &o) in self.order.iter().enumerate() {
                col[o] = y[q];
            }
        }
        inv
    }
}

/// A factorization of a square system, sparse when the diagonal ordering
/// is stable and dense otherwise.
pub enum Factorization<T: Scalar> {
    Sparse(SparseLu<T>),
    Dense(LU<T, Dyn, Dyn>),
}

impl<T: Scalar> Factorization<T> {
    pub fn new(a: &SparseMatrix<T>) -> Result<Self> {
        match SparseLu::factor(a) {
            Ok(lu) => Ok(Factorization::Sparse(lu)),
            Err(Error::SingularMatrix) => {
                log::debug!("sparse LU hit a small pivot; falling back to dense LU (n = {})", a.n);
                let lu = a.to_dense().lu();
                if !lu.is_invertible() {
                    return Err(Error::SingularMatrix);
                }
                Ok(Factorization::Dense(lu))
            }
            Err(e) => Err(e),
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        match self {
            Factorization::Sparse(lu) => Ok(lu.solve(b)),
            Factorization::Dense(lu) => lu
                .solve(&DVector::from_column_slice(b))
                .map(|x| x.as_slice().to_vec())
                .ok_or(Error::SingularMatrix),
        }
    }

    pub fn inverse(&self) -> Result<DMatrix<T>> {
        match self {
            Factorization::Sparse(lu) => Ok(lu.inverse()),
            Factorization::Dense(lu) => lu.try_inverse().ok_or(Error::SingularMatrix),
        }
    }
}

/// ∞-norm (max absolute row sum) of a dense matrix.
pub fn inf_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ladder(n: usize) -> SparseMatrix<Complex64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, c(2.5, -12.0)));
            if i + 1 < n {
                t.push((i, i + 1, c(-1.0, 5.0)));
                t.push((i + 1, i, c(-1.0, 5.0)));
            }
            if i + 7 < n {
                t.push((i, i + 7, c(-0.2, 1.0)));
                t.push((i + 7, i, c(-0.2, 1.0)));
            }
        }
        SparseMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = SparseMatrix::from_triplets(2, [(0, 1, 1.0), (0, 0, 2.0), (0, 1, 3.0)]);
        assert_eq!(m.row(0), &[(0, 2.0), (1, 4.0)]);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn sparse_solve_matches_dense() {
        let a = ladder(40);
        let b: Vec<Complex64> = (0..40).map(|i| c(i as f64, 1.0 - i as f64 * 0.5)).collect();
        let x = SparseLu::factor(&a).unwrap().solve(&b);
        let dense = a.to_dense().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).norm() < 1e-12);
        }
        let r = a.mul_vec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn sparse_inverse_is_inverse() {
        let a = ladder(30);
        let inv = Factorization::new(&a).unwrap().inverse().unwrap();
        let mut prod = a.mul_dense(&inv);
        for i in 0..30 {
            prod[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        assert!(inf_norm(&prod) < 1e-12);
    }

    #[test]
    fn zero_diagonal_falls_back_to_dense() {
        // [[0, 1], [1, 0]] has no stable diagonal pivot
        let a = SparseMatrix::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]);
        let f = Factorization::new(&a).unwrap();
        assert!(matches!(f, Factorization::Dense(_)));
        assert_eq!(f.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = SparseMatrix::from_triplets(2, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(Factorization::new(&a), Err(Error::SingularMatrix)));
    }
}
