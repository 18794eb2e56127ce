//! Normal-equation assembly `J^T J` for a fixed Jacobian pattern and its sparse
//! Cholesky solve.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, MatMut, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("symbolic factorization failed: {0}")]
    Symbolic(String),
    #[error("matrix is not numerically positive definite")]
    NotPositiveDefinite,
}

/// Upper triangle of `J^T J` in compressed columns, plus the column view of `J`.
#[derive(Debug)]
pub struct GramPlan {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag_pos: Vec<usize>,
    jc_ptr: Vec<usize>,
    jc_row: Vec<usize>,
    jc_src: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    llt: SymbolicLlt<usize>,
}

impl GramPlan {
    /// `row_ptr`/`cols` describe `J` in compressed rows with `ncols` columns.
    pub fn new(ncols: usize, row_ptr: &[usize], cols: &[usize]) -> Result<Self, SparseError> {
        let nrows = row_ptr.len() - 1;
        let mut count = vec![0usize; ncols + 1];
        for &c in cols {
            count[c + 1] += 1;
        }
        for c in 0..ncols {
            count[c + 1] += count[c];
        }
        let jc_ptr = count.clone();
        let mut fill = count;
        let mut jc_row = vec![0; cols.len()];
        let mut jc_src = vec![0; cols.len()];
        for k in 0..nrows {
            for e in row_ptr[k]..row_ptr[k + 1] {
                let c = cols[e];
                jc_row[fill[c]] = k;
                jc_src[fill[c]] = e;
                fill[c] += 1;
            }
        }

        let mut mark = vec![usize::MAX; ncols];
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut diag_pos = Vec::with_capacity(ncols);
        col_ptr.push(0);
        let mut buf = Vec::new();
        for c in 0..ncols {
            buf.clear();
            mark[c] = c;
            buf.push(c);
            for &k in &jc_row[jc_ptr[c]..jc_ptr[c + 1]] {
                for &c2 in &cols[row_ptr[k]..row_ptr[k + 1]] {
                    if c2 <= c && mark[c2] != c {
                        mark[c2] = c;
                        buf.push(c2);
                    }
                }
            }
            buf.sort_unstable();
            diag_pos.push(row_idx.len() + buf.len() - 1);
            row_idx.extend_from_slice(&buf);
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(ncols, ncols, col_ptr.clone(), None, row_idx.clone());
        let llt = SymbolicLlt::try_new(symbolic.as_ref(), Side::Upper).map_err(|e| SparseError::Symbolic(format!("{e:?}")))?;
        Ok(Self { n: ncols, col_ptr, row_idx, diag_pos, jc_ptr, jc_row, jc_src, symbolic, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Fills `vals` (length [`GramPlan::nnz`]) with the upper triangle of `J^T J`.
    pub fn assemble(&self, row_ptr: &[usize], cols: &[usize], jv: &[f64], vals: &mut [f64]) {
        let mut work = vec![0.0; self.n];
        for c in 0..self.n {
            for t in self.jc_ptr[c]..self.jc_ptr[c + 1] {
                let k = self.jc_row[t];
                let v = jv[self.jc_src[t]];
                if v == 0.0 {
                    continue;
                }
                for e in row_ptr[k]..row_ptr[k + 1] {
                    let c2 = cols[e];
                    if c2 <= c {
                        work[c2] += v * jv[e];
                    }
                }
            }
            for pos in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[pos];
                vals[pos] = work[r];
                work[r] = 0.0;
            }
        }
    }

    pub fn diagonal(&self, vals: &[f64]) -> Vec<f64> {
        self.diag_pos.iter().map(|&p| vals[p]).collect()
    }

    /// Solves `(H + lambda diag(H)) x = rhs` in place. `floor` bounds the scaling
    /// diagonal from below so null directions of `H` are still damped.
    pub fn solve_damped(&self, vals: &[f64], lambda: f64, floor: f64, rhs: &mut [f64]) -> Result<(), SparseError> {
        let mut a = vals.to_vec();
        for &p in &self.diag_pos {
            a[p] += lambda * vals[p].max(floor);
        }
        let mat = SparseColMatRef::new(self.symbolic.as_ref(), &a);
        let llt = Llt::try_new_with_symbolic(self.llt.clone(), mat, Side::Upper)
            .map_err(|_| SparseError::NotPositiveDefinite)?;
        let n = self.n;
        llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(rhs, n, 1));
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SparseError::NotPositiveDefinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // J = [[1, 2, 0], [0, 3, 4], [5, 0, 6]]
    fn small() -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        (vec![0, 2, 4, 6], vec![0, 1, 1, 2, 2, 0], vec![1.0, 2.0, 3.0, 4.0, 6.0, 5.0])
    }

    #[test]
    fn gram_matches_dense_product() {
        let (rp, c, v) = small();
        let plan = GramPlan::new(3, &rp, &c).unwrap();
        let mut h = vec![0.0; plan.nnz()];
        plan.assemble(&rp, &c, &v, &mut h);
        let dense = [[26.0, 2.0, 30.0], [2.0, 13.0, 12.0], [30.0, 12.0, 52.0]];
        for col in 0..3 {
            for pos in plan.col_ptr[col]..plan.col_ptr[col + 1] {
                assert_eq!(h[pos], dense[plan.row_idx[pos]][col]);
            }
        }
        assert_eq!(plan.diagonal(&h), vec![26.0, 13.0, 52.0]);
    }

    #[test]
    fn damped_solve() {
        let (rp, c, v) = small();
        let plan = GramPlan::new(3, &rp, &c).unwrap();
        let mut h = vec![0.0; plan.nnz()];
        plan.assemble(&rp, &c, &v, &mut h);
        let mut x = vec![1.0, 2.0, 3.0];
        plan.solve_damped(&h, 0.0, 0.0, &mut x).unwrap();
        let dense = [[26.0, 2.0, 30.0], [2.0, 13.0, 12.0], [30.0, 12.0, 52.0]];
        for (i, row) in dense.iter().enumerate() {
            let y: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((y - (i + 1) as f64).abs() < 1e-10);
        }
    }
}
