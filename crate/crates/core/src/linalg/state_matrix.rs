use nalgebra::{ComplexField, DMatrix, Dyn, LU};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;

use super::band::BandLu;
use crate::error::{Error, Result};

/// System matrix of a full-order model, stored densely or in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub enum StateMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

/// Factorization of `A + s I` (or `Aᵀ + s I`) reused across right-hand sides.
#[derive(Debug, Clone)]
pub enum ShiftedSolver<T: ComplexField> {
    Dense(LU<T, Dyn, Dyn>),
    Band(BandLu<T>),
}

impl<T: ComplexField<RealField = f64> + Copy> ShiftedSolver<T> {
    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        match self {
            ShiftedSolver::Dense(lu) => lu.solve(rhs).expect("factorization checked for singularity"),
            ShiftedSolver::Band(lu) => lu.solve(rhs),
        }
    }
}

impl From<DMatrix<f64>> for StateMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        StateMatrix::Dense(m)
    }
}

impl From<CsrMatrix<f64>> for StateMatrix {
    fn from(m: CsrMatrix<f64>) -> Self {
        StateMatrix::Sparse(m)
    }
}

impl StateMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut coo = CooMatrix::new(n, n);
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::dims("sparse triplet", format!("index < {n}"), format!("({i},{j})")));
            }
            coo.push(i, j, v);
        }
        Ok(StateMatrix::Sparse(CsrMatrix::from(&coo)))
    }

    pub fn nrows(&self) -> usize {
        match self {
            StateMatrix::Dense(m) => m.nrows(),
            StateMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            StateMatrix::Dense(m) => m.ncols(),
            StateMatrix::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, StateMatrix::Sparse(_))
    }

    pub fn nnz(&self) -> usize {
        match self {
            StateMatrix::Dense(m) => m.len(),
            StateMatrix::Sparse(m) => m.nnz(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            StateMatrix::Dense(m) => m.iter().all(|x| x.is_finite()),
            StateMatrix::Sparse(m) => m.values().iter().all(|x| x.is_finite()),
        }
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            StateMatrix::Dense(m) => {
                let n = m.nrows();
                y.iter_mut().for_each(|v| *v = 0.0);
                for (j, &xj) in x.iter().enumerate() {
                    if xj != 0.0 {
                        let col = &m.as_slice()[j * n..(j + 1) * n];
                        for (yi, &aij) in y.iter_mut().zip(col) {
                            *yi += aij * xj;
                        }
                    }
                }
            }
            StateMatrix::Sparse(m) => {
                for (i, row) in m.row_iter().enumerate() {
                    let mut acc = 0.0;
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        acc += v * x[j];
                    }
                    y[i] = acc;
                }
            }
        }
    }

    /// `y = Aᵀ x`
    pub fn tr_mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            StateMatrix::Dense(m) => {
                let n = m.nrows();
                for (j, yj) in y.iter_mut().enumerate() {
                    let col = &m.as_slice()[j * n..(j + 1) * n];
                    *yj = col.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            StateMatrix::Sparse(m) => {
                y.iter_mut().for_each(|v| *v = 0.0);
                for (i, row) in m.row_iter().enumerate() {
                    let xi = x[i];
                    if xi != 0.0 {
                        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                            y[j] += v * xi;
                        }
                    }
                }
            }
        }
    }

    /// `A X`
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StateMatrix::Dense(m) => m * x,
            StateMatrix::Sparse(_) => {
                let mut out = DMatrix::zeros(self.nrows(), x.ncols());
                for (j, col) in x.column_iter().enumerate() {
                    let mut y = out.column_mut(j);
                    self.mul_vec_into(col.as_slice(), y.as_mut_slice());
                }
                out
            }
        }
    }

    /// `Aᵀ X`
    pub fn tr_mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StateMatrix::Dense(m) => m.tr_mul(x),
            StateMatrix::Sparse(_) => {
                let mut out = DMatrix::zeros(self.ncols(), x.ncols());
                for (j, col) in x.column_iter().enumerate() {
                    let mut y = out.column_mut(j);
                    self.tr_mul_vec_into(col.as_slice(), y.as_mut_slice());
                }
                out
            }
        }
    }

    /// `A X` or `Aᵀ X`
    pub fn apply(&self, x: &DMatrix<f64>, transposed: bool) -> DMatrix<f64> {
        if transposed {
            self.tr_mul_mat(x)
        } else {
            self.mul_mat(x)
        }
    }

    pub fn transpose(&self) -> StateMatrix {
        match self {
            StateMatrix::Dense(m) => StateMatrix::Dense(m.transpose()),
            StateMatrix::Sparse(m) => StateMatrix::Sparse(m.transpose()),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            StateMatrix::Dense(m) => m.clone(),
            StateMatrix::Sparse(m) => {
                let mut d = DMatrix::zeros(m.nrows(), m.ncols());
                for (i, j, v) in m.triplet_iter() {
                    d[(i, j)] += *v;
                }
                d
            }
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match self {
            StateMatrix::Dense(m) => {
                let mut out = Vec::new();
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        if m[(i, j)] != 0.0 {
                            out.push((i, j, m[(i, j)]));
                        }
                    }
                }
                out
            }
            StateMatrix::Sparse(m) => m.triplet_iter().map(|(i, j, v)| (i, j, *v)).collect(),
        }
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (i, j, v) in self.triplets() {
            if v != 0.0 {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            StateMatrix::Dense(m) => m.norm(),
            StateMatrix::Sparse(m) => m.values().iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols()];
        for (_, j, v) in self.triplets() {
            sums[j] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Factor `A + shift I` (or `Aᵀ + shift I` when `transposed`).
    pub fn factor_shifted<T>(&self, shift: T, transposed: bool) -> Result<ShiftedSolver<T>>
    where
        T: ComplexField<RealField = f64> + Copy + From<f64> + std::fmt::Display,
    {
        let n = self.nrows();
        let (kl, ku) = self.bandwidths();
        let (kl, ku) = if transposed { (ku, kl) } else { (kl, ku) };
        let use_band = self.is_sparse() && (kl + ku) * 3 < n;
        let fail = || Error::SpectraNotSeparated(format!("{shift}"));
        if use_band {
            let entries = self
                .triplets()
                .into_iter()
                .map(|(i, j, v)| if transposed { (j, i, T::from(v)) } else { (i, j, T::from(v)) })
                .chain((0..n).map(|i| (i, i, shift)));
            let lu = BandLu::factor(n, kl, ku, entries).map_err(|_| fail())?;
            Ok(ShiftedSolver::Band(lu))
        } else {
            let dense = self.to_dense();
            let mut m: DMatrix<T> = if transposed {
                dense.transpose().map(T::from)
            } else {
                dense.map(T::from)
            };
            for i in 0..n {
                m[(i, i)] += shift;
            }
            let lu = m.lu();
            let u = lu.u();
            let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].modulus()).collect();
            let max = diag.iter().copied().fold(0.0, f64::max);
            let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
            if n > 0 && (min == 0.0 || min <= 1e-15 * max) {
                return Err(fail());
            }
            Ok(ShiftedSolver::Dense(lu))
        }
    }

    pub fn factor_shifted_complex(&self, shift: Complex64, transposed: bool) -> Result<ShiftedSolver<Complex64>> {
        self.factor_shifted(shift, transposed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (StateMatrix, DMatrix<f64>) {
        let n = 30;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, -4.0 - i as f64));
            if i + 1 < n {
                trip.push((i, i + 1, 1.5));
                trip.push((i + 1, i, 0.7));
            }
            if i + 3 < n {
                trip.push((i + 3, i, 0.25));
            }
        }
        let s = StateMatrix::from_triplets(n, &trip).unwrap();
        let d = s.to_dense();
        (s, d)
    }

    #[test]
    fn sparse_products_match_dense() {
        let (s, d) = sample();
        let x = DMatrix::from_fn(30, 3, |i, j| (i as f64 - j as f64) * 0.1);
        assert!((s.mul_mat(&x) - &d * &x).norm() < 1e-14);
        assert!((s.tr_mul_mat(&x) - d.transpose() * &x).norm() < 1e-14);
        assert_eq!(s.bandwidths(), (3, 1));
    }

    #[test]
    fn shifted_solves_agree_between_storage_kinds() {
        let (s, d) = sample();
        let dense = StateMatrix::Dense(d.clone());
        let shift = Complex64::new(0.3, -1.2);
        let rhs = DMatrix::from_fn(30, 2, |i, j| Complex64::new(i as f64, j as f64));
        for transposed in [false, true] {
            let a = s.factor_shifted(shift, transposed).unwrap().solve(&rhs);
            let b = dense.factor_shifted(shift, transposed).unwrap().solve(&rhs);
            assert!((a - b).norm() < 1e-12);
        }
    }
}
