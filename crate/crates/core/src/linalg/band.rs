use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a banded matrix (kl sub-, ku super-diagonals).
///
/// Storage follows the LAPACK `gbtrf` layout: column `j` keeps rows
/// `j - kl - ku ..= j + kl`, leaving room for the fill-in produced by row exchanges.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: ComplexField<RealField = f64> + Copy> BandLu<T> {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // valid for j - kl - ku <= i <= j + kl
        self.kl + self.ku + i - j + j * self.ld
    }

    /// Factor the matrix given by its nonzero triplets (row, col, value).
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            ld,
            data: vec![T::zero(); ld * n],
            pivots: vec![0; n],
        };
        for (i, j, v) in entries {
            if i > j + kl || j > i + ku {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i},{j}) outside declared band kl={kl}, ku={ku}"
                )));
            }
            let k = lu.idx(i, j);
            lu.data[k] += v;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let kw = self.kl + self.ku;
        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].modulus();
            for i in (k + 1)..=imax {
                let v = self.data[self.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular("banded LU"));
            }
            self.pivots[k] = p;
            let jmax = (k + kw).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in (k + 1)..=imax {
                let a = self.idx(i, k);
                self.data[a] /= pivot;
            }
            for j in (k + 1)..=jmax {
                let akj = self.data[self.idx(k, j)];
                if akj == T::zero() {
                    continue;
                }
                for i in (k + 1)..=imax {
                    let l = self.data[self.idx(i, k)];
                    let a = self.idx(i, j);
                    self.data[a] -= l * akj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let kw = self.kl + self.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in (k + 1)..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.data[self.idx(k, k)];
            let bk = b[k];
            if bk != T::zero() {
                for i in k.saturating_sub(kw)..k {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
    }

    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        let mut out = rhs.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn matches_dense_solve_with_pivoting() {
        let n = 12;
        let (kl, ku) = (2, 1);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut entries = Vec::new();
        for j in 0..n {
            for i in j.saturating_sub(ku)..=(j + kl).min(n - 1) {
                // small diagonal forces row exchanges
                let v = if i == j { 0.01 * (i as f64 + 1.0) } else { ((i * 7 + j * 3) % 5) as f64 - 2.0 };
                dense[(i, j)] = v;
                entries.push((i, j, v));
            }
        }
        let lu = BandLu::factor(n, kl, ku, entries).unwrap();
        let rhs = DMatrix::from_fn(n, 2, |i, j| (i + 2 * j) as f64 * 0.3 - 1.0);
        let x = lu.solve(&rhs);
        assert!((&dense * &x - &rhs).norm() < 1e-10 * rhs.norm());
    }

    #[test]
    fn complex_tridiagonal() {
        let n = 30;
        let shift = Complex64::new(-0.5, 2.0);
        let mut entries = Vec::new();
        let mut dense = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            let d = Complex64::new(-2.0, 0.0) + shift;
            entries.push((i, i, d));
            dense[(i, i)] = d;
            if i + 1 < n {
                entries.push((i + 1, i, Complex64::new(1.0, 0.0)));
                entries.push((i, i + 1, Complex64::new(1.3, 0.0)));
                dense[(i + 1, i)] = Complex64::new(1.0, 0.0);
                dense[(i, i + 1)] = Complex64::new(1.3, 0.0);
            }
        }
        let lu = BandLu::factor(n, 1, 1, entries).unwrap();
        let rhs = DMatrix::from_fn(n, 1, |i, _| Complex64::new(i as f64, 1.0));
        let x = lu.solve(&rhs);
        assert!((&dense * &x - &rhs).norm() < 1e-11 * rhs.norm());
    }

    #[test]
    fn singular_is_reported() {
        let entries = vec![(0, 0, 1.0), (1, 1, 0.0)];
        assert!(BandLu::<f64>::factor(2, 0, 0, entries).is_err());
    }
}
