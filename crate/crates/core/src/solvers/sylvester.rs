use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, StateMatrix};

/// Solves `AᵀX + X Ar = RHS` for `X ∈ R^{N×n}` with large (sparse) `A` and small `Ar`.
///
/// `Ar = Z T Zᴴ` (complex Schur). With `Y = XZ`, `G = RHS·Z`, column `j` of `Y`
/// solves `(Aᵀ + t_jj I) y_j = g_j − Σ_{i<j} t_ij y_i`, processed in increasing `j`.
/// Each column costs one shifted N-dimensional factorization and solve.
pub fn solve_sylvester_sparse_dense(a: &StateMatrix, ar: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let big = a.nrows();
    let n = ar.nrows();
    if ar.ncols() != n {
        return Err(Error::dims("sylvester Ar", "square", format!("{}x{}", n, ar.ncols())));
    }
    if rhs.shape() != (big, n) {
        return Err(Error::dims("sylvester RHS", format!("{big}x{n}"), format!("{:?}", rhs.shape())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(big, 0));
    }
    let schur = linalg::complex_schur(ar)?;
    let z = &schur.unitary;
    let t = &schur.upper;
    let g = linalg::rcmul(rhs, z);

    let mut y = CMatrix::zeros(big, n);
    for j in 0..n {
        let mut r = g.column(j).into_owned();
        for i in 0..j {
            let tij = t[(i, j)];
            if tij != Complex64::new(0.0, 0.0) {
                r.axpy(-tij, &y.column(i), Complex64::new(1.0, 0.0));
            }
        }
        let solver = a.factor_shifted_complex(t[(j, j)], true)?;
        let rhs_j = CMatrix::from_column_slice(big, 1, r.as_slice());
        let yj = solver.solve(&rhs_j);
        y.column_mut(j).copy_from(&yj.column(0));
    }
    let x = linalg::cmul_adjoint_right(&y, z);
    let re = linalg::real_part(&x);
    let im = linalg::imag_part(&x);
    let (re_norm, im_norm) = (re.norm(), im.norm());
    if im_norm > 1e-8 * re_norm && im_norm > 1e-14 * rhs.norm() {
        return Err(Error::ImaginaryResidue(im_norm / re_norm.max(f64::MIN_POSITIVE)));
    }
    Ok(re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::residual::sylvester_residual;

    #[test]
    fn scalar() {
        let a = StateMatrix::Dense(DMatrix::from_element(1, 1, -1.0));
        let x = solve_sylvester_sparse_dense(&a, &DMatrix::from_element(1, 1, -2.0), &DMatrix::from_element(1, 1, 12.0)).unwrap();
        assert!((x[(0, 0)] + 4.0).abs() < 1e-14);
    }

    #[test]
    fn complex_reduced_spectrum_sparse_a() {
        let n_big = 40;
        let mut trip = Vec::new();
        for i in 0..n_big {
            trip.push((i, i, -2.0 - 0.1 * i as f64));
            if i + 1 < n_big {
                trip.push((i, i + 1, 1.0));
                trip.push((i + 1, i, 0.6));
            }
        }
        let a = StateMatrix::from_triplets(n_big, &trip).unwrap();
        let ar = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -1.0, 0.5, 0.0, 0.0, -0.7]);
        let rhs = DMatrix::from_fn(n_big, 3, |i, j| ((i * 3 + j) % 7) as f64 - 3.0);
        let x = solve_sylvester_sparse_dense(&a, &ar, &rhs).unwrap();
        assert!(sylvester_residual(&a, &ar, &x, &rhs) < 1e-12);
    }

    #[test]
    fn overlapping_spectra_are_rejected() {
        // Aᵀ + t I singular when t = 1 is an eigenvalue of -A
        let a = StateMatrix::Dense(DMatrix::from_element(1, 1, -1.0));
        let err = solve_sylvester_sparse_dense(&a, &DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 1.0));
        assert!(matches!(err, Err(Error::SpectraNotSeparated(_))));
    }
}
