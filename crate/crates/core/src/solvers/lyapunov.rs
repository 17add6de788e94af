use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ComplexSchur};

/// Which of the two Lyapunov equations to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `AᵀQ + QA = −RHS`
    Observability,
    /// `AP + PAᵀ = −RHS`
    Controllability,
}

/// Dense Bartels–Stewart solve via the complex Schur form of `A` (or `Aᵀ`).
/// The result is symmetrized.
pub fn solve_lyapunov_dense(a: &DMatrix<f64>, rhs: &DMatrix<f64>, orientation: Orientation) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("solve_lyapunov_dense A", "square", format!("{}x{}", n, a.ncols())));
    }
    if rhs.shape() != (n, n) {
        return Err(Error::dims("solve_lyapunov_dense RHS", format!("{n}x{n}"), format!("{:?}", rhs.shape())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // AP + PAᵀ = −RHS is the observability equation for Aᵀ.
    let schur = match orientation {
        Orientation::Observability => linalg::complex_schur(a)?,
        Orientation::Controllability => linalg::complex_schur(&a.transpose())?,
    };
    let mut x = solve_with_schur(&schur, &(-rhs))?;
    linalg::symmetrize(&mut x);
    Ok(x)
}

/// Solves `AᵀX + XA = F` given the complex Schur form `A = U T Uᴴ`.
///
/// With `Y = UᴴXU`, `G = UᴴFU` the equation becomes `TᴴY + YT = G`; column `j`
/// of `Y` solves the lower-triangular system `(Tᴴ + t_jj I) y_j = g_j − Σ_{i<j} t_ij y_i`.
pub(crate) fn solve_with_schur(schur: &ComplexSchur, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = schur.upper.nrows();
    let u = &schur.unitary;
    let t = &schur.upper;
    let g = linalg::cmul(&linalg::cmul_adjoint_left(u, &linalg::to_complex(f)), u);
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let ts = t.as_slice();
    let mut y = vec![Complex64::new(0.0, 0.0); n * n];
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        r.copy_from_slice(&g.as_slice()[j * n..(j + 1) * n]);
        for i in 0..j {
            let tij = ts[i + j * n];
            if tij != Complex64::new(0.0, 0.0) {
                let yi = &y[i * n..(i + 1) * n];
                for (rk, yk) in r.iter_mut().zip(yi) {
                    *rk -= tij * yk;
                }
            }
        }
        let tjj = ts[j + j * n];
        for k in 0..n {
            let tcol = &ts[k * n..k * n + k];
            let ycol = &y[j * n..j * n + k];
            let mut acc = r[k];
            for (tik, yi) in tcol.iter().zip(ycol) {
                acc -= tik.conj() * yi;
            }
            let denom = ts[k + k * n].conj() + tjj;
            if denom.norm() <= 1e-14 * scale {
                return Err(Error::SingularLyapunov(
                    format!("{}", ts[k + k * n]),
                    format!("{}", tjj),
                ));
            }
            y[j * n + k] = acc / denom;
        }
    }
    let y = CMatrix::from_vec(n, n, y);
    let x = linalg::cmul_adjoint_right(&linalg::cmul(u, &y), u);
    Ok(linalg::real_part(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::residual::lyapunov_residual_dense;

    #[test]
    fn negative_identity() {
        let a = -DMatrix::<f64>::identity(2, 2);
        let q = solve_lyapunov_dense(&a, &DMatrix::identity(2, 2), Orientation::Observability).unwrap();
        assert!((q - DMatrix::identity(2, 2) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn scalar() {
        let a = DMatrix::from_element(1, 1, -3.0);
        let q = solve_lyapunov_dense(&a, &DMatrix::from_element(1, 1, 4.0), Orientation::Observability).unwrap();
        assert!((q[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn complex_spectrum_both_orientations() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[-0.5, 4.0, 0.3, 0.0, -4.0, -0.5, 0.0, 1.0, 0.2, 0.0, -1.0, 0.0, 0.0, 0.1, 2.0, -3.0],
        );
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, -1.0, 0.0, 2.0, 0.0, 1.0]);
        let rhs = c.tr_mul(&c);
        for o in [Orientation::Observability, Orientation::Controllability] {
            let x = solve_lyapunov_dense(&a, &rhs, o).unwrap();
            assert!(lyapunov_residual_dense(&a, &x, &rhs, o) < 1e-13);
            assert!(linalg::asymmetry(&x) == 0.0);
        }
    }

    #[test]
    fn imaginary_axis_is_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let err = solve_lyapunov_dense(&a, &DMatrix::identity(2, 2), Orientation::Observability).unwrap_err();
        assert!(matches!(err, Error::SingularLyapunov(..)));
    }
}
