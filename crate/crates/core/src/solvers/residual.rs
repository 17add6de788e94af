use nalgebra::DMatrix;

use super::lyapunov::Orientation;
use crate::linalg::{self, StateMatrix};

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// `‖AᵀX + XA + RHS‖_F / ‖RHS‖_F` (or the controllability analogue).
/// Falls back to the absolute residual when `RHS = 0`.
pub fn lyapunov_residual_dense(a: &DMatrix<f64>, x: &DMatrix<f64>, rhs: &DMatrix<f64>, orientation: Orientation) -> f64 {
    let ax = match orientation {
        Orientation::Observability => a.tr_mul(x),
        Orientation::Controllability => a * x,
    };
    let r = &ax + ax.transpose() + rhs;
    relative(r.norm(), rhs.norm())
}

/// Relative residual of `X = UᵀU` against `RHS = FᵀF` without forming `UᵀU`.
///
/// The residual equals `G M Gᵀ` with `G = [AᵀUᵀ, Uᵀ, Fᵀ]` (or `[AUᵀ, Uᵀ, Fᵀ]`)
/// and the symmetric permutation `M = [[0,I,0],[I,0,0],[0,0,I]]`; its Frobenius
/// norm is read off `R M Rᵀ` where `G = QR`.
pub fn lyapunov_residual_factored(a: &StateMatrix, u: &DMatrix<f64>, f: &DMatrix<f64>, orientation: Orientation) -> f64 {
    let n = a.nrows();
    let m = u.nrows();
    let k = f.nrows();
    let ut = u.transpose();
    let aut = a.apply(&ut, orientation == Orientation::Observability);
    let ft = f.transpose();
    let g = linalg::hcat(&[&aut, &ut, &ft]);
    let cols = 2 * m + k;
    let mut perm = DMatrix::zeros(cols, cols);
    for i in 0..m {
        perm[(i, m + i)] = 1.0;
        perm[(m + i, i)] = 1.0;
    }
    for i in 0..k {
        perm[(2 * m + i, 2 * m + i)] = 1.0;
    }
    let num = if cols == 0 {
        0.0
    } else if n <= cols {
        (&g * &perm * g.transpose()).norm()
    } else {
        let r = g.qr().r();
        (&r * &perm * r.transpose()).norm()
    };
    relative(num, (f * &ft).norm())
}

/// `‖AᵀX + X Ar − RHS‖_F / ‖RHS‖_F` for the sparse–dense Sylvester equation.
pub fn sylvester_residual(a: &StateMatrix, ar: &DMatrix<f64>, x: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    let r = a.tr_mul_mat(x) + x * ar - rhs;
    relative(r.norm(), rhs.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_solution_has_unit_residual() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let r = lyapunov_residual_dense(&a, &DMatrix::zeros(3, 3), &DMatrix::identity(3, 3), Orientation::Observability);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn factored_matches_dense_evaluation() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 0.5, 0.0, 0.1, -1.0, 0.2, 0.0, 0.3, -4.0]);
        let u = DMatrix::from_row_slice(2, 3, &[0.3, 0.1, -0.2, 0.0, 0.4, 0.05]);
        let f = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5]);
        let x = u.tr_mul(&u);
        let rhs = f.tr_mul(&f);
        let sa = StateMatrix::Dense(a.clone());
        for o in [Orientation::Observability, Orientation::Controllability] {
            let dense = lyapunov_residual_dense(&a, &x, &rhs, o);
            let fact = lyapunov_residual_factored(&sa, &u, &f, o);
            assert!((dense - fact).abs() < 1e-13 * dense.max(1.0), "{dense} vs {fact}");
        }
        // tall case exercising the QR path
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 - i as f64 } else { 0.05 * ((i + 2 * j) % 3) as f64 });
        let u = DMatrix::from_fn(2, n, |i, j| ((i + j) % 4) as f64 * 0.1);
        let f = DMatrix::from_fn(1, n, |_, j| (j % 3) as f64);
        let dense = lyapunov_residual_dense(&a, &u.tr_mul(&u), &f.tr_mul(&f), Orientation::Observability);
        let fact = lyapunov_residual_factored(&StateMatrix::Dense(a), &u, &f, Orientation::Observability);
        assert!((dense - fact).abs() < 1e-12 * dense);
    }

    #[test]
    fn empty_factor_with_zero_rhs() {
        let a = StateMatrix::Dense(-DMatrix::<f64>::identity(4, 4));
        let r = lyapunov_residual_factored(&a, &DMatrix::zeros(0, 4), &DMatrix::zeros(1, 4), Orientation::Observability);
        assert_eq!(r, 0.0);
    }
}
