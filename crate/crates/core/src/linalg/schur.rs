use nalgebra::DMatrix;
use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

/// `A = U T Uᴴ` with `U` unitary and `T` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub unitary: CMatrix,
    pub upper: CMatrix,
}

impl ComplexSchur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.upper.nrows()).map(|i| self.upper[(i, i)]).collect()
    }
}

fn real_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::dims("schur", "square matrix", format!("{}x{}", n, a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if let Some(schur) = nalgebra_lapack::Schur::try_new(a.clone()) {
        let (q, t) = schur.unpack();
        if reconstructs(a, &q, &t) {
            return Ok((q, t));
        }
        log::warn!(
            "LAPACK Schur form of a {n}x{n} matrix failed verification; falling back to the native solver \
             (with OpenBLAS, setting OPENBLAS_CORETYPE=Haswell usually fixes this)"
        );
    }
    let schur = a.clone().try_schur(f64::EPSILON, 200 * n.max(10)).ok_or(Error::EigenFailure(n))?;
    let (q, t) = schur.unpack();
    if !reconstructs(a, &q, &t) {
        return Err(Error::EigenFailure(n));
    }
    Ok((q, t))
}

/// Probes `Q T Qᵀ v = A v` with fixed pseudo-random vectors.
fn reconstructs(a: &DMatrix<f64>, q: &DMatrix<f64>, t: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    (0..2).all(|k| {
        let v = nalgebra::DVector::from_fn(n, |i, _| (((i * 7919 + k * 104_729) % 1013) as f64 / 1013.0) - 0.5);
        let lhs = q * (t * q.tr_mul(&v));
        let ok = (lhs - a * &v).norm() <= 1e-10 * scale * v.norm();
        ok && q.iter().chain(t.iter()).all(|x| x.is_finite())
    })
}

fn is_negligible_subdiag(t: &DMatrix<f64>, m: usize) -> bool {
    let scale = t[(m, m)].abs() + t[(m - 1, m - 1)].abs();
    t[(m, m - 1)] == 0.0 || t[(m, m - 1)].abs() <= f64::EPSILON * scale
}

fn eig2x2(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let half_tr = 0.5 * (a + d);
    let disc = Complex64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
    (half_tr + disc, half_tr - disc)
}

/// Eigenvalues of a real square matrix, read off its real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (_, t) = real_schur(a)?;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && !is_negligible_subdiag(&t, i + 1) {
            let (l1, l2) = eig2x2(t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            out.push(l1);
            out.push(l2);
            i += 2;
        } else {
            out.push(Complex64::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    Ok(out)
}

/// Complex Schur form from the real Schur form, splitting each 2x2 block with a
/// complex Givens rotation.
pub fn complex_schur(a: &DMatrix<f64>) -> Result<ComplexSchur> {
    let n = a.nrows();
    if n == 0 {
        return Ok(ComplexSchur {
            unitary: CMatrix::zeros(0, 0),
            upper: CMatrix::zeros(0, 0),
        });
    }
    let (q, t_real) = real_schur(a)?;
    let mut t = super::to_complex(&t_real);
    let mut u = super::to_complex(&q);

    for m in (1..n).rev() {
        if is_negligible_subdiag(&t_real, m) {
            t[(m, m - 1)] = Complex64::new(0.0, 0.0);
            continue;
        }
        let (l1, _) = eig2x2(
            t[(m - 1, m - 1)].re,
            t[(m - 1, m)].re,
            t[(m, m - 1)].re,
            t[(m, m)].re,
        );
        let mu = l1 - t[(m, m)];
        let sub = t[(m, m - 1)];
        let r = (mu.norm_sqr() + sub.norm_sqr()).sqrt();
        let c = mu / r;
        let s = sub / r;
        // G = [conj(c) s; -s c], applied from the left to rows m-1, m.
        for j in (m - 1)..n {
            let x = t[(m - 1, j)];
            let y = t[(m, j)];
            t[(m - 1, j)] = c.conj() * x + s * y;
            t[(m, j)] = -s * x + c * y;
        }
        // Gᴴ = [c -conj(s); conj(s) conj(c)] from the right on columns m-1, m.
        for i in 0..=m {
            let x = t[(i, m - 1)];
            let y = t[(i, m)];
            t[(i, m - 1)] = x * c + y * s.conj();
            t[(i, m)] = -x * s + y * c.conj();
        }
        for i in 0..n {
            let x = u[(i, m - 1)];
            let y = u[(i, m)];
            u[(i, m - 1)] = x * c + y * s.conj();
            u[(i, m)] = -x * s + y * c.conj();
        }
        t[(m, m - 1)] = Complex64::new(0.0, 0.0);
    }
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(ComplexSchur { unitary: u, upper: t })
}

/// Right eigenvectors of an upper-triangular matrix (columns, unit 2-norm).
pub fn triangular_eigenvectors(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let scale = t.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(f64::MIN_POSITIVE);
    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut denom = t[(i, i)] - t[(k, k)];
            if denom.norm() < f64::EPSILON * scale {
                denom = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            x[(i, k)] = -acc / denom;
        }
        let norm = x.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..=k {
            x[(i, k)] /= norm;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cmul, cmul_adjoint_right, to_complex};

    #[test]
    fn complex_schur_reconstructs_rotation_like_matrix() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 3.0, 0.2, 0.0, //
                -3.0, -1.0, 0.5, 1.0, //
                0.0, 0.0, -2.0, 5.0, //
                0.1, 0.0, -4.0, -0.5,
            ],
        );
        let s = complex_schur(&a).unwrap();
        let rebuilt = cmul_adjoint_right(&cmul(&s.unitary, &s.upper), &s.unitary);
        assert!((rebuilt - to_complex(&a)).norm() < 1e-12);
        for j in 0..4 {
            for i in (j + 1)..4 {
                assert_eq!(s.upper[(i, j)].norm(), 0.0);
            }
        }
        let mut ev = s.eigenvalues();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        let mut direct = eigenvalues(&a).unwrap();
        direct.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        for (x, y) in ev.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn rotation_has_imaginary_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ev = eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|l| l.re.abs() < 1e-14 && (l.im.abs() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn triangular_eigenvectors_satisfy_definition() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -2.0, -1.0, 1.0, 0.0, 0.5, -3.0]);
        let s = complex_schur(&a).unwrap();
        let x = triangular_eigenvectors(&s.upper);
        let tx = cmul(&s.upper, &x);
        for k in 0..3 {
            let lam = s.upper[(k, k)];
            for i in 0..3 {
                assert!((tx[(i, k)] - lam * x[(i, k)]).norm() < 1e-12);
            }
        }
    }
}
