//! Dense and sparse linear-algebra kernels shared by the solvers and reduction methods.

mod arnoldi;
mod band;
mod schur;
mod state_matrix;

pub use arnoldi::{ritz_values, RitzOptions};
pub use band::BandLu;
pub use schur::{complex_schur, eigenvalues, triangular_eigenvectors, ComplexSchur};
pub use state_matrix::{ShiftedSolver, StateMatrix};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.im)
}

fn join(re: DMatrix<f64>, im: DMatrix<f64>) -> CMatrix {
    re.zip_map(&im, Complex64::new)
}

/// Complex product through four real products, which use the blocked real gemm.
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (real_part(a), imag_part(a));
    let (br, bi) = (real_part(b), imag_part(b));
    join(&ar * &br - &ai * &bi, &ar * &bi + &ai * &br)
}

/// `a^H b` without forming the adjoint explicitly in complex storage.
pub fn cmul_adjoint_left(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (real_part(a), imag_part(a));
    let (br, bi) = (real_part(b), imag_part(b));
    join(
        ar.tr_mul(&br) + ai.tr_mul(&bi),
        ar.tr_mul(&bi) - ai.tr_mul(&br),
    )
}

/// `a b^H`.
pub fn cmul_adjoint_right(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (real_part(a), imag_part(a));
    let (br, bi) = (real_part(b), imag_part(b));
    join(
        &ar * br.transpose() + &ai * bi.transpose(),
        &ai * br.transpose() - &ar * bi.transpose(),
    )
}

/// Real matrix times complex matrix.
pub fn rcmul(a: &DMatrix<f64>, b: &CMatrix) -> CMatrix {
    join(a * real_part(b), a * imag_part(b))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// SVD with singular values sorted in descending order.
pub fn svd_sorted(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        let k = r.min(c);
        return (DMatrix::zeros(r, k), DVector::zeros(k), DMatrix::zeros(k, c));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vt_sorted = DMatrix::from_fn(order.len(), vt.ncols(), |i, j| vt[(order[i], j)]);
    let s_sorted = DVector::from_iterator(order.len(), order.iter().map(|&k| s[k]));
    (u_sorted, s_sorted, vt_sorted)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// Eigenvalues and eigenvectors of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Spectral factor `U` (rows = retained eigenpairs) with `m ≈ UᵀU` for symmetric PSD `m`.
/// Eigenvalues at or below `drop_rel * λ_max` are discarded.
pub fn psd_factor(m: &DMatrix<f64>, drop_rel: f64) -> DMatrix<f64> {
    let (values, vectors) = symmetric_eigen(m);
    let top = values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..values.len())
        .filter(|&k| values[k] > drop_rel * top && values[k] > 0.0)
        .collect();
    let n = m.nrows();
    DMatrix::from_fn(keep.len(), n, |r, c| values[keep[r]].sqrt() * vectors[(c, keep[r])])
}

/// Orthonormal basis for the range of `m`, dropping directions below `rel_tol * σ_max`.
pub fn orthonormal_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let (u, s, _) = svd_sorted(m);
    let top = if s.is_empty() { 0.0 } else { s[0] };
    let rank = s.iter().filter(|&&x| x > rel_tol * top && x > 0.0).count();
    u.columns(0, rank).into_owned()
}

/// Thin QR orthonormalization (assumes full column rank).
pub fn thin_q(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    m.clone().qr().q()
}

/// Compress a tall factor `z` (Gram = z zᵀ) to a column count matching its numerical rank.
pub fn compress_columns(z: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (n, k) = z.shape();
    if k == 0 {
        return z.clone();
    }
    let (q, r) = if n >= k {
        let qr = z.clone().qr();
        (qr.q(), qr.r())
    } else {
        (DMatrix::identity(n, n), z.clone())
    };
    let (u, s, _) = svd_sorted(&r);
    let top = if s.is_empty() { 0.0 } else { s[0] };
    let rank = s.iter().filter(|&&x| x > rel_tol * top && x > 0.0).count();
    let mut basis = &q * u.columns(0, rank);
    for (j, mut col) in basis.column_iter_mut().enumerate() {
        col *= s[j];
    }
    basis
}

pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).max().unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        if b.ncols() > 0 {
            out.view_mut((0, offset), (b.nrows(), b.ncols())).copy_from(b);
        }
        offset += b.ncols();
    }
    out
}

/// Solve the small dense real system `m x = rhs`, refusing singular `m`.
pub fn solve_dense(m: &DMatrix<f64>, rhs: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    m.clone().lu().solve(rhs).ok_or(Error::Singular(what))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}
