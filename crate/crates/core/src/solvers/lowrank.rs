//! Low-rank alternating-directions implicit (ADI) iteration for large Lyapunov
//! equations with low-rank right-hand sides.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::lyapunov::Orientation;
use super::residual::lyapunov_residual_factored;
use crate::error::{Error, Result};
use crate::linalg::{self, RitzOptions, ShiftedSolver, StateMatrix};

#[derive(Debug, Clone)]
pub struct LowRankOptions {
    /// Target relative residual `‖R‖_F / ‖FᵀF‖_F`.
    pub tol: f64,
    /// Defaults to `min(N, 400)`.
    pub max_rank: Option<usize>,
    pub max_iter: usize,
    pub num_shifts: usize,
    pub ritz: RitzOptions,
    /// Singular values of the factor below `compress_tol·s_max` are dropped.
    pub compress_tol: f64,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        LowRankOptions {
            tol: 1e-10,
            max_rank: None,
            max_iter: 400,
            num_shifts: 20,
            ritz: RitzOptions::default(),
            compress_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LowRankSolution {
    /// `m×N` factor with `X ≈ UᵀU`.
    pub factor: DMatrix<f64>,
    /// Independently evaluated relative residual of the returned factor.
    pub residual: f64,
    /// Residual tracked by the iteration (before compression/truncation).
    pub iteration_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shift {
    Real(f64),
    /// Represents the conjugate pair `{p, p̄}`, `Im p > 0`.
    Pair(Complex64),
}

/// Heuristic min-max shift selection over a set of Ritz values.
pub fn penzl_shifts(candidates: &[Complex64], count: usize) -> Vec<Complex64> {
    let mut pool: Vec<Complex64> = candidates
        .iter()
        .filter(|z| z.re < 0.0 && z.re.is_finite() && z.im.is_finite())
        .map(|z| {
            if z.im.abs() <= 1e-12 * z.norm() {
                Complex64::new(z.re, 0.0)
            } else {
                *z
            }
        })
        .collect();
    // close under conjugation
    let conj: Vec<Complex64> = pool.iter().filter(|z| z.im != 0.0).map(|z| z.conj()).collect();
    pool.extend(conj);
    pool.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pool.dedup_by(|a, b| (*a - *b).norm() <= 1e-14 * a.norm());
    if pool.is_empty() || count == 0 {
        return Vec::new();
    }
    let rational = |t: Complex64, set: &[Complex64]| -> f64 {
        set.iter().map(|&p| ((t - p) / (t + p)).norm()).product()
    };
    let first = pool
        .iter()
        .copied()
        .min_by(|&p, &q| {
            let mp = pool.iter().map(|&t| rational(t, &[p])).fold(0.0, f64::max);
            let mq = pool.iter().map(|&t| rational(t, &[q])).fold(0.0, f64::max);
            mp.total_cmp(&mq)
        })
        .expect("non-empty pool");
    let mut chosen = vec![first];
    if first.im != 0.0 {
        chosen.push(first.conj());
    }
    while chosen.len() < count {
        let (next, value) = pool
            .iter()
            .map(|&t| (t, rational(t, &chosen)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty pool");
        if value <= 0.0 {
            break;
        }
        chosen.push(next);
        if next.im != 0.0 {
            chosen.push(next.conj());
        }
    }
    chosen
}

fn to_shift_list(shifts: &[Complex64]) -> Vec<Shift> {
    let mut out = Vec::new();
    for &p in shifts {
        if p.im == 0.0 {
            out.push(Shift::Real(p.re));
        } else if p.im > 0.0 {
            out.push(Shift::Pair(p));
        }
    }
    out
}

enum Factorization {
    Real(ShiftedSolver<f64>),
    Complex(ShiftedSolver<Complex64>),
}

/// Low-rank ADI for `ÂX + XÂᵀ = −B̂B̂ᵀ` where `Â = Aᵀ, B̂ = Fᵀ` for the observability
/// orientation and `Â = A, B̂ = Fᵀ` for controllability. Returns `U` with `X ≈ UᵀU`.
///
/// Complex shift pairs are handled in real arithmetic (one complex solve per pair).
pub fn lowrank_adi(a: &StateMatrix, f: &DMatrix<f64>, orientation: Orientation, opts: &LowRankOptions) -> Result<LowRankSolution> {
    let n = a.nrows();
    if f.ncols() != n {
        return Err(Error::dims("low-rank Lyapunov RHS factor", format!("k x {n}"), format!("{:?}", f.shape())));
    }
    let max_rank = opts.max_rank.unwrap_or(n.min(400)).min(n);
    let b = f.transpose();
    let rhs_norm = (f * &b).norm();
    if rhs_norm == 0.0 {
        return Ok(LowRankSolution {
            factor: DMatrix::zeros(0, n),
            residual: 0.0,
            iteration_residual: 0.0,
            iterations: 0,
            converged: true,
            truncated: false,
        });
    }
    let transposed = orientation == Orientation::Observability;

    let ritz = linalg::ritz_values(a, &opts.ritz)?;
    let shifts = to_shift_list(&penzl_shifts(&ritz, opts.num_shifts));
    if shifts.is_empty() {
        return Err(Error::InvalidArgument(
            "no Ritz value in the open left half-plane; is A Hurwitz?".into(),
        ));
    }
    let (kl, ku) = a.bandwidths();
    let bytes_per = if a.is_sparse() { n * (2 * kl + ku + 1) * 16 } else { n * n * 16 };
    let cache_ok = bytes_per.saturating_mul(shifts.len()) < (1usize << 31);
    let mut cache: Vec<Option<Factorization>> = (0..shifts.len()).map(|_| None).collect();

    let mut w = b.clone();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut cols = 0usize;
    let mut res = 1.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut iterations = 0usize;
    let col_budget = (4 * max_rank).max(200);
    let mut compressed: Option<DMatrix<f64>> = None;

    while iterations < opts.max_iter {
        let idx = iterations % shifts.len();
        let factor = match cache[idx].take() {
            Some(fz) => fz,
            None => match shifts[idx] {
                Shift::Real(p) => Factorization::Real(a.factor_shifted(p, transposed)?),
                Shift::Pair(p) => Factorization::Complex(a.factor_shifted(p, transposed)?),
            },
        };
        match (&factor, shifts[idx]) {
            (Factorization::Real(lu), Shift::Real(p)) => {
                let v = lu.solve(&w);
                w -= &v * (2.0 * p);
                blocks.push(v * (-2.0 * p).sqrt());
            }
            (Factorization::Complex(lu), Shift::Pair(p)) => {
                let v = lu.solve(&linalg::to_complex(&w));
                let (vr, vi) = (linalg::real_part(&v), linalg::imag_part(&v));
                let gamma = 2.0 * (-p.re).sqrt();
                let delta = p.re / p.im;
                let mix = &vr + &vi * delta;
                w += &mix * (gamma * gamma);
                blocks.push(mix * gamma);
                blocks.push(vi * (gamma * (delta * delta + 1.0).sqrt()));
            }
            _ => unreachable!("factorization kind follows the shift kind"),
        }
        if cache_ok {
            cache[idx] = Some(factor);
        }
        iterations += 1;
        cols += blocks.iter().rev().take(2).map(|blk| blk.ncols()).sum::<usize>();

        res = (w.tr_mul(&w)).norm() / rhs_norm;
        if res < best * 0.999 {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cols > col_budget {
            let mut parts: Vec<&DMatrix<f64>> = Vec::new();
            if let Some(c) = compressed.as_ref() {
                parts.push(c);
            }
            parts.extend(blocks.iter());
            compressed = Some(linalg::compress_columns(&linalg::hcat(&parts), opts.compress_tol));
            blocks.clear();
            cols = compressed.as_ref().map_or(0, |c| c.ncols());
        }
        if res <= opts.tol || since_best >= 2 * shifts.len() {
            break;
        }
    }

    let mut parts: Vec<&DMatrix<f64>> = Vec::new();
    if let Some(c) = compressed.as_ref() {
        parts.push(c);
    }
    parts.extend(blocks.iter());
    let mut z = linalg::compress_columns(&linalg::hcat(&parts), opts.compress_tol);
    let truncated = z.ncols() > max_rank;
    if truncated {
        z = z.columns(0, max_rank).into_owned();
    }
    let factor = z.transpose();
    let residual = lyapunov_residual_factored(a, &factor, f, orientation);
    Ok(LowRankSolution {
        factor,
        residual,
        iteration_residual: res,
        iterations,
        converged: res <= opts.tol && !truncated,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::lyapunov::solve_lyapunov_dense;

    fn diffusion_1d(n: usize) -> StateMatrix {
        let h = 1.0 / (n as f64 + 1.0);
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, -2.0 / (h * h)));
            if i + 1 < n {
                trip.push((i, i + 1, 1.0 / (h * h)));
                trip.push((i + 1, i, 1.0 / (h * h)));
            }
        }
        StateMatrix::from_triplets(n, &trip).unwrap()
    }

    #[test]
    fn shifts_are_conjugate_closed_and_stable() {
        let cands = vec![
            Complex64::new(-1.0, 2.0),
            Complex64::new(-3.0, 0.0),
            Complex64::new(-10.0, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        let s = penzl_shifts(&cands, 6);
        assert!(s.iter().all(|z| z.re < 0.0));
        for z in s.iter().filter(|z| z.im != 0.0) {
            assert!(s.iter().any(|w| (*w - z.conj()).norm() < 1e-14));
        }
    }

    #[test]
    fn one_dimensional_diffusion_reaches_tolerance() {
        let n = 400;
        let a = diffusion_1d(n);
        let c = DMatrix::from_fn(1, n, |_, j| if j == n / 3 { 1.0 } else { 0.0 });
        let sol = lowrank_adi(&a, &c, Orientation::Observability, &LowRankOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.residual <= 1e-10, "residual {}", sol.residual);
        assert!(sol.factor.nrows() < 100, "rank {}", sol.factor.nrows());
    }

    #[test]
    fn zero_rhs_gives_empty_factor() {
        let a = diffusion_1d(30);
        let sol = lowrank_adi(&a, &DMatrix::zeros(2, 30), Orientation::Observability, &LowRankOptions::default()).unwrap();
        assert_eq!(sol.factor.nrows(), 0);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn nonsymmetric_complex_spectrum_matches_dense() {
        let n = 60;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, -1.0 - 0.05 * i as f64));
            if i + 1 < n {
                trip.push((i, i + 1, 3.0));
                trip.push((i + 1, i, -3.0));
            }
        }
        let a = StateMatrix::from_triplets(n, &trip).unwrap();
        let f = DMatrix::from_fn(2, n, |r, j| ((r + j) % 5) as f64 - 2.0);
        for o in [Orientation::Observability, Orientation::Controllability] {
            let sol = lowrank_adi(&a, &f, o, &LowRankOptions { tol: 1e-12, ..Default::default() }).unwrap();
            let dense = solve_lyapunov_dense(&a.to_dense(), &f.tr_mul(&f), o).unwrap();
            let gap = linalg::spectral_norm(&(sol.factor.tr_mul(&sol.factor) - &dense));
            assert!(gap <= 1e-9 * linalg::spectral_norm(&dense), "gap {gap}");
        }
    }
}
