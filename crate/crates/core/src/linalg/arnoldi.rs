use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::state_matrix::StateMatrix;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct RitzOptions {
    /// Arnoldi steps with `A`.
    pub forward_steps: usize,
    /// Arnoldi steps with `A⁻¹`.
    pub inverse_steps: usize,
    pub seed: u64,
}

impl Default for RitzOptions {
    fn default() -> Self {
        RitzOptions {
            forward_steps: 30,
            inverse_steps: 20,
            seed: 0x5eed,
        }
    }
}

/// Upper Hessenberg matrix from `steps` Arnoldi iterations of `op` (with one
/// reorthogonalization pass).
fn arnoldi_hessenberg(
    n: usize,
    steps: usize,
    seed: u64,
    mut op: impl FnMut(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let steps = steps.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0 = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    v0 /= v0.norm();
    let mut basis: Vec<DVector<f64>> = vec![v0];
    let mut h = DMatrix::zeros(steps + 1, steps);
    let mut k_done = 0;
    for k in 0..steps {
        let mut w = op(&basis[k]);
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = v.dot(&w);
                h[(i, k)] += c;
                w.axpy(-c, v, 1.0);
            }
        }
        let beta = w.norm();
        h[(k + 1, k)] = beta;
        k_done = k + 1;
        if beta <= 1e-12 * h.column(k).norm() {
            break;
        }
        basis.push(w / beta);
    }
    h.view((0, 0), (k_done, k_done)).into_owned()
}

/// Ritz values of `A` from forward Arnoldi (large-magnitude end) and inverse
/// Arnoldi (small-magnitude end). Used for ADI shift selection and initial
/// interpolation points.
pub fn ritz_values(a: &StateMatrix, opts: &RitzOptions) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let mut out = Vec::new();
    if n == 0 {
        return Ok(out);
    }
    if opts.forward_steps > 0 {
        let h = arnoldi_hessenberg(n, opts.forward_steps, opts.seed, |x| {
            let mut y = DVector::zeros(n);
            a.mul_vec_into(x.as_slice(), y.as_mut_slice());
            y
        });
        out.extend(super::eigenvalues(&h)?);
    }
    if opts.inverse_steps > 0 {
        let lu = a.factor_shifted(0.0f64, false)?;
        let h = arnoldi_hessenberg(n, opts.inverse_steps, opts.seed.wrapping_add(1), |x| {
            let rhs = DMatrix::from_column_slice(n, 1, x.as_slice());
            DVector::from_column_slice(lu.solve(&rhs).as_slice())
        });
        out.extend(
            super::eigenvalues(&h)?
                .into_iter()
                .filter(|z| z.norm() > 0.0)
                .map(|z| Complex64::new(1.0, 0.0) / z),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_extreme_eigenvalues_of_diagonal() {
        let n = 200;
        let d = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| -(1.0 + i as f64)));
        let a = StateMatrix::Dense(d);
        let ritz = ritz_values(&a, &RitzOptions::default()).unwrap();
        let min_re = ritz.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_re = ritz.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        assert!((max_re + 1.0).abs() < 1e-6, "rightmost {max_re}");
        assert!(min_re < -190.0, "leftmost {min_re}");
    }
}
