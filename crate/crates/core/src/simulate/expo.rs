//! Reference propagation by the matrix exponential of the input-augmented generator.

use nalgebra::{DMatrix, DVector};

use super::{Input, TimeMesh, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::system::LtiSystem;

/// Largest state dimension accepted by [`integrate_exponential`].
pub const EXPONENTIAL_LIMIT: usize = 500;

const MAX_TERMS: usize = 60;

/// `exp(h M) v` by Taylor substeps with `τ‖M‖₁ ≤ 1`.
fn expm_apply(m: &DMatrix<f64>, norm1: f64, h: f64, v: &DVector<f64>) -> DVector<f64> {
    if h == 0.0 || v.is_empty() {
        return v.clone();
    }
    let substeps = (h * norm1).ceil().max(1.0) as usize;
    let tau = h / substeps as f64;
    let mut x = v.clone();
    for _ in 0..substeps {
        let mut term = x.clone();
        let mut sum = x.clone();
        for k in 1..=MAX_TERMS {
            term = (m * &term) * (tau / k as f64);
            sum += &term;
            if term.amax() <= f64::EPSILON * 1e-3 * sum.amax() {
                break;
            }
        }
        x = sum;
    }
    x
}

/// Outputs of a dense system sampled on `mesh`, propagated segment by segment with
/// `exp(t [[A, B G], [0, S]])`, where `u = G z`, `ż = S z` generates the input exactly.
pub fn integrate_exponential(sys: &LtiSystem, input: &Input, mesh: &TimeMesh) -> Result<Trajectory> {
    let n = sys.state_dim();
    if n > EXPONENTIAL_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exponential reference limited to n <= {EXPONENTIAL_LIMIT}, got {n}"
        )));
    }
    if !input.is_zero() && input.dim() != sys.input_dim() {
        return Err(Error::dims("input signal", sys.input_dim(), input.dim()));
    }
    let a = sys.a.to_dense();
    let pts = mesh.points();
    let mut bounds = vec![0.0];
    bounds.extend(input.breakpoints(mesh.t_end()));
    bounds.push(mesh.t_end());

    let mut y = DMatrix::zeros(sys.output_dim(), pts.len());
    y.set_column(0, &(&sys.c * &sys.x0));
    let mut x = sys.x0.clone();
    let mut next = 1;
    for seg in bounds.windows(2) {
        let (ta, tb) = (seg[0], seg[1]);
        let gen = input.generator(ta, tb);
        let r = gen.z0.len();
        let mut m = DMatrix::zeros(n + r, n + r);
        m.view_mut((0, 0), (n, n)).copy_from(&a);
        if r > 0 {
            m.view_mut((0, n), (n, r)).copy_from(&(&sys.b * &gen.g));
            m.view_mut((n, n), (r, r)).copy_from(&gen.s);
        }
        let norm1 = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
        let mut state = DVector::zeros(n + r);
        state.rows_mut(0, n).copy_from(&x);
        state.rows_mut(n, r).copy_from_slice(&gen.z0);
        let mut t = ta;
        while next < pts.len() && pts[next] <= tb {
            state = expm_apply(&m, norm1, pts[next] - t, &state);
            t = pts[next];
            y.set_column(next, &(&sys.c * state.rows(0, n)));
            next += 1;
        }
        if t < tb {
            state = expm_apply(&m, norm1, tb - t, &state);
        }
        x = state.rows(0, n).into_owned();
    }
    Ok(Trajectory {
        mesh: mesh.clone(),
        y,
        meta: TrajectoryMeta {
            method: "exponential".into(),
            rtol: 0.0,
            atol: 0.0,
            accepted_steps: 0,
            rejected_steps: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_form_with_pulse() {
        // ẋ = −x + u, u = 1 on [1, 2], x(0) = 1.
        let sys = LtiSystem::scalar(-1.0, Some(1.0), 1.0, 1.0);
        let input = Input::pulse(1.0, 2.0, vec![1.0]).unwrap();
        let mesh = TimeMesh::uniform(4.0, 40).unwrap();
        let traj = integrate_exponential(&sys, &input, &mesh).unwrap();
        let exact = |t: f64| {
            let free = (-t).exp();
            let forced = if t < 1.0 {
                0.0
            } else if t <= 2.0 {
                1.0 - (-(t - 1.0)).exp()
            } else {
                (1.0 - (-1.0f64).exp()) * (-(t - 2.0)).exp()
            };
            free + forced
        };
        for (k, &t) in mesh.points().iter().enumerate() {
            assert!((traj.y[(0, k)] - exact(t)).abs() < 1e-13, "t={t}");
        }
    }
}
