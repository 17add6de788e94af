//! Error estimation for the uncontrolled output from the Gramian of the FOM/ROM
//! error system, split into an offline stage (`O(n)` large shifted solves) and a
//! cheap online stage per initial state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, StateMatrix};
use crate::solvers::{ErrorGramianBlocks, GramianFactors, GramianKind, Orientation, DENSE_LIMIT};
use crate::system::{self, LtiSystem, ReducedModel};

/// Bound on `‖Q − UᵀU‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapNorm {
    pub value: f64,
    /// `false` marks a heuristic estimate rather than the true norm.
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct EstimatorOffline {
    /// `m×N` factor with `Q ≈ UᵀU`.
    pub u: DMatrix<f64>,
    /// `N×n`.
    pub qbar: DMatrix<f64>,
    /// `n×n`.
    pub qhat: DMatrix<f64>,
    /// `N×n`, the map `x0 ↦ x̃0 = Wᵀx0`.
    pub w: DMatrix<f64>,
    pub q_dense: Option<DMatrix<f64>>,
    pub gap: Option<GapNorm>,
    pub gramian_kind: GramianKind,
    pub gramian_residual: f64,
    pub qbar_residual: f64,
    pub qhat_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub delta: f64,
    /// Before clamping at zero.
    pub raw_square: f64,
    pub upper_bound: Option<f64>,
    pub bound_certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorOptions {
    pub gap_bound: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { gap_bound: true }
    }
}

/// Solves for the error-system Gramian blocks of `sys` against the uncontrolled ROM.
///
/// Refuses ROMs whose `Ãr` is not Hurwitz; `A` is assumed Hurwitz.
pub fn build_error_gramian(sys: &LtiSystem, rom_uc: &ReducedModel, q: GramianFactors, opts: &EstimatorOptions) -> Result<EstimatorOffline> {
    let big = sys.state_dim();
    let w = rom_uc.w.clone().ok_or(Error::MissingLeftBasis)?;
    if w.nrows() != big || w.ncols() != rom_uc.order() {
        return Err(Error::dims("estimator W", format!("{big}x{}", rom_uc.order()), format!("{:?}", w.shape())));
    }
    if rom_uc.cr.nrows() != sys.output_dim() {
        return Err(Error::dims("estimator ROM outputs", sys.output_dim(), rom_uc.cr.nrows()));
    }
    if q.state_dim() != big || q.side != Orientation::Observability {
        return Err(Error::dims("estimator Gramian factor", format!("observability, N={big}"), format!("{:?}, N={}", q.side, q.state_dim())));
    }
    system::require_hurwitz(&rom_uc.ar)?;
    let gap = if opts.gap_bound { Some(gap_norm(&sys.a, &sys.c, &q)?) } else { None };
    let blocks = ErrorGramianBlocks::solve(&sys.a, &sys.c, &rom_uc.ar, &rom_uc.cr, q)?;
    Ok(EstimatorOffline {
        u: blocks.qfull.factor,
        qbar: blocks.qbar,
        qhat: blocks.qhat,
        w,
        q_dense: blocks.qfull.dense,
        gap,
        gramian_kind: blocks.qfull.kind,
        gramian_residual: blocks.qfull.residual,
        qbar_residual: blocks.qbar_residual,
        qhat_residual: blocks.qhat_residual,
    })
}

/// `‖Q − UᵀU‖₂` by dense eigensolve when possible; otherwise `‖R‖₂ / (2|Re λ_r|)` with
/// `R` the Lyapunov residual of the factor and `λ_r` an estimate of the rightmost
/// eigenvalue of `A`, which is only a heuristic for non-normal `A`.
pub fn gap_norm(a: &StateMatrix, c: &DMatrix<f64>, q: &GramianFactors) -> Result<GapNorm> {
    if let Some(qd) = &q.dense {
        if qd.nrows() <= DENSE_LIMIT {
            let diff = qd - q.factor.tr_mul(&q.factor);
            let (ev, _) = linalg::symmetric_eigen(&diff);
            let value = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            return Ok(GapNorm { value, certified: true });
        }
    }
    let res_two = residual_spectral_norm(a, &q.factor, c);
    let lambda = system::rightmost_eigenvalue_estimate(a)?;
    if lambda.re >= 0.0 {
        return Err(Error::NotHurwitz { max_real: lambda.re });
    }
    log::debug!("gap estimate: residual norm {res_two:.3e}, rightmost eigenvalue {lambda}");
    Ok(GapNorm {
        value: res_two / (2.0 * lambda.re.abs()),
        certified: false,
    })
}

/// `‖AᵀUᵀU + UᵀUA + CᵀC‖₂` from the QR of the `N×(2m+p)` generator.
fn residual_spectral_norm(a: &StateMatrix, u: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let m = u.nrows();
    let p = c.nrows();
    let ut = u.transpose();
    let g = linalg::hcat(&[&a.tr_mul_mat(&ut), &ut, &c.transpose()]);
    let k = 2 * m + p;
    if k == 0 {
        return 0.0;
    }
    let r = if k >= g.nrows() { g } else { g.qr().r() };
    let mut perm = DMatrix::zeros(k, k);
    for i in 0..m {
        perm[(i, m + i)] = 1.0;
        perm[(m + i, i)] = 1.0;
    }
    for i in 0..p {
        perm[(2 * m + i, 2 * m + i)] = 1.0;
    }
    let small = &r * perm * r.transpose();
    let (ev, _) = linalg::symmetric_eigen(&small);
    ev.iter().fold(0.0f64, |mx, x| mx.max(x.abs()))
}

impl EstimatorOffline {
    pub fn state_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn reduced_order(&self) -> usize {
        self.w.ncols()
    }

    fn check_x0(&self, x0: &DVector<f64>) -> Result<()> {
        if x0.len() != self.state_dim() {
            return Err(Error::dims("estimator x0", self.state_dim(), x0.len()));
        }
        Ok(())
    }

    /// `‖Ux0‖² + 2x0ᵀQ̄x̃0 + x̃0ᵀQ̂x̃0` with `x̃0 = Wᵀx0`; never forms an `N×N` product.
    pub fn estimate(&self, x0: &DVector<f64>) -> Result<Estimate> {
        self.check_x0(x0)?;
        let ux = &self.u * x0;
        let xr = self.w.tr_mul(x0);
        let raw = ux.norm_squared() + 2.0 * x0.dot(&(&self.qbar * &xr)) + xr.dot(&(&self.qhat * &xr));
        let delta = raw.max(0.0).sqrt();
        let (upper_bound, bound_certified) = match self.gap {
            Some(g) => (Some((delta * delta + g.value * x0.norm_squared()).sqrt()), g.certified),
            None => (None, false),
        };
        Ok(Estimate {
            delta,
            raw_square: raw,
            upper_bound,
            bound_certified,
        })
    }

    /// Exact squared `L2` error of the uncontrolled outputs, using the dense Gramian.
    pub fn exact_error_quadratic_form(&self, x0: &DVector<f64>) -> Result<f64> {
        self.check_x0(x0)?;
        let q = self.q_dense.as_ref().ok_or(Error::DenseGramianRequired)?;
        let xr = self.w.tr_mul(x0);
        Ok(x0.dot(&(q * x0)) + 2.0 * x0.dot(&(&self.qbar * &xr)) + xr.dot(&(&self.qhat * &xr)))
    }

    /// `Z = X̄0ᵀ(UᵀU + Q̄Wᵀ + WQ̄ᵀ + WQ̂Wᵀ)X̄0` with its spectral norm's square root and
    /// the maximizing unit coefficient vector.
    pub fn z_matrix(&self, x0bar: &DMatrix<f64>) -> Result<ZMatrix> {
        if x0bar.nrows() != self.state_dim() {
            return Err(Error::dims("z_matrix X0", self.state_dim(), x0bar.nrows()));
        }
        let ux = &self.u * x0bar;
        let wx = self.w.tr_mul(x0bar);
        let qx = self.qbar.tr_mul(x0bar);
        let cross = qx.tr_mul(&wx);
        let mut z = ux.tr_mul(&ux) + &cross + cross.transpose() + wx.tr_mul(&(&self.qhat * &wx));
        linalg::symmetrize(&mut z);
        let (ev, vecs) = linalg::symmetric_eigen(&z);
        if ev.is_empty() {
            return Ok(ZMatrix {
                z,
                norm: 0.0,
                sqrt_norm: 0.0,
                worst_v0: DVector::zeros(0),
            });
        }
        let k = (0..ev.len()).max_by(|&i, &j| ev[i].abs().total_cmp(&ev[j].abs())).expect("non-empty");
        let norm = ev[k].abs();
        Ok(ZMatrix {
            z,
            norm,
            sqrt_norm: norm.sqrt(),
            worst_v0: vecs.column(k).into_owned(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ZMatrix {
    pub z: DMatrix<f64>,
    pub norm: f64,
    pub sqrt_norm: f64,
    pub worst_v0: DVector<f64>,
}

/// Total output error bound `α̃‖u‖_{L2} + Δ` for split ROMs with a BT-reduced controlled part.
pub fn combined_bound(alpha_controlled: f64, input_l2: f64, delta: f64) -> f64 {
    alpha_controlled * input_l2 + delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::GramianMode;

    fn scalar_case() -> (LtiSystem, ReducedModel) {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let rom = ReducedModel {
            ar: DMatrix::from_element(1, 1, -2.0),
            br: DMatrix::zeros(1, 0),
            cr: DMatrix::from_element(1, 1, 1.0),
            w: Some(DMatrix::from_element(1, 1, 1.0)),
            v: None,
            x0r: DVector::from_element(1, 1.0),
        };
        (sys, rom)
    }

    #[test]
    fn scalar_blocks_and_estimate() {
        let (sys, rom) = scalar_case();
        let q = GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap();
        let off = build_error_gramian(&sys, &rom, q, &EstimatorOptions::default()).unwrap();
        assert!((off.qbar[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        assert!((off.qhat[(0, 0)] - 0.25).abs() < 1e-15);
        let x0 = DVector::from_element(1, 1.0);
        let est = off.estimate(&x0).unwrap();
        assert!((est.delta - (1.0f64 / 12.0).sqrt()).abs() < 1e-14);
        assert!((off.exact_error_quadratic_form(&x0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        let z = off.z_matrix(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((z.sqrt_norm - est.delta).abs() < 1e-14);
        assert!(est.upper_bound.unwrap() >= est.delta);
    }

    #[test]
    fn unstable_rom_is_refused() {
        let (sys, mut rom) = scalar_case();
        rom.ar[(0, 0)] = 0.5;
        let q = GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap();
        let err = build_error_gramian(&sys, &rom, q, &EstimatorOptions::default()).unwrap_err();
        assert!(err.to_string().contains("Assumption 1 violated"));
    }

    #[test]
    fn low_rank_data_has_no_exact_form() {
        let (sys, rom) = scalar_case();
        let mut q = GramianFactors::observability(&sys.a, &sys.c, &GramianMode::Dense).unwrap();
        q.dense = None;
        q.kind = GramianKind::LowRank;
        let off = build_error_gramian(&sys, &rom, q, &EstimatorOptions { gap_bound: false }).unwrap();
        assert!(matches!(
            off.exact_error_quadratic_form(&DVector::from_element(1, 1.0)),
            Err(Error::DenseGramianRequired)
        ));
    }
}
