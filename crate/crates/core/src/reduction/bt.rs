use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::interp::{irka, isrk, InterpOptions};
use super::{Method, ReductionReport};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solvers::{GramianFactors, GramianMode};
use crate::system::{project, split_system, BiorthPolicy, LtiSystem, ReducedModel, SplitRom};

/// Relative gap below which `σ_n` and `σ_{n+1}` count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UncontrolledMethod {
    Bt,
    Irka,
    Isrk,
}

/// Square roots of the eigenvalues of `PQ`, as singular values of `U_Q U_Pᵀ`.
pub fn hankel_singular_values(p: &GramianFactors, q: &GramianFactors) -> DVector<f64> {
    linalg::singular_values(&(&q.factor * p.factor.transpose()))
}

fn numerical_rank(s: &DVector<f64>, dims: usize) -> usize {
    let top = s.iter().copied().fold(0.0, f64::max);
    let tol = f64::EPSILON * dims.max(1) as f64 * top;
    s.iter().filter(|&&x| x > tol).count()
}

/// Square-root balanced truncation with factors `P ≈ U_PᵀU_P`, `Q ≈ U_QᵀU_Q`.
///
/// `SVD(U_Q U_Pᵀ) = ZΣYᵀ`, `V = U_Pᵀ Y_n Σ_n^{-1/2}`, `W = U_Qᵀ Z_n Σ_n^{-1/2}`.
pub fn balanced_truncation(
    sys: &LtiSystem,
    n: usize,
    p: &GramianFactors,
    q: &GramianFactors,
) -> Result<(ReducedModel, ReductionReport)> {
    let (v, w, hsv) = bt_bases(sys.state_dim(), n, p, q)?;
    let rom = if n == 0 {
        ReducedModel::empty(sys.state_dim(), sys.output_dim(), sys.input_dim())
    } else {
        project(sys, &v, &w, BiorthPolicy::Rebiorthogonalize)?
    };
    let mut report = ReductionReport::new(Method::Bt, n);
    report.alpha = Some(2.0 * hsv.iter().skip(n).sum::<f64>());
    report.hankel_values = hsv.iter().copied().collect();
    fill_stability(&mut report, &rom)?;
    Ok((rom, report))
}

fn bt_bases(
    big: usize,
    n: usize,
    p: &GramianFactors,
    q: &GramianFactors,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    if p.state_dim() != big || q.state_dim() != big {
        return Err(Error::dims("balanced truncation Gramian factors", big, format!("{} / {}", p.state_dim(), q.state_dim())));
    }
    let prod = &q.factor * p.factor.transpose();
    let (z, s, yt) = linalg::svd_sorted(&prod);
    let rank = numerical_rank(&s, prod.nrows().max(prod.ncols()));
    if n > rank {
        return Err(Error::OrderExceedsRank { n, rank });
    }
    if n > 0 && n < s.len() && s[n - 1] - s[n] <= TIE_TOL * s[n - 1] {
        return Err(Error::AmbiguousOrder {
            n,
            sigma_n: s[n - 1],
            sigma_next: s[n],
        });
    }
    let scale = DVector::from_iterator(n, s.iter().take(n).map(|x| 1.0 / x.sqrt()));
    let mut v = p.factor.tr_mul(&yt.rows(0, n).transpose());
    let mut w = q.factor.tr_mul(&z.columns(0, n));
    for j in 0..n {
        v.column_mut(j).scale_mut(scale[j]);
        w.column_mut(j).scale_mut(scale[j]);
    }
    Ok((v, w, s))
}

pub(crate) fn fill_stability(report: &mut ReductionReport, rom: &ReducedModel) -> Result<()> {
    let st = rom.stability()?;
    report.hurwitz = st.is_hurwitz();
    report.max_real_eigenvalue = st.max_real;
    Ok(())
}

/// BT of the augmented system `(A, [B, X0], C)`; the bases then project the original system.
pub fn bt_aug(
    sys: &LtiSystem,
    x0_train: &DMatrix<f64>,
    n: usize,
    q: &GramianFactors,
    mode: &GramianMode,
) -> Result<(ReducedModel, ReductionReport)> {
    if x0_train.nrows() != sys.state_dim() {
        return Err(Error::dims("bt_aug X0 rows", sys.state_dim(), x0_train.nrows()));
    }
    let p_aug = GramianFactors::controllability(&sys.a, &linalg::hcat(&[&sys.b, x0_train]), mode)?;
    bt_aug_with(sys, x0_train, n, &p_aug, q)
}

/// [`bt_aug`] with a precomputed controllability factor of `(A, [B, X0])`.
pub fn bt_aug_with(
    sys: &LtiSystem,
    x0_train: &DMatrix<f64>,
    n: usize,
    p_aug: &GramianFactors,
    q: &GramianFactors,
) -> Result<(ReducedModel, ReductionReport)> {
    let (rom, mut report) = balanced_truncation(sys, n, p_aug, q)?;
    report.method = Method::BtAug;
    report.aug_alpha = report.alpha;
    report.training_columns = Some(x0_train.ncols());
    Ok((rom, report))
}

/// Gramian factors shared by repeated split reductions of one system.
#[derive(Debug, Clone)]
pub struct SplitGramians {
    /// Observability side, `(A, C)`.
    pub q: GramianFactors,
    /// Controllability of `(A, B)`; `None` without inputs.
    pub p_input: Option<GramianFactors>,
    /// Controllability of `(A, X0)`.
    pub p_training: GramianFactors,
}

impl SplitGramians {
    pub fn compute(sys: &LtiSystem, x0_train: &DMatrix<f64>, mode: &GramianMode) -> Result<Self> {
        Self::with_q(sys, x0_train, GramianFactors::observability(&sys.a, &sys.c, mode)?, mode)
    }

    pub fn with_q(sys: &LtiSystem, x0_train: &DMatrix<f64>, q: GramianFactors, mode: &GramianMode) -> Result<Self> {
        if x0_train.nrows() != sys.state_dim() {
            return Err(Error::dims("training matrix rows", sys.state_dim(), x0_train.nrows()));
        }
        let p_input = if has_input(sys) {
            Some(GramianFactors::controllability(&sys.a, &sys.b, mode)?)
        } else {
            None
        };
        let p_training = GramianFactors::controllability(&sys.a, x0_train, mode)?;
        Ok(SplitGramians { q, p_input, p_training })
    }
}

fn has_input(sys: &LtiSystem) -> bool {
    sys.input_dim() > 0 && sys.b.iter().any(|&x| x != 0.0)
}

/// Reduces the controlled part `(A, B, C, 0)` by BT and the uncontrolled part
/// `(A, 0, C, x0)` through the auxiliary system `(A, X0, C)` by the chosen method.
#[allow(clippy::too_many_arguments)]
pub fn split_reduce(
    sys: &LtiSystem,
    x0_train: &DMatrix<f64>,
    n_uc: usize,
    n_c: usize,
    method_uc: UncontrolledMethod,
    q: &GramianFactors,
    mode: &GramianMode,
    interp: &InterpOptions,
) -> Result<(SplitRom, ReductionReport)> {
    let gram = SplitGramians::with_q(sys, x0_train, q.clone(), mode)?;
    split_reduce_with(sys, x0_train, n_uc, n_c, method_uc, &gram, interp)
}

/// [`split_reduce`] with precomputed Gramians.
pub fn split_reduce_with(
    sys: &LtiSystem,
    x0_train: &DMatrix<f64>,
    n_uc: usize,
    n_c: usize,
    method_uc: UncontrolledMethod,
    gram: &SplitGramians,
    interp: &InterpOptions,
) -> Result<(SplitRom, ReductionReport)> {
    if x0_train.nrows() != sys.state_dim() {
        return Err(Error::dims("split_reduce X0 rows", sys.state_dim(), x0_train.nrows()));
    }
    let q = &gram.q;
    let (unc_sys, ctl_sys) = split_system(sys);

    let (controlled, ctl_report) = match &gram.p_input {
        Some(p) if has_input(sys) => balanced_truncation(&ctl_sys, n_c, p, q)?,
        _ => {
            if n_c > 0 {
                log::info!("system has no input; controlled part reduced to order 0");
            }
            let rom = ReducedModel::empty(sys.state_dim(), sys.output_dim(), sys.input_dim());
            let mut r = ReductionReport::new(Method::Bt, 0);
            r.alpha = Some(0.0);
            (rom, r)
        }
    };

    let aux = unc_sys.with_input_matrix(x0_train.clone())?;
    let (aux_rom, mut unc_report) = match method_uc {
        UncontrolledMethod::Bt => balanced_truncation(&aux, n_uc, &gram.p_training, q)?,
        UncontrolledMethod::Irka => irka(&aux, n_uc, interp)?,
        UncontrolledMethod::Isrk => isrk(&aux, n_uc, q, interp)?,
    };
    unc_report.training_columns = Some(x0_train.ncols());
    let uncontrolled = strip_input(&aux_rom, &unc_sys.x0)?;

    let method = match method_uc {
        UncontrolledMethod::Bt => Method::BtBt,
        UncontrolledMethod::Irka => Method::SplitIrka,
        UncontrolledMethod::Isrk => Method::SplitIsrk,
    };
    let mut report = ReductionReport::new(method, n_uc + controlled.order());
    report.alpha = ctl_report.alpha;
    report.hankel_values = unc_report.hankel_values.clone();
    report.iterations = unc_report.iterations;
    report.converged = unc_report.converged && ctl_report.converged;
    report.hurwitz = unc_report.hurwitz && ctl_report.hurwitz;
    report.max_real_eigenvalue = unc_report.max_real_eigenvalue.max(ctl_report.max_real_eigenvalue);
    report.training_columns = Some(x0_train.ncols());
    report.controlled = Some(Box::new(ctl_report));
    report.uncontrolled = Some(Box::new(unc_report));
    if !report.hurwitz {
        log::warn!("{method} produced a reduced model that is not Hurwitz");
    }
    Ok((SplitRom { uncontrolled, controlled }, report))
}

/// Drops the auxiliary input and sets `x̃0 = Wᵀx0`.
fn strip_input(aux_rom: &ReducedModel, x0: &DVector<f64>) -> Result<ReducedModel> {
    let mut rom = aux_rom.clone();
    rom.br = DMatrix::zeros(rom.order(), 0);
    rom.x0r = match &rom.w {
        Some(w) => w.tr_mul(x0),
        None => DVector::zeros(rom.order()),
    };
    Ok(rom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Orientation;

    fn diag_example() -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn hankel_values_of_diagonal_example() {
        let sys = diag_example();
        let p = GramianFactors::dense(&sys.a, &sys.b.transpose(), Orientation::Controllability).unwrap();
        let q = GramianFactors::dense(&sys.a, &sys.c, Orientation::Observability).unwrap();
        let hsv = hankel_singular_values(&p, &q);
        // P = Q = [[1/2, 1/3], [1/3, 1/4]], so σ_i are its eigenvalues
        let g = DMatrix::from_row_slice(2, 2, &[0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25]);
        let (ev, _) = linalg::symmetric_eigen(&g);
        for i in 0..2 {
            assert!((hsv[i] - ev[i]).abs() < 1e-14, "{} vs {}", hsv[i], ev[i]);
        }
        let (rom, report) = balanced_truncation(&sys, 1, &p, &q).unwrap();
        assert!((report.alpha.unwrap() - 2.0 * ev[1]).abs() < 1e-14);
        assert!(rom.biorthogonality_error().unwrap() < 1e-12);
        assert!(report.hurwitz);
    }

    #[test]
    fn scalar_full_order_is_exact() {
        let sys = LtiSystem::scalar(-1.0, Some(2.0), 3.0, 0.0);
        let p = GramianFactors::dense(&sys.a, &sys.b.transpose(), Orientation::Controllability).unwrap();
        let q = GramianFactors::dense(&sys.a, &sys.c, Orientation::Observability).unwrap();
        let (rom, report) = balanced_truncation(&sys, 1, &p, &q).unwrap();
        assert_eq!(report.alpha, Some(0.0));
        assert!((rom.ar[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((rom.br[(0, 0)] * rom.cr[(0, 0)] - 6.0).abs() < 1e-13);
    }

    #[test]
    fn tied_values_are_ambiguous() {
        let sys = LtiSystem::new(
            -DMatrix::<f64>::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let p = GramianFactors::dense(&sys.a, &sys.b.transpose(), Orientation::Controllability).unwrap();
        let q = GramianFactors::dense(&sys.a, &sys.c, Orientation::Observability).unwrap();
        let err = balanced_truncation(&sys, 1, &p, &q).unwrap_err();
        assert!(matches!(err, Error::AmbiguousOrder { n: 1, .. }));
        assert!(err.to_string().contains("n=0 or n=2"));
    }

    #[test]
    fn order_beyond_rank_is_rejected() {
        let sys = diag_example();
        let p = GramianFactors::dense(&sys.a, &sys.b.transpose(), Orientation::Controllability).unwrap();
        let q = GramianFactors::dense(&sys.a, &DMatrix::zeros(1, 2), Orientation::Observability).unwrap();
        assert!(matches!(
            balanced_truncation(&sys, 1, &p, &q),
            Err(Error::OrderExceedsRank { .. })
        ));
    }
}
