//! State-space data model: full-order systems, projected reduced models, the
//! controlled/uncontrolled splitting, and stability checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, RitzOptions, StateMatrix};

/// Stability margin relative to the spectral radius.
pub const TOL_STAB: f64 = 1e-12;

/// Bi-orthogonality tolerance for `WᵀV = I`.
pub const BIORTH_TOL: f64 = 1e-10;

/// `ẋ = A x + B u, y = C x, x(0) = x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: StateMatrix,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl LtiSystem {
    pub fn new(a: impl Into<StateMatrix>, b: DMatrix<f64>, c: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        let a = a.into();
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("LtiSystem A", "square", format!("{}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dims("LtiSystem B rows", n, b.nrows()));
        }
        if c.ncols() != n {
            return Err(Error::dims("LtiSystem C cols", n, c.ncols()));
        }
        if x0.len() != n {
            return Err(Error::dims("LtiSystem x0", n, x0.len()));
        }
        if !a.is_finite() || b.iter().chain(c.iter()).chain(x0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("system matrices contain non-finite entries".into()));
        }
        Ok(LtiSystem { a, b, c, x0 })
    }

    /// Scalar system `(a, b, c, x0)`; `b = None` gives an uncontrolled system.
    pub fn scalar(a: f64, b: Option<f64>, c: f64, x0: f64) -> Self {
        let bm = match b {
            Some(v) => DMatrix::from_element(1, 1, v),
            None => DMatrix::zeros(1, 0),
        };
        LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            bm,
            DMatrix::from_element(1, 1, c),
            DVector::from_element(1, x0),
        )
        .expect("consistent scalar dimensions")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_x0(&self, x0: DVector<f64>) -> Result<Self> {
        LtiSystem::new(self.a.clone(), self.b.clone(), self.c.clone(), x0)
    }

    pub fn with_input_matrix(&self, b: DMatrix<f64>) -> Result<Self> {
        LtiSystem::new(self.a.clone(), b, self.c.clone(), self.x0.clone())
    }

    /// Dense stability check; for sparse `A` this densifies, so prefer
    /// [`rightmost_eigenvalue_estimate`] at scale.
    pub fn stability(&self) -> Result<StabilityReport> {
        stability(&self.a.to_dense())
    }
}

/// `ẋr = Ar xr + Br u, ỹ = Cr xr, xr(0) = x0r`, optionally with its projection bases.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub ar: DMatrix<f64>,
    pub br: DMatrix<f64>,
    pub cr: DMatrix<f64>,
    pub w: Option<DMatrix<f64>>,
    pub v: Option<DMatrix<f64>>,
    pub x0r: DVector<f64>,
}

impl ReducedModel {
    pub fn order(&self) -> usize {
        self.ar.nrows()
    }

    /// A reduced model of order zero with the given output/input sizes.
    pub fn empty(full_order: usize, outputs: usize, inputs: usize) -> Self {
        ReducedModel {
            ar: DMatrix::zeros(0, 0),
            br: DMatrix::zeros(0, inputs),
            cr: DMatrix::zeros(outputs, 0),
            w: Some(DMatrix::zeros(full_order, 0)),
            v: Some(DMatrix::zeros(full_order, 0)),
            x0r: DVector::zeros(0),
        }
    }

    /// `‖WᵀV − I‖_F`, or `None` without bases.
    pub fn biorthogonality_error(&self) -> Option<f64> {
        match (&self.w, &self.v) {
            (Some(w), Some(v)) => {
                let n = v.ncols();
                Some((w.tr_mul(v) - DMatrix::identity(n, n)).norm())
            }
            _ => None,
        }
    }

    /// Reduced initial state for a full-order `x0`, i.e. `Wᵀ x0`.
    pub fn reduce_initial_state(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.w.as_ref().ok_or(Error::MissingLeftBasis)?;
        if w.nrows() != x0.len() {
            return Err(Error::dims("reduce_initial_state", w.nrows(), x0.len()));
        }
        Ok(w.tr_mul(x0))
    }

    pub fn with_x0(&self, x0: &DVector<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.x0r = self.reduce_initial_state(x0)?;
        Ok(out)
    }

    /// The reduced model viewed as a (dense) full system of dimension n.
    pub fn as_system(&self) -> LtiSystem {
        LtiSystem::new(self.ar.clone(), self.br.clone(), self.cr.clone(), self.x0r.clone())
            .expect("reduced model dimensions are consistent")
    }

    pub fn stability(&self) -> Result<StabilityReport> {
        stability(&self.ar)
    }
}

/// Separately reduced uncontrolled (`u = 0`) and controlled (`x0 = 0`) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRom {
    pub uncontrolled: ReducedModel,
    pub controlled: ReducedModel,
}

impl SplitRom {
    pub fn order(&self) -> usize {
        self.uncontrolled.order() + self.controlled.order()
    }

    /// Block-diagonal model `ỹ = ỹ_uc + ỹ_c` driven by the controlled part's input.
    /// Carries no bases.
    pub fn combined(&self) -> ReducedModel {
        let (u, c) = (&self.uncontrolled, &self.controlled);
        let (nu, nc) = (u.order(), c.order());
        let n = nu + nc;
        let q = c.br.ncols();
        let mut ar = DMatrix::zeros(n, n);
        ar.view_mut((0, 0), (nu, nu)).copy_from(&u.ar);
        ar.view_mut((nu, nu), (nc, nc)).copy_from(&c.ar);
        let mut br = DMatrix::zeros(n, q);
        br.view_mut((nu, 0), (nc, q)).copy_from(&c.br);
        let cr = linalg::hcat(&[&u.cr, &c.cr]);
        let mut x0r = DVector::zeros(n);
        x0r.rows_mut(0, nu).copy_from(&u.x0r);
        ReducedModel {
            ar,
            br,
            cr,
            w: None,
            v: None,
            x0r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    /// Rightmost eigenvalue within `TOL_STAB·ρ(A)` of the imaginary axis.
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub max_real: f64,
    pub spectral_radius: f64,
    pub class: StabilityClass,
}

impl StabilityReport {
    pub fn is_hurwitz(&self) -> bool {
        self.class == StabilityClass::Stable
    }
}

pub fn stability(a: &DMatrix<f64>) -> Result<StabilityReport> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims("stability", "square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if a.nrows() == 0 {
        return Ok(StabilityReport {
            max_real: f64::NEG_INFINITY,
            spectral_radius: 0.0,
            class: StabilityClass::Stable,
        });
    }
    let ev = linalg::eigenvalues(a)?;
    Ok(classify(&ev))
}

fn classify(ev: &[Complex64]) -> StabilityReport {
    let max_real = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let spectral_radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = TOL_STAB * spectral_radius;
    let class = if max_real < -tol {
        StabilityClass::Stable
    } else if max_real <= 0.0 {
        StabilityClass::Marginal
    } else {
        StabilityClass::Unstable
    };
    StabilityReport {
        max_real,
        spectral_radius,
        class,
    }
}

/// True iff all eigenvalues of `a` have real part below `−TOL_STAB·ρ(a)`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool> {
    Ok(stability(a)?.is_hurwitz())
}

/// Fails with [`Error::NotHurwitz`] unless `a` is Hurwitz.
pub fn require_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    let report = stability(a)?;
    if report.is_hurwitz() {
        Ok(())
    } else {
        Err(Error::NotHurwitz {
            max_real: report.max_real,
        })
    }
}

/// Estimate of the eigenvalue of a (sparse) `A` with the largest real part among
/// those nearest the origin, from shift-invert Arnoldi. An estimate, not a proof.
pub fn rightmost_eigenvalue_estimate(a: &StateMatrix) -> Result<Complex64> {
    let ritz = linalg::ritz_values(
        a,
        &RitzOptions {
            forward_steps: 0,
            inverse_steps: 40,
            seed: 17,
        },
    )?;
    ritz.into_iter()
        .max_by(|x, y| x.re.total_cmp(&y.re))
        .ok_or(Error::InvalidArgument("empty matrix".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiorthPolicy {
    /// Reject bases violating `‖WᵀV − I‖ ≤ 1e-10`.
    #[default]
    Reject,
    /// Replace `W` by `W (VᵀW)⁻¹`.
    Rebiorthogonalize,
}

/// Petrov–Galerkin projection: `Ar = WᵀAV, Br = WᵀB, Cr = CV, x0r = Wᵀx0`.
pub fn project(sys: &LtiSystem, v: &DMatrix<f64>, w: &DMatrix<f64>, policy: BiorthPolicy) -> Result<ReducedModel> {
    let n_full = sys.state_dim();
    if v.nrows() != n_full || w.nrows() != n_full || v.ncols() != w.ncols() {
        return Err(Error::dims(
            "project bases",
            format!("{n_full}xn pair"),
            format!("V {}x{}, W {}x{}", v.nrows(), v.ncols(), w.nrows(), w.ncols()),
        ));
    }
    let n = v.ncols();
    let wtv = w.tr_mul(v);
    let err = (&wtv - DMatrix::identity(n, n)).norm();
    let w = if err <= BIORTH_TOL {
        w.clone()
    } else {
        let smin = linalg::singular_values(&wtv).iter().copied().fold(f64::INFINITY, f64::min);
        match policy {
            BiorthPolicy::Reject => return Err(Error::NotBiorthogonal(smin)),
            BiorthPolicy::Rebiorthogonalize => rebiorthogonalize(v, w)?,
        }
    };
    let ar = w.tr_mul(&sys.a.mul_mat(v));
    let br = w.tr_mul(&sys.b);
    let cr = &sys.c * v;
    let x0r = w.tr_mul(&sys.x0);
    Ok(ReducedModel {
        ar,
        br,
        cr,
        w: Some(w),
        v: Some(v.clone()),
        x0r,
    })
}

/// `W (VᵀW)⁻¹`, so that the result satisfies `WᵀV = I`.
pub fn rebiorthogonalize(v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let vtw = v.tr_mul(w);
    let s = linalg::singular_values(&vtw);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = s.iter().copied().fold(0.0, f64::max);
    if s.is_empty() {
        return Ok(w.clone());
    }
    if smin <= 1e-13 * smax || smin == 0.0 {
        return Err(Error::NotBiorthogonal(smin));
    }
    // W_new = W (VᵀW)⁻¹  ⇔  (VᵀW)ᵀ W_newᵀ = Wᵀ
    let wt_new = linalg::solve_dense(&vtw.transpose(), &w.transpose(), "rebiorthogonalize")?;
    Ok(wt_new.transpose())
}

/// `(A, 0, C, x0)` and `(A, B, C, 0)`, whose outputs sum to that of `sys`.
pub fn split_system(sys: &LtiSystem) -> (LtiSystem, LtiSystem) {
    let n = sys.state_dim();
    let uncontrolled = LtiSystem {
        a: sys.a.clone(),
        b: DMatrix::zeros(n, 0),
        c: sys.c.clone(),
        x0: sys.x0.clone(),
    };
    let controlled = LtiSystem {
        a: sys.a.clone(),
        b: sys.b.clone(),
        c: sys.c.clone(),
        x0: DVector::zeros(n),
    };
    (uncontrolled, controlled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&DMatrix::from_element(1, 1, -1.0)).unwrap());
        assert!(!is_hurwitz(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap());
        assert!(is_hurwitz(&DMatrix::from_row_slice(2, 2, &[-1.0, 100.0, 0.0, -2.0])).unwrap());
        assert!(!is_hurwitz(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0])).unwrap());
    }

    #[test]
    fn marginal_spectrum_is_classified() {
        let r = stability(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert_eq!(r.class, StabilityClass::Marginal);
        let r = stability(&DMatrix::from_row_slice(2, 2, &[-1e-14, 1.0, -1.0, -1e-14])).unwrap();
        assert_eq!(r.class, StabilityClass::Marginal);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(is_hurwitz(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn identity_projection_reproduces_system() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.2, 0.0, 0.1, -2.0, 0.3, 0.0, -0.4, -3.0]);
        let sys = LtiSystem::new(
            a.clone(),
            DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 2.0]),
            DMatrix::from_row_slice(1, 3, &[0.5, 1.0, -1.0]),
            DVector::from_row_slice(&[1.0, -1.0, 0.5]),
        )
        .unwrap();
        let id = DMatrix::identity(3, 3);
        let rom = project(&sys, &id, &id, BiorthPolicy::Reject).unwrap();
        assert!((rom.ar - a).norm() <= 1e-14);
        assert!((rom.br - &sys.b).norm() <= 1e-14);
        assert!((rom.cr - &sys.c).norm() <= 1e-14);
        assert!((rom.x0r - &sys.x0).norm() <= 1e-14);
    }

    #[test]
    fn scalar_projection() {
        let sys = LtiSystem::scalar(-2.0, Some(3.0), 4.0, 5.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        let rom = project(&sys, &one, &one, BiorthPolicy::Reject).unwrap();
        assert_eq!(rom.ar[(0, 0)], -2.0);
        assert_eq!(rom.br[(0, 0)], 3.0);
        assert_eq!(rom.cr[(0, 0)], 4.0);
        assert_eq!(rom.x0r[0], 5.0);
    }

    #[test]
    fn non_biorthogonal_bases() {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let v = DMatrix::from_element(1, 1, 2.0);
        let w = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            project(&sys, &v, &w, BiorthPolicy::Reject),
            Err(Error::NotBiorthogonal(_))
        ));
        let rom = project(&sys, &v, &w, BiorthPolicy::Rebiorthogonalize).unwrap();
        assert!(rom.biorthogonality_error().unwrap() < 1e-15);
        let zero = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            project(&sys, &v, &zero, BiorthPolicy::Rebiorthogonalize),
            Err(Error::NotBiorthogonal(_))
        ));
    }

    #[test]
    fn split_parts() {
        let sys = LtiSystem::scalar(-1.0, Some(1.0), 1.0, 1.0);
        let (uc, c) = split_system(&sys);
        assert_eq!(uc.input_dim(), 0);
        assert_eq!(uc.x0[0], 1.0);
        assert_eq!(c.x0[0], 0.0);
        assert_eq!(c.b[(0, 0)], 1.0);
    }
}
