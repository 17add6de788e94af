//! Lyapunov and Sylvester solvers behind the system Gramians and the error-system
//! Gramian blocks.

mod lowrank;
mod lyapunov;
mod residual;
mod sylvester;

pub use lowrank::{lowrank_adi, penzl_shifts, LowRankOptions, LowRankSolution};
pub use lyapunov::{solve_lyapunov_dense, Orientation};
pub use residual::{lyapunov_residual_dense, lyapunov_residual_factored, sylvester_residual};
pub use sylvester::solve_sylvester_sparse_dense;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, StateMatrix};

/// Dense solves are used up to this state dimension in [`GramianMode::Auto`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramianKind {
    /// Dense `Q` with a symmetric-eigenvalue factor.
    ExactDense,
    /// Dense `Q` with its Cholesky factor.
    CholeskyOfDense,
    LowRank,
}

#[derive(Debug, Clone, Default)]
pub enum GramianMode {
    Dense,
    LowRank(LowRankOptions),
    /// Dense up to [`DENSE_LIMIT`] states, low-rank beyond.
    #[default]
    Auto,
}

/// A Gramian, or a low-rank approximation of it, in factored form `X ≈ UᵀU`.
#[derive(Debug, Clone)]
pub struct GramianFactors {
    pub kind: GramianKind,
    pub side: Orientation,
    /// Present for the dense kinds.
    pub dense: Option<DMatrix<f64>>,
    /// `m×N`.
    pub factor: DMatrix<f64>,
    /// Relative Frobenius residual of the solved equation.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GramianFactors {
    /// Dense solve of `AᵀQ + QA = −FᵀF` (or `AP + PAᵀ = −FᵀF`) and its factorization.
    pub fn dense(a: &StateMatrix, f: &DMatrix<f64>, side: Orientation) -> Result<Self> {
        let n = a.nrows();
        if f.ncols() != n {
            return Err(Error::dims("Gramian RHS factor", format!("k x {n}"), format!("{:?}", f.shape())));
        }
        let ad = a.to_dense();
        let rhs = f.tr_mul(f);
        let q = solve_lyapunov_dense(&ad, &rhs, side)?;
        let residual = lyapunov_residual_dense(&ad, &q, &rhs, side);
        let (kind, factor) = match q.clone().cholesky() {
            Some(ch) => (GramianKind::CholeskyOfDense, ch.l().transpose()),
            None => (GramianKind::ExactDense, linalg::psd_factor(&q, 0.0)),
        };
        Ok(GramianFactors {
            kind,
            side,
            dense: Some(q),
            factor,
            residual,
            converged: true,
            iterations: 0,
        })
    }

    pub fn low_rank(a: &StateMatrix, f: &DMatrix<f64>, side: Orientation, opts: &LowRankOptions) -> Result<Self> {
        let sol = lowrank_adi(a, f, side, opts)?;
        if !sol.converged {
            log::warn!(
                "low-rank Lyapunov solve stopped at residual {:.3e} (target {:.1e}): tolerance not reached",
                sol.residual,
                opts.tol
            );
        }
        Ok(GramianFactors {
            kind: GramianKind::LowRank,
            side,
            dense: None,
            factor: sol.factor,
            residual: sol.residual,
            converged: sol.converged,
            iterations: sol.iterations,
        })
    }

    pub fn compute(a: &StateMatrix, f: &DMatrix<f64>, side: Orientation, mode: &GramianMode) -> Result<Self> {
        match mode {
            GramianMode::Dense => Self::dense(a, f, side),
            GramianMode::LowRank(opts) => Self::low_rank(a, f, side, opts),
            GramianMode::Auto if a.nrows() <= DENSE_LIMIT => Self::dense(a, f, side),
            GramianMode::Auto => Self::low_rank(a, f, side, &LowRankOptions::default()),
        }
    }

    /// Observability Gramian of `(A, C)`.
    pub fn observability(a: &StateMatrix, c: &DMatrix<f64>, mode: &GramianMode) -> Result<Self> {
        Self::compute(a, c, Orientation::Observability, mode)
    }

    /// Controllability Gramian of `(A, B)`.
    pub fn controllability(a: &StateMatrix, b: &DMatrix<f64>, mode: &GramianMode) -> Result<Self> {
        Self::compute(a, &b.transpose(), Orientation::Controllability, mode)
    }

    pub fn state_dim(&self) -> usize {
        self.factor.ncols()
    }

    pub fn rank(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// `X v` evaluated from the dense matrix when present, otherwise as `Uᵀ(Uv)`.
    pub fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.dense {
            Some(q) => q * v,
            None => self.factor.tr_mul(&(&self.factor * v)),
        }
    }
}

/// Low-rank solve of the observability equation with the given tolerance and rank cap.
pub fn solve_lyapunov_lowrank(a: &StateMatrix, c: &DMatrix<f64>, tol: f64, max_rank: usize) -> Result<GramianFactors> {
    let opts = LowRankOptions {
        tol,
        max_rank: Some(max_rank),
        ..Default::default()
    };
    GramianFactors::low_rank(a, c, Orientation::Observability, &opts)
}

/// Blocks of the observability Gramian of the FOM/ROM error system.
#[derive(Debug, Clone)]
pub struct ErrorGramianBlocks {
    pub qfull: GramianFactors,
    /// `N×n`, solves `AᵀQ̄ + Q̄Ãr = CᵀC̃r`.
    pub qbar: DMatrix<f64>,
    /// `n×n`, solves `ÃrᵀQ̂ + Q̂Ãr = −C̃rᵀC̃r`.
    pub qhat: DMatrix<f64>,
    pub qbar_residual: f64,
    pub qhat_residual: f64,
}

impl ErrorGramianBlocks {
    pub fn solve(a: &StateMatrix, c: &DMatrix<f64>, ar: &DMatrix<f64>, cr: &DMatrix<f64>, qfull: GramianFactors) -> Result<Self> {
        let rhs_bar = c.tr_mul(cr);
        let qbar = solve_sylvester_sparse_dense(a, ar, &rhs_bar)?;
        let qbar_residual = sylvester_residual(a, ar, &qbar, &rhs_bar);
        let rhs_hat = cr.tr_mul(cr);
        let qhat = solve_lyapunov_dense(ar, &rhs_hat, Orientation::Observability)?;
        let qhat_residual = lyapunov_residual_dense(ar, &qhat, &rhs_hat, Orientation::Observability);
        Ok(ErrorGramianBlocks {
            qfull,
            qbar,
            qhat,
            qbar_residual,
            qhat_residual,
        })
    }
}
