//! Benchmark systems: a finite-difference convection–diffusion model, the beam
//! scenarios loaded from external data, and random stable systems.
//!
//! Grid ordering for the convection–diffusion model: node `(i, j)` with
//! `ξ = ((i+1)h, (j+1)h)` has index `j·ñ + i`, so `ξ₁` runs fastest.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::StateMatrix;
use crate::simulate::Input;
use crate::system::LtiSystem;

/// Slack for closed-box membership tests on grid coordinates.
const BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvDiffConfig {
    /// Inner grid points per direction.
    pub n_inner: usize,
}

impl ConvDiffConfig {
    pub fn new(n_inner: usize) -> Result<Self> {
        if n_inner < 3 {
            return Err(Error::InvalidArgument(format!("convection-diffusion grid needs at least 3 inner points, got {n_inner}")));
        }
        Ok(ConvDiffConfig { n_inner })
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n_inner + 1) as f64
    }

    pub fn state_dim(&self) -> usize {
        self.n_inner * self.n_inner
    }

    /// `μ_k = 2 + k/20`, `k = 0, …, 20`.
    pub fn training_parameters() -> Vec<f64> {
        (0..=20).map(|k| 2.0 + k as f64 / 20.0).collect()
    }

    fn coord(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.h()
    }
}

/// Spatial discretization choices, reported alongside generated data.
pub const CONVDIFF_SCHEME: &str = "5-point Laplacian, central-difference convection, node-indicator output quadrature";

/// Sparse `A`, output matrix `C` (`9 × N`), no inputs, and the training matrix `X0` (`N × 21`).
/// The returned system starts from the `μ = 3` initial state.
pub fn convdiff_generate(cfg: &ConvDiffConfig) -> Result<(LtiSystem, DMatrix<f64>)> {
    let m = cfg.n_inner;
    let n = cfg.state_dim();
    let h = cfg.h();
    let diff = 1.0 / (h * h);
    let mut trip = Vec::with_capacity(5 * n);
    for j in 0..m {
        for i in 0..m {
            let k = j * m + i;
            let (x1, x2) = (cfg.coord(i), cfg.coord(j));
            let conv = 0.5 * x1 * x1 * x2 / (2.0 * h);
            trip.push((k, k, -4.0 * diff));
            if i > 0 {
                trip.push((k, k - 1, diff - conv));
            }
            if i + 1 < m {
                trip.push((k, k + 1, diff + conv));
            }
            if j > 0 {
                trip.push((k, k - m, diff));
            }
            if j + 1 < m {
                trip.push((k, k + m, diff));
            }
        }
    }
    let a = StateMatrix::from_triplets(n, &trip)?;
    let mut c = DMatrix::zeros(9, n);
    for l in 1..=9 {
        let (lo2, hi2) = (l as f64 / 10.0 - 1.0 / 50.0, l as f64 / 10.0 + 1.0 / 50.0);
        for j in 0..m {
            let x2 = cfg.coord(j);
            if x2 < lo2 - BOX_SLACK || x2 > hi2 + BOX_SLACK {
                continue;
            }
            for i in 0..m {
                let x1 = cfg.coord(i);
                if x1 >= 9.0 / 20.0 - BOX_SLACK && x1 <= 11.0 / 20.0 + BOX_SLACK {
                    c[(l - 1, j * m + i)] = h * h;
                }
            }
        }
    }
    let mus = ConvDiffConfig::training_parameters();
    let mut x0_train = DMatrix::zeros(n, mus.len());
    for (k, &mu) in mus.iter().enumerate() {
        x0_train.set_column(k, &convdiff_initial_state(mu, cfg)?);
    }
    let x0 = convdiff_initial_state(3.0, cfg)?;
    let sys = LtiSystem::new(a, DMatrix::zeros(n, 0), c, x0)?;
    Ok((sys, x0_train))
}

/// `ξ₁^{1/4} ξ₂^{1/μ} (1−ξ₁)(1−ξ₂) [cos(10(ξ₂+μ/5)³) + exp(ξ₁² μ / (1+ξ₁ξ₂))]` at the inner nodes.
pub fn convdiff_initial_state(mu: f64, cfg: &ConvDiffConfig) -> Result<DVector<f64>> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("initial-state parameter must be positive, got {mu}")));
    }
    let m = cfg.n_inner;
    Ok(DVector::from_fn(cfg.state_dim(), |k, _| {
        let (x1, x2) = (cfg.coord(k % m), cfg.coord(k / m));
        x1.powf(0.25)
            * x2.powf(1.0 / mu)
            * (1.0 - x1)
            * (1.0 - x2)
            * ((10.0 * (x2 + mu / 5.0).powi(3)).cos() + (x1 * x1 * mu / (1.0 + x1 * x2)).exp())
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamCase {
    Trained,
    NotTrained,
}

impl std::str::FromStr for BeamCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trained" => Ok(BeamCase::Trained),
            "not-trained" | "nottrained" | "untrained" => Ok(BeamCase::NotTrained),
            other => Err(Error::InvalidArgument(format!("unknown beam case '{other}' (trained, not-trained)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BeamScenario {
    /// Carries the scenario's initial state.
    pub system: LtiSystem,
    /// `N × 2` training matrix.
    pub x0_train: DMatrix<f64>,
    pub case: BeamCase,
    pub t_end: f64,
    pub input: Input,
}

pub const BEAM_STATE_DIM: usize = 349;
pub const BEAM_FILES: [&str; 3] = ["A.mtx", "B.mtx", "C.mtx"];

/// Loads the beam model from `A.mtx`, `B.mtx`, `C.mtx` in `dir` and builds the scenario.
pub fn beam_load_scenario(dir: &Path, case: BeamCase) -> Result<BeamScenario> {
    for f in BEAM_FILES {
        let p = dir.join(f);
        if !p.exists() {
            return Err(Error::MissingData {
                path: p.display().to_string(),
                hint: format!(
                    "the beam benchmark is not bundled; convert the SLICOT beam model to Matrix Market files {} and place them in {} (or set {})",
                    BEAM_FILES.join(", "),
                    dir.display(),
                    io::DATA_DIR_ENV
                ),
            });
        }
    }
    let a = io::read_state_matrix(&dir.join("A.mtx"))?;
    let n = a.nrows();
    if n != BEAM_STATE_DIM {
        log::warn!("beam model has dimension {n}, expected {BEAM_STATE_DIM}; proceeding");
    }
    if n < 101 {
        return Err(Error::dims("beam model dimension", ">= 101", n));
    }
    let b = io::read_input_matrix(&dir.join("B.mtx"), n)?;
    let c = io::read_output_matrix(&dir.join("C.mtx"), n)?;
    let mut x0_train = DMatrix::zeros(n, 2);
    x0_train[(4, 0)] = 1.0;
    x0_train[(100, 1)] = 100.0;
    let (x0, t_end, input) = match case {
        BeamCase::Trained => (
            &x0_train * DVector::from_vec(vec![10.0, -1.0]),
            1000.0,
            Input::pulse(100.0, 200.0, vec![1.0; b.ncols()])?,
        ),
        BeamCase::NotTrained => (DVector::from_element(n, 5.0), 10_000.0, Input::zero(b.ncols())),
    };
    Ok(BeamScenario {
        system: LtiSystem::new(a, b, c, x0)?,
        x0_train,
        case,
        t_end,
        input,
    })
}

/// Shape and conditioning of random test systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemSpec {
    pub n: usize,
    pub inputs: usize,
    pub outputs: usize,
    /// Lower bound on `-λ_max((A + Aᵀ)/2)`.
    pub margin: f64,
}

/// Random dense system with `A + Aᵀ` negative definite, so `A` is Hurwitz, and a
/// standard normal initial state.
pub fn random_stable_system<R: Rng>(rng: &mut R, spec: &RandomSystemSpec) -> LtiSystem {
    let n = spec.n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = gauss(n, n) * scale;
    let k = gauss(n, n) * scale;
    let a = (&k - k.transpose()) - &l * l.transpose() - DMatrix::identity(n, n) * spec.margin;
    let b = gauss(n, spec.inputs);
    let c = gauss(spec.outputs, n);
    let x0 = DVector::from_column_slice(gauss(n, 1).as_slice());
    LtiSystem::new(a, b, c, x0).expect("consistent random dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_point_grid_output_rows() {
        let cfg = ConvDiffConfig::new(9).unwrap();
        let (sys, _) = convdiff_generate(&cfg).unwrap();
        for l in 1..=9 {
            let row = sys.c.row(l - 1);
            let nz: Vec<usize> = (0..81).filter(|&k| row[k] != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!((row[nz[0]] - 0.01).abs() < 1e-15);
            assert_eq!(nz[0], (l - 1) * 9 + 4);
        }
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(ConvDiffConfig::new(2).is_err());
    }

    #[test]
    fn training_column_twenty_is_simulation_state() {
        let cfg = ConvDiffConfig::new(5).unwrap();
        let (sys, x0) = convdiff_generate(&cfg).unwrap();
        assert_eq!(x0.ncols(), 21);
        assert_eq!(x0.column(20).into_owned(), sys.x0);
    }
}
