//! Time integration of full and reduced models and the cumulative `L2` error metrics.

mod dopri;
mod expo;
mod input;
mod mesh;

pub use dopri::{integrate, Control, IntegratorOptions, OdeSystem, Stats, Step};
pub use expo::{integrate_exponential, EXPONENTIAL_LIMIT};
pub use input::Input;
pub use mesh::{make_log_mesh, TimeMesh, LOG_MESH_POINTS, LOG_MESH_START};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::StateMatrix;
use crate::system::{LtiSystem, ReducedModel};

/// State decay relative to the initial state at which infinite-horizon runs stop.
pub const DECAY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub rtol: f64,
    pub atol: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Output samples `y` (`p × mesh length`).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: TimeMesh,
    pub y: DMatrix<f64>,
    pub meta: TrajectoryMeta,
}

struct LtiRhs<'a> {
    a: &'a StateMatrix,
    b: &'a DMatrix<f64>,
    input: &'a Input,
    u: std::cell::RefCell<Vec<f64>>,
}

impl OdeSystem for LtiRhs<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn rhs(&self, t: f64, seg_mid: f64, x: &[f64], dx: &mut [f64]) {
        self.a.mul_vec_into(x, dx);
        if !self.input.is_zero() {
            let mut u = self.u.borrow_mut();
            self.input.eval_on_segment(t, seg_mid, &mut u);
            add_bu(self.b, &u, dx);
        }
    }
}

fn add_bu(b: &DMatrix<f64>, u: &[f64], dx: &mut [f64]) {
    let n = b.nrows();
    for (j, &uj) in u.iter().enumerate() {
        if uj != 0.0 {
            let col = &b.as_slice()[j * n..(j + 1) * n];
            for (d, &bij) in dx.iter_mut().zip(col) {
                *d += bij * uj;
            }
        }
    }
}

fn check_input(sys: &LtiSystem, input: &Input) -> Result<()> {
    if !input.is_zero() && input.dim() != sys.input_dim() {
        return Err(Error::dims("input signal", sys.input_dim(), input.dim()));
    }
    Ok(())
}

/// Adaptive Dormand–Prince integration sampled on `mesh` through dense output.
pub fn integrate_lti(sys: &LtiSystem, input: &Input, mesh: &TimeMesh, opts: &IntegratorOptions) -> Result<Trajectory> {
    check_input(sys, input)?;
    let n = sys.state_dim();
    let p = sys.output_dim();
    let pts = mesh.points();
    let mut y = DMatrix::zeros(p, pts.len());
    y.set_column(0, &(&sys.c * &sys.x0));
    let rhs = LtiRhs {
        a: &sys.a,
        b: &sys.b,
        input,
        u: std::cell::RefCell::new(vec![0.0; input.dim()]),
    };
    let mut next = 1;
    let mut buf = vec![0.0; n];
    let c = &sys.c;
    let (_, stats) = integrate(&rhs, 0.0, sys.x0.as_slice(), mesh.t_end(), &input.breakpoints(mesh.t_end()), opts, |step| {
        while next < pts.len() && pts[next] <= step.t_new {
            let t = pts[next];
            if t == step.t_new {
                buf.copy_from_slice(step.y_new);
            } else {
                step.interpolate(t, &mut buf);
            }
            y.set_column(next, &(c * DVector::from_column_slice(&buf)));
            next += 1;
        }
        Control::Continue
    })?;
    if next != pts.len() {
        return Err(Error::Integration {
            t: mesh.t_end(),
            reason: "integration ended before the last mesh point".into(),
        });
    }
    Ok(Trajectory {
        mesh: mesh.clone(),
        y,
        meta: TrajectoryMeta {
            method: "dopri5".into(),
            rtol: opts.rtol,
            atol: opts.atol,
            accepted_steps: stats.accepted,
            rejected_steps: stats.rejected,
        },
    })
}

/// `E(t_k) = (∫₀^{t_k} ‖y − ỹ‖² dτ)^{1/2}` by the cumulative trapezoidal rule.
pub fn cumulative_l2_error(yf: &Trajectory, yr: &Trajectory) -> Result<Vec<f64>> {
    if yf.mesh != yr.mesh || yf.y.shape() != yr.y.shape() {
        return Err(Error::MeshMismatch);
    }
    let diff = &yf.y - &yr.y;
    Ok(cumulative_l2(yf.mesh.points(), &diff))
}

/// Cumulative trapezoidal `L2` norm of the sampled signal `s` (`p × len`).
pub fn cumulative_l2(t: &[f64], s: &DMatrix<f64>) -> Vec<f64> {
    let sq: Vec<f64> = s.column_iter().map(|c| c.norm_squared()).collect();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(t.len());
    out.push(0.0);
    for k in 1..t.len() {
        acc += 0.5 * (t[k] - t[k - 1]) * (sq[k] + sq[k - 1]);
        out.push(acc.sqrt());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    /// Until the joint state decays below [`DECAY_TOL`] relative to its start, or `t_max`.
    Infinite { t_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnergy {
    /// `∫‖y − ỹ‖²`.
    pub error_sq: f64,
    /// `∫‖u‖²`.
    pub input_sq: f64,
    pub t_final: f64,
    /// `false` when an infinite-horizon run hit `t_max` before decaying.
    pub decayed: bool,
    pub accepted_steps: usize,
}

impl ErrorEnergy {
    pub fn error(&self) -> f64 {
        self.error_sq.sqrt()
    }

    pub fn input_norm(&self) -> f64 {
        self.input_sq.sqrt()
    }
}

struct ErrorSystemRhs<'a> {
    fom: &'a LtiSystem,
    rom: &'a ReducedModel,
    input: &'a Input,
    scratch: std::cell::RefCell<(Vec<f64>, Vec<f64>)>,
}

impl OdeSystem for ErrorSystemRhs<'_> {
    fn dim(&self) -> usize {
        self.fom.state_dim() + self.rom.order() + 2
    }

    fn controlled_dim(&self) -> usize {
        self.fom.state_dim() + self.rom.order()
    }

    fn rhs(&self, t: f64, seg_mid: f64, x: &[f64], dx: &mut [f64]) {
        let big = self.fom.state_dim();
        let n = self.rom.order();
        let (xf, rest) = x.split_at(big);
        let xr = &rest[..n];
        let (dxf, drest) = dx.split_at_mut(big);
        let (dxr, dq) = drest.split_at_mut(n);
        self.fom.a.mul_vec_into(xf, dxf);
        let xr_v = DVector::from_column_slice(xr);
        let arx = &self.rom.ar * &xr_v;
        dxr.copy_from_slice(arx.as_slice());
        let mut scratch = self.scratch.borrow_mut();
        let (u, e) = &mut *scratch;
        let mut u_sq = 0.0;
        if !self.input.is_zero() {
            self.input.eval_on_segment(t, seg_mid, u);
            add_bu(&self.fom.b, u, dxf);
            add_bu(&self.rom.br, u, dxr);
            u_sq = u.iter().map(|v| v * v).sum();
        }
        let yf = &self.fom.c * DVector::from_column_slice(xf);
        let yr = &self.rom.cr * &xr_v;
        for (i, ei) in e.iter_mut().enumerate() {
            *ei = yf[i] - yr[i];
        }
        dq[0] = e.iter().map(|v| v * v).sum();
        dq[1] = u_sq;
    }
}

/// `∫‖y − ỹ‖²` and `∫‖u‖²` from a joint integration of FOM and ROM with quadrature states.
/// The ROM starts from its stored `x0r`.
pub fn error_energy(fom: &LtiSystem, rom: &ReducedModel, input: &Input, horizon: Horizon, opts: &IntegratorOptions) -> Result<ErrorEnergy> {
    check_input(fom, input)?;
    if rom.cr.nrows() != fom.output_dim() {
        return Err(Error::dims("error_energy ROM outputs", fom.output_dim(), rom.cr.nrows()));
    }
    if !input.is_zero() && rom.br.ncols() != input.dim() {
        return Err(Error::dims("error_energy ROM inputs", input.dim(), rom.br.ncols()));
    }
    let big = fom.state_dim();
    let n = rom.order();
    let rhs = ErrorSystemRhs {
        fom,
        rom,
        input,
        scratch: std::cell::RefCell::new((vec![0.0; input.dim()], vec![0.0; fom.output_dim()])),
    };
    let mut x0 = Vec::with_capacity(big + n + 2);
    x0.extend_from_slice(fom.x0.as_slice());
    x0.extend_from_slice(rom.x0r.as_slice());
    x0.extend_from_slice(&[0.0, 0.0]);
    let (t_end, stop_check) = match horizon {
        Horizon::Finite(t) => (t, false),
        Horizon::Infinite { t_max } => (t_max, true),
    };
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_end}")));
    }
    let breakpoints = input.breakpoints(t_end);
    let last_break = breakpoints.last().copied().unwrap_or(0.0);
    let norm0 = x0[..big + n].iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut t_final = t_end;
    let mut decayed = !stop_check;
    let (y, stats) = integrate(&rhs, 0.0, &x0, t_end, &breakpoints, opts, |step| {
        if stop_check && step.t_new >= last_break {
            let norm = step.y_new[..big + n].iter().map(|v| v * v).sum::<f64>().sqrt();
            let input_done = input.is_zero() || step.t_new > last_break;
            if input_done && norm <= DECAY_TOL * norm0 {
                t_final = step.t_new;
                decayed = true;
                return Control::Stop;
            }
        }
        Control::Continue
    })?;
    if stop_check && !decayed {
        log::warn!("state did not decay below {DECAY_TOL:e} of its initial norm before t_max = {t_end}");
    }
    Ok(ErrorEnergy {
        error_sq: y[big + n],
        input_sq: y[big + n + 1],
        t_final,
        decayed,
        accepted_steps: stats.accepted,
    })
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with columns `t, y1, …, yp` at full double precision.
pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &Trajectory) -> std::io::Result<()> {
    let p = traj.y.nrows();
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=p).map(|i| format!("y{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in traj.mesh.points().iter().enumerate() {
        let row: Vec<String> = std::iter::once(fmt17(*t)).chain(traj.y.column(k).iter().map(|v| fmt17(*v))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// CSV with columns `t, <name>`.
pub fn write_curve_csv<W: Write>(mut out: W, mesh: &TimeMesh, name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "t,{name}")?;
    for (t, v) in mesh.points().iter().zip(values) {
        writeln!(out, "{},{}", fmt17(*t), fmt17(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay_on_log_mesh() {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let mesh = make_log_mesh(20.0).unwrap();
        let traj = integrate_lti(&sys, &Input::zero(0), &mesh, &IntegratorOptions::accurate()).unwrap();
        for (k, &t) in mesh.points().iter().enumerate() {
            assert!((traj.y[(0, k)] - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn diagonal_system_outputs() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
            DMatrix::zeros(2, 0),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        let mesh = TimeMesh::uniform(3.0, 30).unwrap();
        let traj = integrate_lti(&sys, &Input::zero(0), &mesh, &IntegratorOptions::accurate()).unwrap();
        for (k, &t) in mesh.points().iter().enumerate() {
            assert!((traj.y[(0, k)] - (-t).exp()).abs() < 1e-9);
            assert!((traj.y[(1, k)] - (-2.0 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_error_energy_matches_closed_form() {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let rom = ReducedModel {
            ar: DMatrix::from_element(1, 1, -2.0),
            br: DMatrix::zeros(1, 0),
            cr: DMatrix::from_element(1, 1, 1.0),
            w: None,
            v: None,
            x0r: DVector::from_element(1, 1.0),
        };
        let e = error_energy(&sys, &rom, &Input::zero(0), Horizon::Infinite { t_max: 1e3 }, &IntegratorOptions::accurate()).unwrap();
        assert!(e.decayed);
        assert!((e.error() - (1.0f64 / 12.0).sqrt()).abs() < 1e-9, "{}", e.error());
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let mesh = TimeMesh::uniform(1.0, 10).unwrap();
        let t = integrate_lti(&sys, &Input::zero(0), &mesh, &IntegratorOptions::exploratory()).unwrap();
        assert!(cumulative_l2_error(&t, &t).unwrap().iter().all(|&e| e == 0.0));
        let other = integrate_lti(&sys, &Input::zero(0), &TimeMesh::uniform(1.0, 11).unwrap(), &IntegratorOptions::exploratory()).unwrap();
        assert!(matches!(cumulative_l2_error(&t, &other), Err(Error::MeshMismatch)));
    }

    #[test]
    fn csv_has_full_precision() {
        let sys = LtiSystem::scalar(-1.0, None, 1.0, 1.0);
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let t = integrate_lti(&sys, &Input::zero(0), &mesh, &IntegratorOptions::exploratory()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().nth(1).unwrap();
        assert_eq!(first, "0.0000000000000000e0,1.0000000000000000e0");
    }
}
