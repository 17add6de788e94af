//! Python bindings: systems, reductions, the error estimator and experiment runs.
//! Matrices cross the boundary as dense float64 NumPy arrays.

use std::path::PathBuf;

use icmor::benchmarks::{self, ConvDiffConfig, RandomSystemSpec};
use icmor::estimator::{build_error_gramian, EstimatorOffline, EstimatorOptions};
use icmor::experiment::{run_experiment, ExperimentConfig};
use icmor::reduction::{self, InterpOptions, ReductionReport, SplitGramians, UncontrolledMethod};
use icmor::simulate::{error_energy, integrate_lti, make_log_mesh, Horizon, Input, IntegratorOptions};
use icmor::solvers::{GramianFactors, GramianMode, LowRankOptions};
use icmor::system::{LtiSystem, ReducedModel};
use icmor::tables::{reproduce_table as run_table, TableOptions};
use nalgebra::{DMatrix, DVector};
use numpy::ndarray::{Array1, Array2};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

fn to_py_err(e: icmor::Error) -> PyErr {
    let msg = match e.hint() {
        Some(h) => format!("[{}] {e} (hint: {h})", e.module()),
        None => format!("[{}] {e}", e.module()),
    };
    match e {
        icmor::Error::MissingData { .. } => PyFileNotFoundError::new_err(msg),
        icmor::Error::InvalidArgument(_) | icmor::Error::DimensionMismatch { .. } => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for icmor::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn matrix(a: &PyReadonlyArray2<'_, f64>) -> DMatrix<f64> {
    let v = a.as_array();
    DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[[i, j]])
}

fn vector(a: &PyReadonlyArray1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(a.len().unwrap_or(0), a.as_array().iter().copied())
}

fn to_array2<'py>(py: Python<'py>, m: &DMatrix<f64>) -> Bound<'py, PyArray2<f64>> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]).into_pyarray(py)
}

fn to_array1<'py>(py: Python<'py>, v: &[f64]) -> Bound<'py, PyArray1<f64>> {
    Array1::from_vec(v.to_vec()).into_pyarray(py)
}

fn gramian_mode(kind: &str) -> PyResult<GramianMode> {
    match kind {
        "auto" => Ok(GramianMode::Auto),
        "dense" => Ok(GramianMode::Dense),
        "low-rank" | "lowrank" => Ok(GramianMode::LowRank(LowRankOptions::default())),
        other => Err(PyValueError::new_err(format!("unknown gramian solver {other:?} (auto, dense, low-rank)"))),
    }
}

/// `ẋ = Ax + Bu, y = Cx, x(0) = x0`.
#[pyclass(name = "LtiSystem", module = "icmor", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLtiSystem {
    inner: LtiSystem,
}

#[pymethods]
impl PyLtiSystem {
    #[new]
    #[pyo3(signature = (a, b, c, x0))]
    fn new(
        a: PyReadonlyArray2<'_, f64>,
        b: PyReadonlyArray2<'_, f64>,
        c: PyReadonlyArray2<'_, f64>,
        x0: PyReadonlyArray1<'_, f64>,
    ) -> PyResult<Self> {
        let inner = LtiSystem::new(matrix(&a), matrix(&b), matrix(&c), vector(&x0)).py()?;
        Ok(PyLtiSystem { inner })
    }

    /// `a`, `c`, `x0` scalars, no input.
    #[staticmethod]
    fn scalar(a: f64, c: f64, x0: f64) -> Self {
        PyLtiSystem {
            inner: LtiSystem::scalar(a, None, c, x0),
        }
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    #[getter]
    fn a<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.a.to_dense())
    }

    #[getter]
    fn b<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.b)
    }

    #[getter]
    fn c<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.c)
    }

    #[getter]
    fn x0<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        to_array1(py, self.inner.x0.as_slice())
    }

    fn with_x0(&self, x0: PyReadonlyArray1<'_, f64>) -> PyResult<Self> {
        Ok(PyLtiSystem {
            inner: self.inner.with_x0(vector(&x0)).py()?,
        })
    }

    fn is_hurwitz(&self) -> PyResult<bool> {
        Ok(self.inner.stability().py()?.is_hurwitz())
    }

    fn __repr__(&self) -> String {
        format!(
            "LtiSystem(N={}, inputs={}, outputs={})",
            self.inner.state_dim(),
            self.inner.input_dim(),
            self.inner.output_dim()
        )
    }
}

/// `ẋr = Ar xr + Br u, ỹ = Cr xr, xr(0) = x0r`, with bases when known.
#[pyclass(name = "ReducedModel", module = "icmor", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyReducedModel {
    inner: ReducedModel,
}

#[pymethods]
impl PyReducedModel {
    /// A reduced model without input given by `Ar`, `Cr` and the left basis `W`.
    #[new]
    #[pyo3(signature = (ar, cr, w, x0))]
    fn new(
        ar: PyReadonlyArray2<'_, f64>,
        cr: PyReadonlyArray2<'_, f64>,
        w: PyReadonlyArray2<'_, f64>,
        x0: PyReadonlyArray1<'_, f64>,
    ) -> PyResult<Self> {
        let (ar, cr, w, x0) = (matrix(&ar), matrix(&cr), matrix(&w), vector(&x0));
        let n = ar.nrows();
        if ar.ncols() != n || cr.ncols() != n || w.ncols() != n || w.nrows() != x0.len() {
            return Err(PyValueError::new_err("inconsistent reduced model shapes"));
        }
        Ok(PyReducedModel {
            inner: ReducedModel {
                br: DMatrix::zeros(n, 0),
                x0r: w.tr_mul(&x0),
                ar,
                cr,
                w: Some(w),
                v: None,
            },
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn ar<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.ar)
    }

    #[getter]
    fn br<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.br)
    }

    #[getter]
    fn cr<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.inner.cr)
    }

    #[getter]
    fn x0r<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        to_array1(py, self.inner.x0r.as_slice())
    }

    #[getter]
    fn w<'py>(&self, py: Python<'py>) -> Option<Bound<'py, PyArray2<f64>>> {
        self.inner.w.as_ref().map(|w| to_array2(py, w))
    }

    #[getter]
    fn v<'py>(&self, py: Python<'py>) -> Option<Bound<'py, PyArray2<f64>>> {
        self.inner.v.as_ref().map(|v| to_array2(py, v))
    }

    /// Same model started from `Wᵀ x0`.
    fn with_x0(&self, x0: PyReadonlyArray1<'_, f64>) -> PyResult<Self> {
        Ok(PyReducedModel {
            inner: self.inner.with_x0(&vector(&x0)).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("ReducedModel(n={})", self.inner.order())
    }
}

fn report_dict<'py>(py: Python<'py>, r: &ReductionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", r.method.label())?;
    d.set_item("order", r.order)?;
    d.set_item("hankel_values", r.hankel_values.clone())?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("alpha_aug", r.aug_alpha)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("converged", r.converged)?;
    d.set_item("constraint_residuals", r.constraint_residuals.clone())?;
    d.set_item("hurwitz", r.hurwitz)?;
    d.set_item("max_real_eigenvalue", r.max_real_eigenvalue)?;
    if let Some(c) = &r.controlled {
        d.set_item("controlled", report_dict(py, c)?)?;
    }
    if let Some(u) = &r.uncontrolled {
        d.set_item("uncontrolled", report_dict(py, u)?)?;
    }
    Ok(d)
}

fn interp(seed: u64, max_iter: usize) -> InterpOptions {
    InterpOptions {
        seed,
        max_iter,
        ..InterpOptions::default()
    }
}

type Reduction<'py> = (PyReducedModel, Bound<'py, PyDict>);

fn wrap<'py>(py: Python<'py>, (rom, rep): (ReducedModel, ReductionReport)) -> PyResult<Reduction<'py>> {
    Ok((PyReducedModel { inner: rom }, report_dict(py, &rep)?))
}

/// Square-root balanced truncation of order `n`.
#[pyfunction]
#[pyo3(signature = (sys, n, gramian = "auto"))]
fn balanced_truncation<'py>(py: Python<'py>, sys: &PyLtiSystem, n: usize, gramian: &str) -> PyResult<Reduction<'py>> {
    let mode = gramian_mode(gramian)?;
    let s = &sys.inner;
    let p = GramianFactors::controllability(&s.a, &s.b, &mode).py()?;
    let q = GramianFactors::observability(&s.a, &s.c, &mode).py()?;
    wrap(py, reduction::balanced_truncation(s, n, &p, &q).py()?)
}

/// Balanced truncation of the system with `x0_train` appended to the inputs.
#[pyfunction]
#[pyo3(signature = (sys, x0_train, n, gramian = "auto"))]
fn bt_aug<'py>(py: Python<'py>, sys: &PyLtiSystem, x0_train: PyReadonlyArray2<'_, f64>, n: usize, gramian: &str) -> PyResult<Reduction<'py>> {
    let mode = gramian_mode(gramian)?;
    let s = &sys.inner;
    let q = GramianFactors::observability(&s.a, &s.c, &mode).py()?;
    wrap(py, reduction::bt_aug(s, &matrix(&x0_train), n, &q, &mode).py()?)
}

#[pyfunction]
#[pyo3(signature = (sys, n, seed = 2024, max_iter = 100))]
fn irka<'py>(py: Python<'py>, sys: &PyLtiSystem, n: usize, seed: u64, max_iter: usize) -> PyResult<Reduction<'py>> {
    wrap(py, reduction::irka(&sys.inner, n, &interp(seed, max_iter)).py()?)
}

#[pyfunction]
#[pyo3(signature = (sys, n, seed = 2024, max_iter = 100, gramian = "auto"))]
fn isrk<'py>(py: Python<'py>, sys: &PyLtiSystem, n: usize, seed: u64, max_iter: usize, gramian: &str) -> PyResult<Reduction<'py>> {
    let s = &sys.inner;
    let q = GramianFactors::observability(&s.a, &s.c, &gramian_mode(gramian)?).py()?;
    wrap(py, reduction::isrk(s, n, &q, &interp(seed, max_iter)).py()?)
}

/// Separate reduction of the controlled part (by BT, order `n_c`) and the uncontrolled
/// part (by `method`, order `n_uc`). Returns `(combined, uncontrolled, report)`.
#[pyfunction]
#[pyo3(signature = (sys, x0_train, n_uc, n_c, method = "BT", seed = 2024, gramian = "auto"))]
#[allow(clippy::too_many_arguments)]
fn split_reduce<'py>(
    py: Python<'py>,
    sys: &PyLtiSystem,
    x0_train: PyReadonlyArray2<'_, f64>,
    n_uc: usize,
    n_c: usize,
    method: &str,
    seed: u64,
    gramian: &str,
) -> PyResult<(PyReducedModel, PyReducedModel, Bound<'py, PyDict>)> {
    let m = match method.to_ascii_uppercase().as_str() {
        "BT" => UncontrolledMethod::Bt,
        "IRKA" => UncontrolledMethod::Irka,
        "ISRK" => UncontrolledMethod::Isrk,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?} (BT, IRKA, ISRK)"))),
    };
    let x0t = matrix(&x0_train);
    let gram = SplitGramians::compute(&sys.inner, &x0t, &gramian_mode(gramian)?).py()?;
    let (split, rep) = reduction::split_reduce_with(&sys.inner, &x0t, n_uc, n_c, m, &gram, &interp(seed, 100)).py()?;
    Ok((
        PyReducedModel { inner: split.combined() },
        PyReducedModel {
            inner: split.uncontrolled,
        },
        report_dict(py, &rep)?,
    ))
}

/// Offline part of the error estimator for one FOM/ROM pair.
#[pyclass(name = "Estimator", module = "icmor", frozen, skip_from_py_object)]
struct PyEstimator {
    offline: EstimatorOffline,
}

#[pymethods]
impl PyEstimator {
    #[new]
    #[pyo3(signature = (sys, rom, gramian = "auto", gap_bound = true))]
    fn new(sys: &PyLtiSystem, rom: &PyReducedModel, gramian: &str, gap_bound: bool) -> PyResult<Self> {
        let s = &sys.inner;
        let q = GramianFactors::observability(&s.a, &s.c, &gramian_mode(gramian)?).py()?;
        let offline = build_error_gramian(s, &rom.inner, q, &EstimatorOptions { gap_bound }).py()?;
        Ok(PyEstimator { offline })
    }

    /// `{"delta", "raw_square", "upper_bound", "bound_certified"}` for one initial state.
    fn estimate<'py>(&self, py: Python<'py>, x0: PyReadonlyArray1<'_, f64>) -> PyResult<Bound<'py, PyDict>> {
        let e = self.offline.estimate(&vector(&x0)).py()?;
        let d = PyDict::new(py);
        d.set_item("delta", e.delta)?;
        d.set_item("raw_square", e.raw_square)?;
        d.set_item("upper_bound", e.upper_bound)?;
        d.set_item("bound_certified", e.bound_certified)?;
        Ok(d)
    }

    /// Worst case over `span(x0bar)`: `(Z, sqrt(‖Z‖₂), maximizing coefficients)`.
    fn z_matrix<'py>(
        &self,
        py: Python<'py>,
        x0bar: PyReadonlyArray2<'_, f64>,
    ) -> PyResult<(Bound<'py, PyArray2<f64>>, f64, Bound<'py, PyArray1<f64>>)> {
        let z = self.offline.z_matrix(&matrix(&x0bar)).py()?;
        Ok((to_array2(py, &z.z), z.sqrt_norm, to_array1(py, z.worst_v0.as_slice())))
    }

    #[getter]
    fn u<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.offline.u)
    }

    #[getter]
    fn qbar<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.offline.qbar)
    }

    #[getter]
    fn qhat<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.offline.qhat)
    }

    #[getter]
    fn w<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        to_array2(py, &self.offline.w)
    }
}

/// `(t, y)` of the zero-input response on the logarithmic mesh over `[0, t_end]`.
#[pyfunction]
#[pyo3(signature = (sys, t_end, rtol = 1e-10, atol = 1e-12))]
fn simulate<'py>(
    py: Python<'py>,
    sys: &PyLtiSystem,
    t_end: f64,
    rtol: f64,
    atol: f64,
) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray2<f64>>)> {
    let mesh = make_log_mesh(t_end).py()?;
    let s = &sys.inner;
    let traj = integrate_lti(s, &Input::zero(s.input_dim()), &mesh, &IntegratorOptions::with_tolerances(rtol, atol)).py()?;
    Ok((to_array1(py, traj.mesh.points()), to_array2(py, &traj.y)))
}

/// Output error `‖y − ỹ‖_{L2}` of the zero-input responses, over `[0, t_end]` or until decay.
#[pyfunction]
#[pyo3(signature = (sys, rom, t_end = None, t_max = 1e6, rtol = 1e-10, atol = 1e-12))]
fn output_error(sys: &PyLtiSystem, rom: &PyReducedModel, t_end: Option<f64>, t_max: f64, rtol: f64, atol: f64) -> PyResult<f64> {
    let horizon = t_end.map_or(Horizon::Infinite { t_max }, Horizon::Finite);
    let s = &sys.inner;
    let e = error_energy(s, &rom.inner, &Input::zero(s.input_dim()), horizon, &IntegratorOptions::with_tolerances(rtol, atol)).py()?;
    Ok(e.error())
}

/// Convection–diffusion benchmark: `(system, X0)`.
#[pyfunction]
fn convdiff<'py>(py: Python<'py>, n_inner: usize) -> PyResult<(PyLtiSystem, Bound<'py, PyArray2<f64>>)> {
    let (sys, x0) = benchmarks::convdiff_generate(&ConvDiffConfig::new(n_inner).py()?).py()?;
    Ok((PyLtiSystem { inner: sys }, to_array2(py, &x0)))
}

#[pyfunction]
#[pyo3(signature = (n, inputs = 1, outputs = 1, seed = 2024, margin = 0.1))]
fn random_stable_system(n: usize, inputs: usize, outputs: usize, seed: u64, margin: f64) -> PyLtiSystem {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let spec = RandomSystemSpec { n, inputs, outputs, margin };
    PyLtiSystem {
        inner: benchmarks::random_stable_system(&mut rng, &spec),
    }
}

/// Runs an experiment from TOML text and returns the summary CSV.
#[pyfunction]
fn run_experiment_toml(config: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml(config).py()?;
    Ok(icmor::experiment::summary_csv(&run_experiment(&cfg).py()?))
}

/// TOML text of the scalar demonstration experiment.
#[pyfunction]
fn scalar_demo_config() -> String {
    ExperimentConfig::scalar_demo().to_toml()
}

/// Recomputes a reference table; returns long-format CSV.
#[pyfunction]
#[pyo3(signature = (table, scale = "desk", data_dir = None, output_dir = None))]
fn reproduce_table(table: &str, scale: &str, data_dir: Option<PathBuf>, output_dir: Option<PathBuf>) -> PyResult<String> {
    let opts = TableOptions {
        data_dir,
        output_dir,
        ..TableOptions::default()
    };
    let out = run_table(table.parse().py()?, scale.parse().py()?, &opts).py()?;
    Ok(out.to_csv())
}

#[pymodule]
#[pyo3(name = "icmor")]
fn icmor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLtiSystem>()?;
    m.add_class::<PyReducedModel>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(balanced_truncation, m)?)?;
    m.add_function(wrap_pyfunction!(bt_aug, m)?)?;
    m.add_function(wrap_pyfunction!(irka, m)?)?;
    m.add_function(wrap_pyfunction!(isrk, m)?)?;
    m.add_function(wrap_pyfunction!(split_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(output_error, m)?)?;
    m.add_function(wrap_pyfunction!(convdiff, m)?)?;
    m.add_function(wrap_pyfunction!(random_stable_system, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_toml, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_demo_config, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_table, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
