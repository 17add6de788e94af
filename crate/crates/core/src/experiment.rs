//! Config-driven runs: build a system, reduce it, estimate and measure the error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{self, BeamCase, ConvDiffConfig, RandomSystemSpec};
use crate::error::{Error, Result};
use crate::estimator::{build_error_gramian, EstimatorOptions};
use crate::io;
use crate::linalg;
use crate::reduction::{
    self, bt_aug_with, InterpOptions, Method, ReductionReport, SplitGramians, UncontrolledMethod,
};
use crate::simulate::{
    error_energy, integrate_lti, make_log_mesh, write_curve_csv, Horizon, Input, IntegratorOptions,
    TimeMesh, Trajectory,
};
use crate::solvers::{GramianFactors, GramianKind, GramianMode, LowRankOptions};
use crate::system::{LtiSystem, ReducedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSource {
    /// `a = −1, c = 1, x0 = 1`, no input.
    Scalar,
    #[serde(rename = "convdiff", alias = "conv-diff")]
    ConvDiff {
        n_inner: usize,
    },
    /// Matrix Market files in `dir`, or in the data directory when absent.
    Beam {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        case: BeamCase,
    },
    /// Random stable dense system; its initial state doubles as the single training column.
    Random {
        n: usize,
        inputs: usize,
        outputs: usize,
    },
    /// A directory written by [`io::export_system`].
    Files {
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum GramianChoice {
    Auto,
    Dense,
    LowRank { tol: f64, max_rank: Option<usize> },
}

impl GramianChoice {
    pub fn mode(&self) -> GramianMode {
        match self {
            GramianChoice::Auto => GramianMode::Auto,
            GramianChoice::Dense => GramianMode::Dense,
            GramianChoice::LowRank { tol, max_rank } => GramianMode::LowRank(LowRankOptions {
                tol: *tol,
                max_rank: *max_rank,
                ..LowRankOptions::default()
            }),
        }
    }
}

/// A reduced model given explicitly by row lists, e.g. for analytic checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GivenRom {
    pub ar: Vec<Vec<f64>>,
    pub cr: Vec<Vec<f64>>,
    /// `N × n` left basis.
    pub w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub method: Method,
    pub orders: Vec<usize>,
    /// Order of the controlled part for split methods; half the total by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controlled_order: Option<usize>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_interp_tol")]
    pub tol: f64,
    /// Replaces the reduction step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub given: Option<GivenRom>,
}

fn default_max_iter() -> usize {
    100
}

fn default_interp_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub gramian: GramianChoice,
    pub gap_bound: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            gramian: GramianChoice::Auto,
            gap_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialState {
    /// The source's own initial state.
    Default,
    /// Convection–diffusion initial state for parameter `mu`.
    Parameter { mu: f64 },
    Constant { value: f64 },
    /// `X0 v` for the training matrix `X0`.
    Training { coefficients: Vec<f64> },
    /// Matrix Market column vector.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonKind {
    /// `E(T)` on the logarithmic mesh.
    Final,
    /// `E(∞)` by integrating until the state has decayed.
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub x0: InitialState,
    /// Defaults to the source's scenario input, or none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Input>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub horizon: HorizonKind,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            x0: InitialState::Default,
            input: None,
            t_end: None,
            horizon: HorizonKind::Final,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        let o = IntegratorOptions::accurate();
        IntegratorConfig { rtol: o.rtol, atol: o.atol }
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> IntegratorOptions {
        IntegratorOptions::with_tolerances(self.rtol, self.atol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub system: SystemSource,
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config fields are serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.reduction.given.is_none() && self.reduction.orders.is_empty() {
            return Err(Error::InvalidArgument("reduction.orders must list at least one order".into()));
        }
        if self.reduction.orders.contains(&0) {
            return Err(Error::InvalidArgument("reduction orders must be at least 1".into()));
        }
        if !(self.integrator.rtol > 0.0 && self.integrator.atol > 0.0) {
            return Err(Error::InvalidArgument("integrator tolerances must be positive".into()));
        }
        if let Some(t) = self.scenario.t_end {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("scenario.t_end must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Analytic demo: scalar FOM against the fixed ROM `ar = −2, cr = 1, W = 1` over an infinite horizon.
    pub fn scalar_demo() -> Self {
        ExperimentConfig {
            name: "scalar-demo".into(),
            seed: 2024,
            system: SystemSource::Scalar,
            reduction: ReductionConfig {
                method: Method::Bt,
                orders: vec![],
                controlled_order: None,
                max_iter: default_max_iter(),
                tol: default_interp_tol(),
                given: Some(GivenRom {
                    ar: vec![vec![-2.0]],
                    cr: vec![vec![1.0]],
                    w: vec![vec![1.0]],
                }),
            },
            estimator: EstimatorConfig {
                gramian: GramianChoice::Dense,
                gap_bound: true,
            },
            scenario: ScenarioConfig {
                horizon: HorizonKind::Infinite,
                t_end: Some(200.0),
                ..ScenarioConfig::default()
            },
            integrator: IntegratorConfig::default(),
            output_dir: None,
        }
    }
}

/// System, training matrix and scenario resolved from a config.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub name: String,
    /// Carries the scenario's initial state.
    pub system: LtiSystem,
    pub training: Option<DMatrix<f64>>,
    pub input: Input,
    pub t_end: f64,
    pub notes: Vec<String>,
}

pub fn prepare_system(cfg: &ExperimentConfig) -> Result<PreparedSystem> {
    let mut notes = Vec::new();
    let (name, sys, training, input, t_end) = match &cfg.system {
        SystemSource::Scalar => ("scalar".to_string(), LtiSystem::scalar(-1.0, None, 1.0, 1.0), None, Input::zero(0), 10.0),
        SystemSource::ConvDiff { n_inner } => {
            let cd = ConvDiffConfig::new(*n_inner)?;
            let (sys, x0) = benchmarks::convdiff_generate(&cd)?;
            if sys.c.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "convdiff grid with n_inner = {n_inner} has no nodes inside the output boxes, so every output is zero; \
                     use an odd n_inner or n_inner >= 9"
                )));
            }
            notes.push(format!("discretization: {}", benchmarks::CONVDIFF_SCHEME));
            (format!("convdiff-{n_inner}"), sys, Some(x0), Input::zero(0), 1.0)
        }
        SystemSource::Beam { dir, case } => {
            let dir = dir.clone().unwrap_or_else(io::data_dir);
            let sc = benchmarks::beam_load_scenario(&dir, *case)?;
            let name = match case {
                BeamCase::Trained => "beam-trained",
                BeamCase::NotTrained => "beam-not-trained",
            };
            (name.to_string(), sc.system, Some(sc.x0_train), sc.input, sc.t_end)
        }
        SystemSource::Random { n, inputs, outputs } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let sys = benchmarks::random_stable_system(
                &mut rng,
                &RandomSystemSpec {
                    n: *n,
                    inputs: *inputs,
                    outputs: *outputs,
                    margin: 0.1,
                },
            );
            let x0 = DMatrix::from_column_slice(*n, 1, sys.x0.as_slice());
            (format!("random-{n}"), sys, Some(x0), Input::zero(*inputs), 20.0)
        }
        SystemSource::Files { dir } => {
            let loaded = io::import_system(dir)?;
            notes.extend(loaded.manifest.notes.iter().cloned());
            let q = loaded.system.input_dim();
            (loaded.manifest.name, loaded.system, loaded.training, Input::zero(q), 1.0)
        }
    };
    let x0 = match &cfg.scenario.x0 {
        InitialState::Default => sys.x0.clone(),
        InitialState::Parameter { mu } => match &cfg.system {
            SystemSource::ConvDiff { n_inner } => benchmarks::convdiff_initial_state(*mu, &ConvDiffConfig::new(*n_inner)?)?,
            _ => return Err(Error::InvalidArgument("parameterized initial states exist only for convdiff".into())),
        },
        InitialState::Constant { value } => DVector::from_element(sys.state_dim(), *value),
        InitialState::Training { coefficients } => {
            let x = training
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("initial state from training matrix, but the source has none".into()))?;
            if x.ncols() != coefficients.len() {
                return Err(Error::dims("training coefficients", x.ncols(), coefficients.len()));
            }
            x * DVector::from_column_slice(coefficients)
        }
        InitialState::File { path } => DVector::from_column_slice(io::read_dense(path)?.as_slice()),
    };
    let system = sys.with_x0(x0)?;
    let input = cfg.scenario.input.clone().unwrap_or(input);
    if !input.is_zero() && input.dim() != system.input_dim() {
        return Err(Error::dims("scenario input", system.input_dim(), input.dim()));
    }
    Ok(PreparedSystem {
        name,
        system,
        training,
        input,
        t_end: cfg.scenario.t_end.unwrap_or(t_end),
        notes,
    })
}

/// Outcome for one method/order pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub method: String,
    pub order: usize,
    pub uncontrolled_order: usize,
    /// `E(T)` (or `E(∞)`) of the full output.
    pub error: f64,
    /// Same for the uncontrolled part only.
    pub error_x0: f64,
    pub delta: f64,
    pub delta_raw_square: f64,
    /// `|Δ − E_{x0}| / E_{x0}`.
    pub discrepancy: f64,
    pub upper_bound: Option<f64>,
    pub bound_certified: bool,
    pub alpha: Option<f64>,
    pub alpha_aug: Option<f64>,
    pub input_l2: f64,
    /// `α‖u‖ + Δ` when the controlled part was reduced by BT.
    pub combined_bound: Option<f64>,
    pub hurwitz: bool,
    pub iterations: usize,
    pub converged: bool,
    pub t_final: f64,
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub cases: Vec<CaseResult>,
    pub reports: Vec<ReductionReport>,
    pub curves: Vec<Vec<f64>>,
    pub mesh: Option<TimeMesh>,
    pub gramian_kind: GramianKind,
    pub gramian_residual: f64,
    pub notes: Vec<String>,
}

/// A reduced model plus its uncontrolled part used by the estimator.
#[derive(Debug, Clone)]
pub struct Reduced {
    /// Simulated against the FOM; for split methods the block-diagonal combination.
    pub full: ReducedModel,
    pub uncontrolled: ReducedModel,
    pub report: ReductionReport,
}

/// Gramians shared across orders and methods of one experiment.
pub struct GramianCache {
    mode: GramianMode,
    q: Option<GramianFactors>,
    split: Option<SplitGramians>,
    p_input: Option<GramianFactors>,
    p_aug: Option<GramianFactors>,
}

impl GramianCache {
    pub fn new(mode: GramianMode) -> Self {
        GramianCache {
            mode,
            q: None,
            split: None,
            p_input: None,
            p_aug: None,
        }
    }

    pub fn q(&mut self, sys: &LtiSystem) -> Result<&GramianFactors> {
        if self.q.is_none() {
            self.q = Some(GramianFactors::observability(&sys.a, &sys.c, &self.mode)?);
        }
        Ok(self.q.as_ref().expect("just computed"))
    }

    fn split(&mut self, sys: &LtiSystem, x0_train: &DMatrix<f64>) -> Result<&SplitGramians> {
        if self.split.is_none() {
            let q = self.q(sys)?.clone();
            self.split = Some(SplitGramians::with_q(sys, x0_train, q, &self.mode)?);
        }
        Ok(self.split.as_ref().expect("just computed"))
    }

    fn p_input(&mut self, sys: &LtiSystem) -> Result<&GramianFactors> {
        if self.p_input.is_none() {
            self.p_input = Some(GramianFactors::controllability(&sys.a, &sys.b, &self.mode)?);
        }
        Ok(self.p_input.as_ref().expect("just computed"))
    }

    fn p_aug(&mut self, sys: &LtiSystem, x0_train: &DMatrix<f64>) -> Result<&GramianFactors> {
        if self.p_aug.is_none() {
            let b = linalg::hcat(&[&sys.b, x0_train]);
            self.p_aug = Some(GramianFactors::controllability(&sys.a, &b, &self.mode)?);
        }
        Ok(self.p_aug.as_ref().expect("just computed"))
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::dims(what, "rows of equal length", "ragged rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn given_rom(sys: &LtiSystem, g: &GivenRom) -> Result<Reduced> {
    let ar = rows_to_matrix(&g.ar, "given ar")?;
    let cr = rows_to_matrix(&g.cr, "given cr")?;
    let w = rows_to_matrix(&g.w, "given w")?;
    let n = ar.nrows();
    if ar.ncols() != n || cr.shape() != (sys.output_dim(), n) || w.shape() != (sys.state_dim(), n) {
        return Err(Error::dims("given reduced model", format!("n={n} consistent with the system"), "mismatched shapes"));
    }
    let rom = ReducedModel {
        ar,
        br: DMatrix::zeros(n, sys.input_dim()),
        cr,
        x0r: w.tr_mul(&sys.x0),
        w: Some(w),
        v: None,
    };
    let mut report = ReductionReport::new(Method::Bt, n);
    reduction::fill_stability(&mut report, &rom)?;
    Ok(Reduced {
        full: rom.clone(),
        uncontrolled: rom,
        report,
    })
}

fn uncontrolled_part(rom: &ReducedModel) -> ReducedModel {
    let mut u = rom.clone();
    u.br = DMatrix::zeros(rom.order(), 0);
    u
}

fn reduce_one(
    prep: &PreparedSystem,
    cfg: &ReductionConfig,
    method: Method,
    order: usize,
    cache: &mut GramianCache,
    interp: &InterpOptions,
) -> Result<Reduced> {
    let sys = &prep.system;
    let training = prep.training.as_ref();
    let need_training = || {
        training.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a training matrix X0, which this system source does not provide")))
    };
    let split = |n_uc: usize, n_c: usize, m: UncontrolledMethod, cache: &mut GramianCache| -> Result<Reduced> {
        let x0t = need_training()?;
        let gram = cache.split(sys, x0t)?;
        let (srom, report) = reduction::split_reduce_with(sys, x0t, n_uc, n_c, m, gram, interp)?;
        Ok(Reduced {
            full: srom.combined(),
            uncontrolled: srom.uncontrolled,
            report,
        })
    };
    let single = |(rom, report): (ReducedModel, ReductionReport)| Reduced {
        uncontrolled: uncontrolled_part(&rom),
        full: rom,
        report,
    };
    match method {
        Method::Bt | Method::Irka | Method::Isrk if training.is_some() => {
            let m = match method {
                Method::Bt => UncontrolledMethod::Bt,
                Method::Irka => UncontrolledMethod::Irka,
                _ => UncontrolledMethod::Isrk,
            };
            let mut r = split(order, cfg.controlled_order.unwrap_or(0), m, cache)?;
            r.report.method = method;
            Ok(r)
        }
        Method::Bt => {
            let p = cache.p_input(sys)?.clone();
            let q = cache.q(sys)?;
            Ok(single(reduction::balanced_truncation(sys, order, &p, q)?))
        }
        Method::Irka => Ok(single(reduction::irka(sys, order, interp)?)),
        Method::Isrk => {
            let q = cache.q(sys)?.clone();
            Ok(single(reduction::isrk(sys, order, &q, interp)?))
        }
        Method::BtAug => {
            let x0t = need_training()?;
            let p = cache.p_aug(sys, x0t)?.clone();
            let q = cache.q(sys)?;
            Ok(single(bt_aug_with(sys, x0t, order, &p, q)?))
        }
        Method::BtBt | Method::SplitIrka | Method::SplitIsrk => {
            // Without inputs the controlled part is empty, so the whole order goes to x0.
            let default_c = if sys.input_dim() == 0 { 0 } else { order / 2 };
            let n_c = cfg.controlled_order.unwrap_or(default_c).min(order);
            let m = match method {
                Method::BtBt => UncontrolledMethod::Bt,
                Method::SplitIrka => UncontrolledMethod::Irka,
                _ => UncontrolledMethod::Isrk,
            };
            split(order - n_c, n_c, m, cache)
        }
    }
}

/// `∫₀ᵀ ‖u‖²` by composite Simpson on each smooth segment.
pub fn input_l2_squared(input: &Input, t_end: f64) -> f64 {
    if input.is_zero() {
        return 0.0;
    }
    const PANELS: usize = 2000;
    let mut knots = vec![0.0];
    knots.extend(input.breakpoints(t_end).into_iter().filter(|&t| t > 0.0 && t < t_end));
    knots.push(t_end);
    let mut u = vec![0.0; input.dim()];
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let mid = 0.5 * (ta + tb);
        let h = (tb - ta) / (2 * PANELS) as f64;
        let mut f = |t: f64| {
            input.eval_on_segment(t, mid, &mut u);
            u.iter().map(|v| v * v).sum::<f64>()
        };
        let mut acc = f(ta) + f(tb);
        for k in 1..2 * PANELS {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(ta + k as f64 * h);
        }
        total += acc * h / 3.0;
    }
    total
}

/// FOM trajectories on the log mesh, computed once per runner.
struct FomReference {
    mesh: TimeMesh,
    full: Trajectory,
    /// Zero-input trajectory; `None` when the scenario input is zero.
    free: Option<Trajectory>,
}

/// FOM-side state shared by all reductions of one prepared system.
pub struct Runner {
    pub prep: PreparedSystem,
    pub horizon: HorizonKind,
    cache: GramianCache,
    opts: IntegratorOptions,
    est_opts: EstimatorOptions,
    reference: Option<FomReference>,
    input_sq: f64,
}

/// One reduced model with its estimate and simulated errors.
pub struct CaseOutcome {
    pub result: CaseResult,
    pub report: ReductionReport,
    pub offline: crate::estimator::EstimatorOffline,
    pub rom: ReducedModel,
    /// Empty for infinite horizons.
    pub curve: Vec<f64>,
}

impl Runner {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let prep = prepare_system(cfg)?;
        let input_sq = match cfg.scenario.horizon {
            HorizonKind::Final => input_l2_squared(&prep.input, prep.t_end),
            HorizonKind::Infinite => 0.0,
        };
        Ok(Runner {
            prep,
            horizon: cfg.scenario.horizon,
            cache: GramianCache::new(cfg.estimator.gramian.mode()),
            opts: cfg.integrator.options(),
            est_opts: EstimatorOptions {
                gap_bound: cfg.estimator.gap_bound,
            },
            reference: None,
            input_sq,
        })
    }

    fn ensure_reference(&mut self) -> Result<()> {
        if self.reference.is_some() || self.horizon == HorizonKind::Infinite {
            return Ok(());
        }
        let sys = &self.prep.system;
        let mesh = make_log_mesh(self.prep.t_end)?;
        let full = integrate_lti(sys, &self.prep.input, &mesh, &self.opts)?;
        let free = if self.prep.input.is_zero() {
            None
        } else {
            Some(integrate_lti(sys, &Input::zero(sys.input_dim()), &mesh, &self.opts)?)
        };
        self.reference = Some(FomReference { mesh, full, free });
        Ok(())
    }

    /// The logarithmic mesh of a finite-horizon run, once the FOM has been simulated.
    pub fn mesh(&self) -> Option<&TimeMesh> {
        self.reference.as_ref().map(|r| &r.mesh)
    }

    /// FOM output on the logarithmic mesh; `None` for infinite horizons.
    pub fn fom_trajectory(&mut self) -> Result<Option<&Trajectory>> {
        self.ensure_reference()?;
        Ok(self.reference.as_ref().map(|r| &r.full))
    }

    pub fn integrator(&self) -> &IntegratorOptions {
        &self.opts
    }

    /// The observability factor, computed on first use.
    pub fn gramian(&mut self) -> Result<&GramianFactors> {
        self.cache.q(&self.prep.system)
    }

    /// Reduction only; no simulation.
    pub fn reduce_model(&mut self, cfg: &ReductionConfig, method: Method, order: usize, interp: &InterpOptions) -> Result<Reduced> {
        reduce_one(&self.prep, cfg, method, order, &mut self.cache, interp)
    }

    pub fn given_model(&self, g: &GivenRom) -> Result<Reduced> {
        given_rom(&self.prep.system, g)
    }

    /// Offline estimator matrices and the estimate for the scenario's initial state; no simulation.
    pub fn estimate(&mut self, reduced: &Reduced) -> Result<(crate::estimator::EstimatorOffline, crate::estimator::Estimate)> {
        let q = self.cache.q(&self.prep.system)?.clone();
        let offline = build_error_gramian(&self.prep.system, &reduced.uncontrolled, q, &self.est_opts)?;
        let est = offline.estimate(&self.prep.system.x0)?;
        Ok((offline, est))
    }

    pub fn reduce(&mut self, cfg: &ReductionConfig, method: Method, order: usize, interp: &InterpOptions) -> Result<CaseOutcome> {
        let reduced = self.reduce_model(cfg, method, order, interp)?;
        self.evaluate(reduced, None)
    }

    pub fn given(&mut self, g: &GivenRom) -> Result<CaseOutcome> {
        let reduced = self.given_model(g)?;
        self.evaluate(reduced, Some("given"))
    }

    /// Estimate plus simulated errors.
    pub fn evaluate(&mut self, reduced: Reduced, label: Option<&str>) -> Result<CaseOutcome> {
        let (offline, est) = self.estimate(&reduced)?;
        self.ensure_reference()?;
        let sys = &self.prep.system;
        let zero_input = Input::zero(sys.input_dim());
        let (error, error_x0, t_final, curve) = match &self.reference {
            Some(FomReference { mesh, full: fom, free }) => {
                let rom_traj = integrate_lti(&reduced.full.as_system(), &self.prep.input, mesh, &self.opts)?;
                let curve = error_curve(fom, &rom_traj)?;
                let e = *curve.last().expect("non-empty mesh");
                let e_x0 = match free {
                    Some(free) => {
                        let rt = integrate_lti(&reduced.full.as_system(), &zero_input, mesh, &self.opts)?;
                        *error_curve(free, &rt)?.last().expect("non-empty mesh")
                    }
                    None => e,
                };
                (e, e_x0, mesh.t_end(), curve)
            }
            None => {
                let horizon = Horizon::Infinite { t_max: self.prep.t_end };
                let full = error_energy(sys, &reduced.full, &self.prep.input, horizon, &self.opts)?;
                let e_x0 = if self.prep.input.is_zero() {
                    full.error()
                } else {
                    error_energy(sys, &reduced.full, &zero_input, horizon, &self.opts)?.error()
                };
                (full.error(), e_x0, full.t_final, vec![])
            }
        };
        let report = reduced.report;
        let alpha = report.controlled.as_ref().and_then(|c| c.alpha).or(report.alpha);
        let input_l2 = self.input_sq.sqrt();
        let combined_bound = match report.method {
            Method::BtBt | Method::SplitIrka | Method::SplitIsrk if input_l2 > 0.0 => {
                alpha.map(|a| crate::estimator::combined_bound(a, input_l2, est.delta))
            }
            _ => None,
        };
        let result = CaseResult {
            method: label.unwrap_or(report.method.label()).to_string(),
            order: reduced.full.order(),
            uncontrolled_order: reduced.uncontrolled.order(),
            error,
            error_x0,
            delta: est.delta,
            delta_raw_square: est.raw_square,
            discrepancy: relative_discrepancy(est.delta, error_x0),
            upper_bound: est.upper_bound,
            bound_certified: est.bound_certified,
            alpha,
            alpha_aug: report.aug_alpha,
            input_l2,
            combined_bound,
            hurwitz: report.hurwitz,
            iterations: report.iterations,
            converged: report.converged,
            t_final,
        };
        Ok(CaseOutcome {
            result,
            report,
            offline,
            rom: reduced.full,
            curve,
        })
    }
}

/// Runs every configured order and, when `output_dir` is set, writes results there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut runner = Runner::new(cfg)?;
    let interp = InterpOptions {
        max_iter: cfg.reduction.max_iter,
        tol: cfg.reduction.tol,
        seed: cfg.seed,
        ..InterpOptions::default()
    };
    let mut outcomes = Vec::new();
    match &cfg.reduction.given {
        Some(g) => outcomes.push(runner.given(g)?),
        None => {
            for &n in &cfg.reduction.orders {
                outcomes.push(runner.reduce(&cfg.reduction, cfg.reduction.method, n, &interp)?);
            }
        }
    }
    if let Some(dir) = &cfg.output_dir {
        for o in &outcomes {
            write_case(dir, o, runner.mesh())?;
        }
    }
    let q = runner.gramian()?;
    let (gramian_kind, gramian_residual) = (q.kind, q.residual);
    let result = ExperimentResult {
        name: runner.prep.name.clone(),
        cases: outcomes.iter().map(|o| o.result.clone()).collect(),
        reports: outcomes.iter().map(|o| o.report.clone()).collect(),
        curves: outcomes.into_iter().map(|o| o.curve).collect(),
        mesh: runner.mesh().cloned(),
        gramian_kind,
        gramian_residual,
        notes: runner.prep.notes.clone(),
    };
    if let Some(dir) = &cfg.output_dir {
        write_summary(dir, cfg, &result)?;
    }
    Ok(result)
}

/// Writes `report.toml`, `result.toml`, the offline matrices and, for finite horizons, `error_curve.csv`.
pub fn write_case(root: &Path, o: &CaseOutcome, mesh: Option<&TimeMesh>) -> Result<()> {
    let dir = case_dir(root, &o.result);
    write_case_artifacts(&dir, &o.report, &o.offline, &o.result)?;
    if let Some(m) = mesh {
        let path = dir.join("error_curve.csv");
        let f = fs::File::create(&path).map_err(io_error(&path))?;
        write_curve_csv(std::io::BufWriter::new(f), m, "E", &o.curve).map_err(io_error(&path))?;
    }
    Ok(())
}

/// Writes `Ar.mtx`, `Br.mtx`, `Cr.mtx`, `x0r.mtx`, the bases when present, and `report.toml`.
pub fn write_reduced(dir: &Path, reduced: &Reduced) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let rom = &reduced.full;
    io::write_dense(&dir.join("Ar.mtx"), &rom.ar)?;
    io::write_dense(&dir.join("Br.mtx"), &rom.br)?;
    io::write_dense(&dir.join("Cr.mtx"), &rom.cr)?;
    io::write_dense(&dir.join("x0r.mtx"), &DMatrix::from_column_slice(rom.x0r.len(), 1, rom.x0r.as_slice()))?;
    if let Some(w) = &rom.w {
        io::write_dense(&dir.join("W.mtx"), w)?;
    }
    if let Some(v) = &rom.v {
        io::write_dense(&dir.join("V.mtx"), v)?;
    }
    let p = dir.join("report.toml");
    fs::write(&p, reduced.report.to_toml()).map_err(io_error(&p))
}

/// Estimate for one reduced model, without simulated errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: String,
    pub order: usize,
    pub delta: f64,
    pub delta_raw_square: f64,
    pub upper_bound: Option<f64>,
    pub bound_certified: bool,
    pub alpha: Option<f64>,
    pub alpha_aug: Option<f64>,
    pub gramian_kind: GramianKind,
    pub gramian_residual: f64,
    pub qbar_residual: f64,
    pub qhat_residual: f64,
}

impl EstimateRecord {
    pub fn new(reduced: &Reduced, offline: &crate::estimator::EstimatorOffline, est: &crate::estimator::Estimate) -> Self {
        let r = &reduced.report;
        EstimateRecord {
            method: r.method.label().to_string(),
            order: reduced.full.order(),
            delta: est.delta,
            delta_raw_square: est.raw_square,
            upper_bound: est.upper_bound,
            bound_certified: est.bound_certified,
            alpha: r.controlled.as_ref().and_then(|c| c.alpha).or(r.alpha),
            alpha_aug: r.aug_alpha,
            gramian_kind: offline.gramian_kind,
            gramian_residual: offline.gramian_residual,
            qbar_residual: offline.qbar_residual,
            qhat_residual: offline.qhat_residual,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("estimate fields are serializable")
    }
}

/// Writes `estimate.toml` and the offline matrices.
pub fn write_estimate(dir: &Path, record: &EstimateRecord, offline: &crate::estimator::EstimatorOffline) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let p = dir.join("estimate.toml");
    fs::write(&p, record.to_toml()).map_err(io_error(&p))?;
    write_offline(dir, offline)
}

fn write_offline(dir: &Path, offline: &crate::estimator::EstimatorOffline) -> Result<()> {
    io::write_dense(&dir.join("Qbar.mtx"), &offline.qbar)?;
    io::write_dense(&dir.join("Qhat.mtx"), &offline.qhat)?;
    io::write_dense(&dir.join("W.mtx"), &offline.w)?;
    if offline.u.len() <= ARTIFACT_LIMIT {
        io::write_dense(&dir.join("U.mtx"), &offline.u)?;
    } else {
        log::info!("skipping U.mtx ({}x{} entries)", offline.u.nrows(), offline.u.ncols());
    }
    Ok(())
}

/// Case directory name, `{method}_n{order}`.
pub fn case_name(method: &str, order: usize) -> String {
    format!("{method}_n{order}")
}

/// `E(t)` over the trajectories' common mesh.
pub fn error_curve(fom: &Trajectory, rom: &Trajectory) -> Result<Vec<f64>> {
    crate::simulate::cumulative_l2_error(fom, rom)
}

pub fn relative_discrepancy(delta: f64, error: f64) -> f64 {
    if error == 0.0 {
        if delta == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (delta - error).abs() / error
    }
}

fn case_dir(root: &Path, case: &CaseResult) -> PathBuf {
    root.join(case_name(&case.method, case.order))
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Offline artifacts larger than this many entries are skipped.
const ARTIFACT_LIMIT: usize = 4_000_000;

fn write_case_artifacts(dir: &Path, report: &ReductionReport, offline: &crate::estimator::EstimatorOffline, case: &CaseResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let p = dir.join("report.toml");
    fs::write(&p, report.to_toml()).map_err(io_error(&p))?;
    let p = dir.join("result.toml");
    fs::write(&p, toml::to_string_pretty(case).map_err(|e| Error::Manifest(e.to_string()))?).map_err(io_error(&p))?;
    write_offline(dir, offline)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt17(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

/// Summary CSV, one row per case, at full double precision.
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(
        "method,order,uncontrolled_order,E,E_x0,delta,rel_discrepancy,upper_bound,bound_certified,alpha,alpha_aug,input_l2,combined_bound,hurwitz,iterations,converged,t_final\n",
    );
    for c in &result.cases {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.method,
            c.order,
            c.uncontrolled_order,
            fmt17(c.error),
            fmt17(c.error_x0),
            fmt17(c.delta),
            fmt17(c.discrepancy),
            opt17(c.upper_bound),
            c.bound_certified,
            opt17(c.alpha),
            opt17(c.alpha_aug),
            fmt17(c.input_l2),
            opt17(c.combined_bound),
            c.hurwitz,
            c.iterations,
            c.converged,
            fmt17(c.t_final)
        );
    }
    s
}

/// Provenance record written next to every set of results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Seconds since the Unix epoch; the only non-deterministic line.
    pub created: u64,
    pub library_version: String,
    pub nalgebra_version: String,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    pub gramian_kind: GramianKind,
    pub gramian_residual: f64,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

pub const NALGEBRA_VERSION: &str = "0.35";

fn write_summary(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let p = dir.join("summary.csv");
    fs::write(&p, summary_csv(result)).map_err(io_error(&p))?;
    let manifest = RunManifest {
        created: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        nalgebra_version: NALGEBRA_VERSION.to_string(),
        seed: cfg.seed,
        rtol: cfg.integrator.rtol,
        atol: cfg.integrator.atol,
        gramian_kind: result.gramian_kind,
        gramian_residual: result.gramian_residual,
        notes: result.notes.clone(),
        config: cfg.clone(),
    };
    let p = dir.join("manifest.toml");
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    fs::write(&p, text).map_err(io_error(&p))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_demo_is_exact() {
        let res = run_experiment(&ExperimentConfig::scalar_demo()).unwrap();
        let c = &res.cases[0];
        let exact = (1.0f64 / 12.0).sqrt();
        assert!((c.delta - exact).abs() < 1e-8);
        assert!((c.error - exact).abs() < 1e-8);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::scalar_demo();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_order_rejected() {
        let mut cfg = ExperimentConfig::scalar_demo();
        cfg.reduction.given = None;
        cfg.reduction.orders = vec![0];
        assert!(cfg.validate().is_err());
    }
}
