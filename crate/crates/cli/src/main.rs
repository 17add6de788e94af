use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icmor::benchmarks::{self, BeamCase, ConvDiffConfig, RandomSystemSpec};
use icmor::experiment::{
    case_name, error_curve, run_experiment, summary_csv, write_estimate, write_reduced, EstimateRecord, ExperimentConfig,
    GramianChoice, HorizonKind, InitialState, IntegratorConfig, ReductionConfig, Runner, ScenarioConfig, SystemSource,
};
use icmor::io::{export_system, SystemManifest};
use icmor::reduction::{InterpOptions, Method};
use icmor::simulate::{integrate_lti, write_curve_csv, write_trajectory_csv, IntegratorOptions};
use icmor::tables::{reproduce_table, Scale, TableId, TableOptions};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "icmor", version, about = "Model reduction with error estimation for arbitrary initial states")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark system as Matrix Market files plus a manifest.
    Generate(GenerateArgs),
    /// Build reduced models and write their matrices and reports.
    Reduce(ExperimentArgs),
    /// Build reduced models and evaluate the error estimator, without simulation.
    Estimate(ExperimentArgs),
    /// Simulate the full and reduced outputs on the logarithmic mesh.
    Simulate(ExperimentArgs),
    /// Run complete experiments from config files.
    Run(RunArgs),
    /// Recompute one of the reference comparison tables.
    ReproduceTable(TableArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Convdiff,
    Random,
}

#[derive(Args)]
struct GenerateArgs {
    benchmark: Benchmark,
    /// Inner grid points per direction (convdiff).
    #[arg(long, default_value_t = 40)]
    n_inner: usize,
    /// State dimension (random).
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    inputs: usize,
    #[arg(long, default_value_t = 2)]
    outputs: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    Scalar,
    Convdiff,
    Beam,
    Random,
    Files,
}

#[derive(Clone, Copy, ValueEnum)]
enum GramianArg {
    Auto,
    Dense,
    LowRank,
}

#[derive(Clone, Copy, ValueEnum)]
enum HorizonArg {
    Final,
    Infinite,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// TOML experiment config; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    system: Option<SystemKind>,
    /// Grid size for convdiff.
    #[arg(long)]
    n_inner: Option<usize>,
    /// Beam case: trained or not-trained.
    #[arg(long, value_parser = parse_beam_case)]
    case: Option<BeamCase>,
    /// Data directory for beam or files systems.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// State dimension for random systems.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    inputs: Option<usize>,
    #[arg(long)]
    outputs: Option<usize>,
    /// BT, BT-aug, BT-BT, split-IRKA, split-ISRK, IRKA or ISRK.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long)]
    controlled_order: Option<usize>,
    #[arg(long, value_enum)]
    gramian: Option<GramianArg>,
    /// Relative residual target of the low-rank solver.
    #[arg(long, default_value_t = 1e-10)]
    lowrank_tol: f64,
    #[arg(long)]
    no_gap_bound: bool,
    /// Initial state parameter for convdiff.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_enum)]
    horizon: Option<HorizonArg>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Run the configs concurrently.
    #[arg(long)]
    batch: bool,
    /// Results root; each config writes to `<out>/<name>` unless it names its own directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    /// table1, table2 or table3.
    #[arg(value_parser = parse_table)]
    table: TableId,
    #[arg(long, value_parser = parse_scale, default_value = "desk")]
    scale: Scale,
    /// Directory with the beam data (defaults to $ICMOR_DATA_DIR or ./data).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    gramian: GramianArg,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: icmor::Error| e.to_string())
}

fn parse_beam_case(s: &str) -> Result<BeamCase, String> {
    s.parse().map_err(|e: icmor::Error| e.to_string())
}

fn parse_table(s: &str) -> Result<TableId, String> {
    s.parse().map_err(|e: icmor::Error| e.to_string())
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse().map_err(|e: icmor::Error| e.to_string())
}

/// CLI failure: a library error or a usage problem.
enum Failure {
    Lib(icmor::Error),
    Usage(String),
}

impl From<icmor::Error> for Failure {
    fn from(e: icmor::Error) -> Self {
        Failure::Lib(e)
    }
}

fn report(f: &Failure) {
    match f {
        Failure::Lib(e) => {
            eprintln!("error [{}]: {e}", e.module());
            if let Some(h) = e.hint() {
                eprintln!("  hint: {h}");
            }
        }
        Failure::Usage(m) => eprintln!("error: {m}"),
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |source| {
        Failure::Lib(icmor::Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn gramian_choice(g: GramianArg, tol: f64) -> GramianChoice {
    match g {
        GramianArg::Auto => GramianChoice::Auto,
        GramianArg::Dense => GramianChoice::Dense,
        GramianArg::LowRank => GramianChoice::LowRank { tol, max_rank: None },
    }
}

fn base_config(a: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    if let Some(path) = &a.config {
        return Ok(ExperimentConfig::load(path)?);
    }
    let kind = a
        .system
        .ok_or_else(|| Failure::Usage("either --config or --system is required".into()))?;
    if matches!(kind, SystemKind::Scalar) && a.orders.is_none() {
        return Ok(ExperimentConfig::scalar_demo());
    }
    let system = match kind {
        SystemKind::Scalar => SystemSource::Scalar,
        SystemKind::Convdiff => SystemSource::ConvDiff {
            n_inner: a.n_inner.unwrap_or(40),
        },
        SystemKind::Beam => SystemSource::Beam {
            dir: a.dir.clone(),
            case: a.case.unwrap_or(BeamCase::Trained),
        },
        SystemKind::Random => SystemSource::Random {
            n: a.n.unwrap_or(50),
            inputs: a.inputs.unwrap_or(1),
            outputs: a.outputs.unwrap_or(2),
        },
        SystemKind::Files => SystemSource::Files {
            dir: a.dir.clone().ok_or_else(|| Failure::Usage("--system files needs --dir".into()))?,
        },
    };
    let exploratory = IntegratorOptions::exploratory();
    Ok(ExperimentConfig {
        name: "cli".into(),
        seed: 2024,
        system,
        reduction: ReductionConfig {
            method: Method::Bt,
            orders: vec![],
            controlled_order: None,
            max_iter: 100,
            tol: 1e-6,
            given: None,
        },
        estimator: Default::default(),
        scenario: ScenarioConfig::default(),
        integrator: IntegratorConfig {
            rtol: exploratory.rtol,
            atol: exploratory.atol,
        },
        output_dir: None,
    })
}

fn build_config(a: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = base_config(a)?;
    if let Some(m) = a.method {
        cfg.reduction.method = m;
    }
    if let Some(o) = &a.orders {
        cfg.reduction.orders = o.clone();
        cfg.reduction.given = None;
    }
    if a.controlled_order.is_some() {
        cfg.reduction.controlled_order = a.controlled_order;
    }
    if let Some(g) = a.gramian {
        cfg.estimator.gramian = gramian_choice(g, a.lowrank_tol);
    }
    if a.no_gap_bound {
        cfg.estimator.gap_bound = false;
    }
    if let Some(mu) = a.mu {
        cfg.scenario.x0 = InitialState::Parameter { mu };
    }
    if a.t_end.is_some() {
        cfg.scenario.t_end = a.t_end;
    }
    if let Some(h) = a.horizon {
        cfg.scenario.horizon = match h {
            HorizonArg::Final => HorizonKind::Final,
            HorizonArg::Infinite => HorizonKind::Infinite,
        };
    }
    if let Some(r) = a.rtol {
        cfg.integrator.rtol = r;
    }
    if let Some(t) = a.atol {
        cfg.integrator.atol = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn interp_options(cfg: &ExperimentConfig) -> InterpOptions {
    InterpOptions {
        max_iter: cfg.reduction.max_iter,
        tol: cfg.reduction.tol,
        seed: cfg.seed,
        ..InterpOptions::default()
    }
}

/// Reduced models for all configured orders, or the configured fixed model.
fn reduced_models(runner: &mut Runner, cfg: &ExperimentConfig) -> Result<Vec<icmor::experiment::Reduced>, Failure> {
    if let Some(g) = &cfg.reduction.given {
        return Ok(vec![runner.given_model(g)?]);
    }
    let interp = interp_options(cfg);
    let mut out = Vec::new();
    for &n in &cfg.reduction.orders {
        out.push(runner.reduce_model(&cfg.reduction, cfg.reduction.method, n, &interp)?);
    }
    Ok(out)
}

fn generate(a: &GenerateArgs) -> Result<(), Failure> {
    let (name, sys, training, notes) = match a.benchmark {
        Benchmark::Convdiff => {
            let cd = ConvDiffConfig::new(a.n_inner)?;
            let (sys, x0) = benchmarks::convdiff_generate(&cd)?;
            (format!("convdiff-{}", a.n_inner), sys, Some(x0), vec![format!("discretization: {}", benchmarks::CONVDIFF_SCHEME)])
        }
        Benchmark::Random => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
            let spec = RandomSystemSpec {
                n: a.n,
                inputs: a.inputs,
                outputs: a.outputs,
                margin: 0.1,
            };
            let sys = benchmarks::random_stable_system(&mut rng, &spec);
            (format!("random-{}", a.n), sys, None, vec![format!("seed: {}", a.seed)])
        }
    };
    let mut manifest = SystemManifest::for_system(&name, &sys);
    manifest.notes = notes;
    export_system(&a.out, &manifest, &sys, training.as_ref())?;
    println!("wrote {name} (N={}) to {}", sys.state_dim(), a.out.display());
    Ok(())
}

fn reduce(a: &ExperimentArgs) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    let mut runner = Runner::new(&cfg)?;
    for r in reduced_models(&mut runner, &cfg)? {
        let rep = &r.report;
        println!(
            "{} n={}: hurwitz={} alpha={} iterations={} converged={}",
            rep.method,
            r.full.order(),
            rep.hurwitz,
            rep.alpha.map_or("n/a".into(), |x| format!("{x:.6e}")),
            rep.iterations,
            rep.converged
        );
        if let Some(out) = &cfg.output_dir {
            write_reduced(&out.join(case_name(rep.method.label(), r.full.order())), &r)?;
        }
    }
    Ok(())
}

fn estimate(a: &ExperimentArgs) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    let mut runner = Runner::new(&cfg)?;
    for r in reduced_models(&mut runner, &cfg)? {
        let (offline, est) = runner.estimate(&r)?;
        let rec = EstimateRecord::new(&r, &offline, &est);
        println!(
            "{} n={}: delta={:.6e} upper_bound={}",
            rec.method,
            rec.order,
            rec.delta,
            rec.upper_bound.map_or("n/a".into(), |x| format!("{x:.6e}"))
        );
        if let Some(out) = &cfg.output_dir {
            let dir = out.join(case_name(&rec.method, rec.order));
            write_reduced(&dir, &r)?;
            write_estimate(&dir, &rec, &offline)?;
        }
    }
    Ok(())
}

fn simulate(a: &ExperimentArgs) -> Result<(), Failure> {
    let cfg = build_config(a)?;
    if cfg.scenario.horizon != HorizonKind::Final {
        return Err(Failure::Usage("simulate needs a final-time horizon (pass --horizon final)".into()));
    }
    let mut runner = Runner::new(&cfg)?;
    let fom = runner.fom_trajectory()?.cloned().expect("finite horizon has a trajectory");
    let mesh = fom.mesh.clone();
    let out = cfg.output_dir.clone();
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(io_failure(dir))?;
        let p = dir.join("fom.csv");
        let f = fs::File::create(&p).map_err(io_failure(&p))?;
        write_trajectory_csv(std::io::BufWriter::new(f), &fom).map_err(io_failure(&p))?;
    }
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    println!("FOM: {} accepted steps, T={}", fom.meta.accepted_steps, mesh.t_end());
    for r in reduced_models(&mut runner, &cfg)? {
        let traj = integrate_lti(&r.full.as_system(), &runner.prep.input, &mesh, runner.integrator())?;
        let curve = error_curve(&fom, &traj)?;
        println!("{} n={}: E(T)={:.6e}", r.report.method, r.full.order(), last(&curve));
        if let Some(dir) = &out {
            let case = dir.join(case_name(r.report.method.label(), r.full.order()));
            fs::create_dir_all(&case).map_err(io_failure(&case))?;
            let p = case.join("trajectory.csv");
            let f = fs::File::create(&p).map_err(io_failure(&p))?;
            write_trajectory_csv(std::io::BufWriter::new(f), &traj).map_err(io_failure(&p))?;
            let p = case.join("error_curve.csv");
            let f = fs::File::create(&p).map_err(io_failure(&p))?;
            write_curve_csv(std::io::BufWriter::new(f), &mesh, "E", &curve).map_err(io_failure(&p))?;
        }
    }
    Ok(())
}

fn run_one(path: &Path, out_root: Option<&Path>) -> Result<String, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if cfg.output_dir.is_none() {
        let root = out_root.map_or_else(|| PathBuf::from("results"), Path::to_path_buf);
        cfg.output_dir = Some(root.join(&cfg.name));
    }
    let res = run_experiment(&cfg)?;
    Ok(summary_csv(&res))
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let results: Vec<(PathBuf, Result<String, Failure>)> = if a.batch {
        std::thread::scope(|s| {
            let handles: Vec<_> = a
                .configs
                .iter()
                .map(|p| (p.clone(), s.spawn(|| run_one(p, a.out.as_deref()))))
                .collect();
            handles
                .into_iter()
                .map(|(p, h)| (p, h.join().unwrap_or_else(|_| Err(Failure::Usage("experiment thread panicked".into())))))
                .collect()
        })
    } else {
        a.configs.iter().map(|p| (p.clone(), run_one(p, a.out.as_deref()))).collect()
    };
    let mut failed = None;
    for (path, r) in results {
        match r {
            Ok(summary) => {
                println!("# {}", path.display());
                print!("{summary}");
            }
            Err(f) => {
                eprintln!("{}:", path.display());
                report(&f);
                failed = Some(Failure::Usage(format!("experiment {} failed", path.display())));
            }
        }
    }
    failed.map_or(Ok(()), Err)
}

fn table(a: &TableArgs) -> Result<(), Failure> {
    let opts = TableOptions {
        data_dir: a.data_dir.clone(),
        integrator: IntegratorConfig::default(),
        gramian: gramian_choice(a.gramian, 1e-10),
        seed: a.seed,
        output_dir: a.out.clone(),
    };
    let out = reproduce_table(a.table, a.scale, &opts)?;
    print!("{}", out.to_csv());
    let failures = out.failures().count();
    if failures > 0 {
        eprintln!("{failures} cells could not be computed; see the note column");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Reduce(a) => reduce(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::ReproduceTable(a) => table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !matches!(&f, Failure::Usage(m) if m.starts_with("experiment ")) {
                report(&f);
            }
            ExitCode::FAILURE
        }
    }
}
