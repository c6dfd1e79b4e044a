//! The `edffluid` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments,
//! 3 the command ran but an acceptance check failed.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calculus::Distribution;
use crate::config::{RunConfig, CONFIG_HELP};
use crate::error::{Error, Result};
use crate::fluid::{write_det_edf_csv, write_mginf_csv, DetEdf};
use crate::harness::{self, ScalingScheme};
use crate::sim::{self, observables, Mode, SimConfig};
use crate::transport::{case_names, case_registry, check_case};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "edffluid", version, about = "EDF queue profile simulation and fluid limits")]
pub struct Cli {
    /// Worker threads for replications (default: all cores). EDFFLUID_THREADS overrides.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory; writes events.csv and observables.csv.
    #[command(after_long_help = CONFIG_HELP)]
    Simulate(SimulateArgs),
    /// Evaluate a fluid limit on a time grid.
    Fluid(FluidArgs),
    /// Run the replicated convergence experiment described by a config.
    #[command(after_long_help = CONFIG_HELP)]
    Converge(ConvergeArgs),
    /// Check the transport solution formula on a registered case.
    TransportCheck(TransportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON run configuration (see --help for keys).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed; defaults to seeds.master.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FluidCase {
    DetEdf,
    Mginf,
}

#[derive(Debug, Args)]
pub struct FluidArgs {
    #[arg(long, value_enum)]
    pub case: FluidCase,
    #[arg(long)]
    pub lambda: f64,
    /// Service rate (det-edf).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Deterministic deadline (det-edf).
    #[arg(long)]
    pub d: Option<f64>,
    /// Service-duration law as JSON (mginf), e.g. '{"kind":"exponential","rate":1.0}'.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long)]
    pub dt: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// JSON run configuration (see --help for keys).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides output.directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replications per n written to paths_n<k>.csv.
    #[arg(long, default_value_t = 10)]
    pub paths_reps: usize,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    /// Case name, or "all".
    #[arg(long)]
    pub case: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("EDFFLUID_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("EDFFLUID_THREADS = {v:?} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = thread_count(cli.threads)? {
        // a pool built earlier in the process (tests) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fluid(a) => cmd_fluid(&a),
        Command::Converge(a) => cmd_converge(&a),
        Command::TransportCheck(a) => cmd_transport_check(&a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn sim_config(cfg: &RunConfig, seed: u64) -> Result<SimConfig> {
    let m = &cfg.model;
    let horizon = cfg.experiment.horizon;
    let sim = match &m.det_case {
        Some(det) => {
            let n = cfg.experiment.n_list[0];
            let scheme = ScalingScheme { n, lambda: m.lambda, mu: cfg.mu(), d: det.d, horizon: horizon / n as f64 };
            let mut c = scheme.config(seed);
            c.horizon = horizon;
            c
        }
        None => SimConfig {
            lambda: m.lambda,
            mu: cfg.mu(),
            patience: m.patience.clone().expect("validated"),
            initial_credits: m.initial_credits.clone().unwrap_or_default(),
            horizon,
            seed,
            mode: cfg.mode,
        },
    };
    sim.validate()?;
    Ok(sim)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let cfg = RunConfig::from_path(&a.config)?;
    let sim = sim_config(&cfg, a.seed.unwrap_or(cfg.seeds.master))?;
    let traj = sim::run(&sim)?;
    fs::create_dir_all(&a.out)?;
    traj.write_events_csv(BufWriter::new(File::create(a.out.join("events.csv"))?))?;
    let step = cfg.experiment.grid_step.unwrap_or(sim.horizon / 500.0);
    if !(step > 0.0) {
        return Err(Error::Config("experiment.grid_step must be positive".into()));
    }
    let grid = harness::fluid_grid(sim.horizon, step, &[]);
    observables(&traj).write_csv(&grid, BufWriter::new(File::create(a.out.join("observables.csv"))?))?;
    Ok(EXIT_OK)
}

pub fn cmd_fluid(a: &FluidArgs) -> Result<i32> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("--{name} is required for this case")));
    if !(a.dt > 0.0) {
        return Err(Error::Config(format!("--dt = {} must be positive", a.dt)));
    }
    if !(a.t_max >= 0.0) {
        return Err(Error::Config(format!("--t-max = {} must be >= 0", a.t_max)));
    }
    match a.case {
        FluidCase::DetEdf => {
            let model = DetEdf::new(a.lambda, need(a.mu, "mu")?, need(a.d, "d")?)?;
            write_det_edf_csv(&model, a.t_max, a.dt, output(a.out.as_deref())?)?;
        }
        FluidCase::Mginf => {
            let text = a.alpha.as_deref().ok_or_else(|| Error::Config("--alpha is required for mginf".into()))?;
            let alpha: Distribution =
                serde_json::from_str(text).map_err(|e| Error::Config(format!("--alpha: {e}")))?;
            write_mginf_csv(a.lambda, &alpha, a.t_max, a.dt, output(a.out.as_deref())?)?;
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_converge(a: &ConvergeArgs) -> Result<i32> {
    let cfg = RunConfig::from_path(&a.config)?;
    let dir = a.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let settings = cfg.settings();
    let report = match cfg.mode {
        Mode::Edf => {
            let det = cfg
                .model
                .det_case
                .as_ref()
                .ok_or_else(|| Error::Config("converge in edf mode needs model.det_case".into()))?;
            harness::convergence_experiment(cfg.model.lambda, cfg.mu(), det.d, &settings)?
        }
        Mode::PureDelay => {
            let alpha = cfg.model.patience.as_ref().expect("validated");
            harness::mginf_experiment(cfg.model.lambda, alpha, &settings)?
        }
    };
    for line in report.log_lines() {
        eprintln!("{line}");
    }
    report.write_dir(&dir, a.paths_reps)?;
    let mut passed = report.passed();

    if let (Some(reps), Some(det)) = (cfg.experiment.lemma_reps, &cfg.model.det_case) {
        let lemma_settings = harness::ExperimentSettings { reps, ..settings };
        let lemma = harness::lemma_checks(cfg.model.lambda, cfg.mu(), det.d, &lemma_settings, 0.05)?;
        harness::write_lemma_csv(&lemma, BufWriter::new(File::create(dir.join("lemma.csv"))?))?;
        for f in &lemma.flags {
            eprintln!("{} {}", if f.pass { "PASS" } else { "FAIL" }, f.name);
        }
        passed &= lemma.passed();
    }
    for f in &report.flags {
        eprintln!("{} {}", if f.pass { "PASS" } else { "FAIL" }, f.name);
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_transport_check(a: &TransportArgs) -> Result<i32> {
    if !(a.tol > 0.0) {
        return Err(Error::Config(format!("--tol = {} must be positive", a.tol)));
    }
    let cases: Vec<_> = case_registry().into_iter().filter(|c| a.case == "all" || c.name == a.case).collect();
    if cases.is_empty() {
        return Err(Error::Config(format!(
            "unknown case {:?}; available: all, {}",
            a.case,
            case_names().join(", ")
        )));
    }
    let mut rows = Vec::new();
    let mut passed = true;
    for case in &cases {
        let report = check_case(case, a.tol)?;
        if report.mesh_gap > report.mesh_tol {
            eprintln!("{}: quadrature meshes disagree by {:e}", case.name, report.mesh_gap);
        }
        passed &= report.passed();
        rows.extend(report.rows);
    }
    let all = crate::transport::TransportReport { rows, mesh_gap: 0.0, mesh_tol: 0.0 };
    all.write_csv(output(a.out.as_deref())?)?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
