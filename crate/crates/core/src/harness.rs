//! Replicated experiments on the renormalized systems.
//!
//! The n-th system has arrival rate `λ`, service rate `μ`, deterministic
//! patience `n·d` and starts with `n + 1` customers of credit `n·d`; it is
//! observed on `[0, n·T]` and rescaled by `n` in time, space and weight.
//! Replication seeds are `master ^ (n·10⁶ + rep)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{standard_test_suite, Distribution, QuadratureSpec, TestFunction};
use crate::error::{invalid, Result};
use crate::fluid::{mginf_congestion, mginf_served, mginf_workload, nu_fluid_general, DetEdf};
use crate::sim::{self, observables, Mode, SimConfig, Trajectory};

/// Per-replication seed.
pub fn derive_seed(master: u64, n: u64, rep: u64) -> u64 {
    master ^ (n * 1_000_000 + rep)
}

/// The n-th system of the deterministic-deadline sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingScheme {
    pub n: u64,
    pub lambda: f64,
    pub mu: f64,
    pub d: f64,
    /// Horizon in fluid time units; the raw system runs until `n·T`.
    pub horizon: f64,
}

impl ScalingScheme {
    pub fn config(&self, seed: u64) -> SimConfig {
        let credit = self.n as f64 * self.d;
        SimConfig {
            lambda: self.lambda,
            mu: self.mu,
            patience: Distribution::Deterministic { d: credit },
            initial_credits: vec![credit; self.n as usize + 1],
            horizon: self.n as f64 * self.horizon,
            seed,
            mode: Mode::Edf,
        }
    }
}

/// Normalized observables on a fluid-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPaths {
    pub grid: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// `t₁(ν̄ⁿ_t)`, absent when no positive atom remains.
    pub t1: Vec<Option<f64>>,
}

fn check_grid(traj: &Trajectory, n: u64, grid: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let top = traj.horizon() / n as f64;
    if let Some(t) = grid.iter().find(|t| !(0.0..=top).contains(*t)) {
        return Err(crate::Error::OutOfRange { t: *t, horizon: top });
    }
    Ok(())
}

/// `Q̄ⁿ_t = Q_{nt}/n`, `P̄ⁿ_t = P_{nt}/n`, `t₁(ν̄ⁿ_t) = t₁(ν_{nt})/n`.
pub fn normalized_paths(traj: &Trajectory, n: u64, grid: &[f64]) -> Result<NormalizedPaths> {
    check_grid(traj, n, grid)?;
    let obs = observables(traj);
    let scale = n as f64;
    let mut out = NormalizedPaths { grid: grid.to_vec(), q: vec![], p: vec![], t1: vec![] };
    for &t in grid {
        let raw = scale * t;
        let point = obs.at(raw);
        out.q.push(point.q as f64 / scale);
        out.p.push(point.p as f64 / scale);
        out.t1.push(point.t1(raw).map(|x| x / scale));
    }
    Ok(out)
}

/// `⟨ν̄ⁿ_t, φ⟩` for each probe (outer index) and grid time (inner index).
pub fn normalized_pairings(traj: &Trajectory, n: u64, grid: &[f64], phis: &[TestFunction]) -> Result<Vec<Vec<f64>>> {
    check_grid(traj, n, grid)?;
    let mut out = vec![Vec::with_capacity(grid.len()); phis.len()];
    for &t in grid {
        let nu = traj.profile_at(n as f64 * t)?.renormalize(n)?;
        for (row, phi) in out.iter_mut().zip(phis) {
            row.push(nu.pair(phi));
        }
    }
    Ok(out)
}

/// `max_t |path(t) − reference(t)|` over the grid.
pub fn sup_distance(path: &[f64], reference: impl Fn(f64) -> f64, grid: &[f64]) -> f64 {
    path.iter().zip(grid).map(|(v, &t)| (v - reference(t)).abs()).fold(0.0, f64::max)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Fluid-time grid: `T/steps` spacing plus the given breakpoints.
pub fn fluid_grid(horizon: f64, step: f64, breakpoints: &[f64]) -> Vec<f64> {
    let count = (horizon / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(horizon)).collect();
    grid.extend(breakpoints.iter().copied().filter(|b| (0.0..=horizon).contains(b)));
    grid.push(horizon);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub median: f64,
    pub p90: f64,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: u64,
    pub seed: u64,
    /// `(metric, sup-distance)` in a fixed metric order.
    pub sup: Vec<(String, f64)>,
    /// `ω₀/n`, `+∞` if censored.
    pub omega0: f64,
    /// `τ₀/n`, `+∞` if censored.
    pub tau0: f64,
    pub paths: NormalizedPaths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NReport {
    pub n: u64,
    pub reps: Vec<RepOutcome>,
    pub summary: Vec<MetricSummary>,
}

impl NReport {
    pub fn median(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|m| m.metric == metric).map(|m| m.median)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub pass: bool,
}

/// Settings shared by the convergence experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub n_list: Vec<u64>,
    pub reps: u64,
    /// Fluid-time horizon `T`.
    pub horizon: f64,
    /// Grid spacing in fluid time; `T/500` when absent.
    pub grid_step: Option<f64>,
    pub master_seed: u64,
    /// Number of equally spaced times for the probe pairings (0 disables).
    pub pairing_points: usize,
    /// Sup-distance threshold on the primary medians at the largest `n`.
    pub tolerance: Option<f64>,
}

impl ExperimentSettings {
    pub fn new(n_list: Vec<u64>, reps: u64, horizon: f64, master_seed: u64) -> Self {
        Self { n_list, reps, horizon, grid_step: None, master_seed, pairing_points: 50, tolerance: None }
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(invalid("n_list must be non-empty with entries >= 1"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be >= 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T must be positive"));
        }
        if let Some(step) = self.grid_step {
            if !(step > 0.0) {
                return Err(invalid("grid_step must be positive"));
            }
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        self.grid_step.unwrap_or(self.horizon / 500.0)
    }

    fn sorted_n(&self) -> Vec<u64> {
        let mut v = self.n_list.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Which fluid object a report compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ExperimentCase {
    DetEdf { lambda: f64, mu: f64, d: f64 },
    Mginf { lambda: f64, alpha: Distribution },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub case: ExperimentCase,
    pub settings: ExperimentSettings,
    pub grid: Vec<f64>,
    pub per_n: Vec<NReport>,
    pub flags: Vec<Flag>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }

    pub fn for_n(&self, n: u64) -> Option<&NReport> {
        self.per_n.iter().find(|r| r.n == n)
    }

    /// Writes `meta.json`, `paths_n<k>.csv`, `fluid.csv`, `summary.csv`.
    /// At most `paths_reps` replications per `n` go into the path files.
    pub fn write_dir(&self, dir: &Path, paths_reps: usize) -> Result<()> {
        fs::create_dir_all(dir)?;
        let seeds: Vec<serde_json::Value> = self
            .per_n
            .iter()
            .map(|r| serde_json::json!({ "n": r.n, "seeds": r.reps.iter().map(|o| o.seed).collect::<Vec<_>>() }))
            .collect();
        let meta = serde_json::json!({
            "case": self.case,
            "settings": self.settings,
            "seed_rule": "master ^ (n * 1000000 + rep)",
            "seeds": seeds,
            "flags": self.flags,
            "passed": self.passed(),
        });
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

        for r in &self.per_n {
            let mut w = csv::Writer::from_path(dir.join(format!("paths_n{}.csv", r.n)))?;
            w.write_record(["t", "rep", "Qbar", "Pbar", "t1bar"])?;
            for o in r.reps.iter().take(paths_reps) {
                let p = &o.paths;
                for (i, t) in p.grid.iter().enumerate() {
                    w.write_record([
                        t.to_string(),
                        o.rep.to_string(),
                        p.q[i].to_string(),
                        p.p[i].to_string(),
                        p.t1[i].map(|v| v.to_string()).unwrap_or_default(),
                    ])?;
                }
            }
            w.flush()?;
        }

        let mut fluid = csv::Writer::from_path(dir.join("fluid.csv"))?;
        match &self.case {
            ExperimentCase::DetEdf { lambda, mu, d } => {
                let m = DetEdf::new(*lambda, *mu, *d)?;
                fluid.write_record(["t", "Q_fluid", "P_fluid", "r_bar"])?;
                for &t in &self.grid {
                    fluid.write_record([t, m.q_fluid(t), m.p_fluid(t), m.r_bar(t)].map(|v| v.to_string()))?;
                }
            }
            ExperimentCase::Mginf { lambda, alpha } => {
                fluid.write_record(["t", "congestion", "workload", "served"])?;
                for &t in &self.grid {
                    let row = [t, mginf_congestion(t, *lambda, alpha), mginf_workload(t, *lambda, alpha)?, mginf_served(t, *lambda, alpha)];
                    fluid.write_record(row.map(|v| v.to_string()))?;
                }
            }
        }
        fluid.flush()?;

        let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
        summary.write_record(["n", "metric", "median", "p90"])?;
        for r in &self.per_n {
            for m in &r.summary {
                summary.write_record([r.n.to_string(), m.metric.clone(), m.median.to_string(), m.p90.to_string()])?;
            }
        }
        summary.flush()?;
        Ok(())
    }

    /// One log line per `n`.
    pub fn log_lines(&self) -> Vec<String> {
        self.per_n
            .iter()
            .map(|r| {
                let parts: Vec<String> =
                    r.summary.iter().map(|m| format!("{}={:.4}/{:.4}", m.metric, m.median, m.p90)).collect();
                format!("n={} reps={} {}", r.n, r.reps.len(), parts.join(" "))
            })
            .collect()
    }
}

const PRIMARY_EDF: [&str; 3] = ["Qbar", "Pbar", "t1bar"];
const PRIMARY_MGINF: [&str; 3] = ["congestion", "workload", "served"];

fn summarize(reps: &[RepOutcome]) -> Vec<MetricSummary> {
    let Some(first) = reps.first() else { return Vec::new() };
    let mut out: Vec<MetricSummary> = first
        .sup
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let values: Vec<f64> = reps.iter().map(|r| r.sup[i].1).collect();
            MetricSummary { metric: name.clone(), median: quantile(&values, 0.5), p90: quantile(&values, 0.9) }
        })
        .collect();
    for (name, pick) in [("omega0bar", 0usize), ("tau0bar", 1)] {
        let values: Vec<f64> = reps.iter().map(|r| if pick == 0 { r.omega0 } else { r.tau0 }).collect();
        out.push(MetricSummary { metric: name.to_string(), median: quantile(&values, 0.5), p90: quantile(&values, 0.9) });
    }
    out
}

fn flags(per_n: &[NReport], primary: &[&str], tolerance: Option<f64>) -> Vec<Flag> {
    let mut out = Vec::new();
    for metric in primary {
        let medians: Vec<f64> = per_n.iter().filter_map(|r| r.median(metric)).collect();
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        out.push(Flag { name: format!("{metric}_median_decreasing"), pass: decreasing });
        if let (Some(tol), Some(last)) = (tolerance, medians.last()) {
            out.push(Flag { name: format!("{metric}_median_within_{tol}"), pass: *last <= tol });
        }
    }
    out
}

/// Runs `reps` replications of `make(seed)` in parallel, in rep order.
fn replicate<T: Send>(
    n: u64,
    reps: u64,
    master: u64,
    job: impl Fn(u64, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..reps).into_par_iter().map(|rep| job(rep, derive_seed(master, n, rep))).collect()
}

/// Deterministic-deadline convergence: sup-distances of `Q̄ⁿ`, `P̄ⁿ`,
/// `t₁(ν̄ⁿ)` and the probe pairings to their fluid limits, per `n`.
///
/// An absent `t₁(ν̄ⁿ_t)` (no positive atom) is compared as 0, the frontier
/// value once the fluid buffer holds no credit.
pub fn convergence_experiment(lambda: f64, mu: f64, d: f64, settings: &ExperimentSettings) -> Result<ConvergenceReport> {
    settings.validate()?;
    let fluid = DetEdf::new(lambda, mu, d)?;
    let horizon = settings.horizon;
    let grid = fluid_grid(horizon, settings.step(), &[1.0 / mu, d, fluid.omega_star()]);
    let phis = standard_test_suite();
    let pairing_grid: Vec<f64> = match settings.pairing_points {
        0 => Vec::new(),
        1 => vec![horizon],
        k => (0..k).map(|i| horizon * i as f64 / (k - 1) as f64).collect(),
    };
    let model = fluid.model();
    let spec = QuadratureSpec::default();
    let pairing_refs: Vec<Vec<f64>> = phis
        .iter()
        .map(|phi| pairing_grid.iter().map(|&t| nu_fluid_general(t, phi, &model, &spec)).collect())
        .collect::<Result<_>>()?;

    let mut per_n = Vec::new();
    for n in settings.sorted_n() {
        let scheme = ScalingScheme { n, lambda, mu, d, horizon };
        let reps = replicate(n, settings.reps, settings.master_seed, |rep, seed| {
            let traj = sim::run(&scheme.config(seed))?;
            let paths = normalized_paths(&traj, n, &grid)?;
            let t1: Vec<f64> = paths.t1.iter().map(|v| v.unwrap_or(0.0)).collect();
            let mut sup = vec![
                ("Qbar".to_string(), sup_distance(&paths.q, |t| fluid.q_fluid(t), &grid)),
                ("Pbar".to_string(), sup_distance(&paths.p, |t| fluid.p_fluid(t), &grid)),
                ("t1bar".to_string(), sup_distance(&t1, |t| fluid.r_bar(t), &grid)),
            ];
            if !pairing_grid.is_empty() {
                let values = normalized_pairings(&traj, n, &pairing_grid, &phis)?;
                for ((phi, got), want) in phis.iter().zip(&values).zip(&pairing_refs) {
                    let dist = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    sup.push((format!("pair:{}", phi.name()), dist));
                }
            }
            let obs = observables(&traj);
            Ok(RepOutcome {
                rep,
                seed,
                sup,
                omega0: obs.omega0 / n as f64,
                tau0: obs.tau0 / n as f64,
                paths,
            })
        })?;
        let summary = summarize(&reps);
        per_n.push(NReport { n, reps, summary });
    }
    let flags = flags(&per_n, &PRIMARY_EDF, settings.tolerance);
    Ok(ConvergenceReport {
        case: ExperimentCase::DetEdf { lambda, mu, d },
        settings: settings.clone(),
        grid,
        per_n,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub n: u64,
    /// Threshold `x = 0.5/μ` for the buffer-emptying time.
    pub tau_threshold: f64,
    pub freq_tau: f64,
    /// Threshold `ω̄₀* − ξ` with `ξ = 0.25·ω̄₀*`.
    pub omega_threshold: f64,
    pub freq_omega: f64,
    /// `freq(τ̄₀ⁿ ≤ T)`: whether the buffer empties within the horizon.
    pub freq_tau_horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub flags: Vec<Flag>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.flags.iter().all(|f| f.pass)
    }
}

/// Empirical frequencies of early buffer emptying and early first loss.
/// Censored times (not observed before the horizon) count as "not ≤".
pub fn lemma_checks(lambda: f64, mu: f64, d: f64, settings: &ExperimentSettings, max_freq: f64) -> Result<LemmaReport> {
    settings.validate()?;
    let fluid = DetEdf::new(lambda, mu, d)?;
    let x = 0.5 / mu;
    let omega_threshold = 0.75 * fluid.omega_star();
    let horizon = settings.horizon;
    let mut rows = Vec::new();
    for n in settings.sorted_n() {
        let scheme = ScalingScheme { n, lambda, mu, d, horizon };
        let times = replicate(n, settings.reps, settings.master_seed, |_, seed| {
            let obs = observables(&sim::run(&scheme.config(seed))?);
            Ok((obs.tau0 / n as f64, obs.omega0 / n as f64))
        })?;
        let freq = |pred: &dyn Fn(&(f64, f64)) -> bool| times.iter().filter(|v| pred(v)).count() as f64 / times.len() as f64;
        rows.push(LemmaRow {
            n,
            tau_threshold: x,
            freq_tau: freq(&|v| v.0 <= x),
            omega_threshold,
            freq_omega: freq(&|v| v.1 <= omega_threshold),
            freq_tau_horizon: freq(&|v| v.0 <= horizon),
        });
    }
    let nonincreasing = |get: fn(&LemmaRow) -> f64| rows.windows(2).all(|w| get(&w[1]) <= get(&w[0]));
    let last = rows.last().expect("non-empty n_list");
    let flags = vec![
        Flag { name: "tau_freq_nonincreasing".into(), pass: nonincreasing(|r| r.freq_tau) },
        Flag { name: "omega_freq_nonincreasing".into(), pass: nonincreasing(|r| r.freq_omega) },
        Flag { name: format!("tau_freq_at_most_{max_freq}"), pass: last.freq_tau <= max_freq },
        Flag { name: format!("omega_freq_at_most_{max_freq}"), pass: last.freq_omega <= max_freq },
    ];
    Ok(LemmaReport { rows, flags })
}

/// The n-th pure-delay system: `n` initial customers with durations drawn
/// from `n·α`, arrivals at rate `λ` with durations `n·α`.
pub fn mginf_config(n: u64, lambda: f64, alpha: &Distribution, horizon: f64, seed: u64) -> SimConfig {
    let scaled = alpha.scaled(n as f64);
    let mut rng = crate::sim::initial_stream(seed);
    let initial_credits = (0..n)
        .map(|_| loop {
            let v = scaled.sample(&mut rng);
            if v > 0.0 {
                break v;
            }
            // a zero draw has probability 0 for continuous laws; redraw
            let _: f64 = rng.random();
        })
        .collect();
    SimConfig {
        lambda,
        mu: 0.0,
        patience: scaled,
        initial_credits,
        horizon: n as f64 * horizon,
        seed,
        mode: Mode::PureDelay,
    }
}

/// Pure-delay convergence: normalized congestion, workload and served count
/// against their fluid curves.
pub fn mginf_experiment(lambda: f64, alpha: &Distribution, settings: &ExperimentSettings) -> Result<ConvergenceReport> {
    settings.validate()?;
    alpha.validate()?;
    let horizon = settings.horizon;
    let grid = fluid_grid(horizon, settings.step(), &[]);
    let congestion: Vec<f64> = grid.iter().map(|&t| mginf_congestion(t, lambda, alpha)).collect();
    let served: Vec<f64> = grid.iter().map(|&t| mginf_served(t, lambda, alpha)).collect();
    let workload: Vec<f64> = grid.iter().map(|&t| mginf_workload(t, lambda, alpha)).collect::<Result<_>>()?;

    let mut per_n = Vec::new();
    for n in settings.sorted_n() {
        let reps = replicate(n, settings.reps, settings.master_seed, |rep, seed| {
            let traj = sim::run(&mginf_config(n, lambda, alpha, horizon, seed))?;
            let paths = normalized_paths(&traj, n, &grid)?;
            let scale = n as f64;
            let work: Vec<f64> = grid
                .iter()
                .map(|&t| {
                    let nu = traj.profile_at(scale * t)?;
                    Ok(nu.pair(&|x: f64| x.max(0.0)) / (scale * scale))
                })
                .collect::<Result<_>>()?;
            let dist = |got: &[f64], want: &[f64]| got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let sup = vec![
                ("congestion".to_string(), dist(&paths.q, &congestion)),
                ("workload".to_string(), dist(&work, &workload)),
                ("served".to_string(), dist(&paths.p, &served)),
            ];
            let obs = observables(&traj);
            Ok(RepOutcome { rep, seed, sup, omega0: obs.omega0 / scale, tau0: obs.tau0 / scale, paths })
        })?;
        let summary = summarize(&reps);
        per_n.push(NReport { n, reps, summary });
    }
    let flags = flags(&per_n, &PRIMARY_MGINF[..1], settings.tolerance);
    Ok(ConvergenceReport {
        case: ExperimentCase::Mginf { lambda, alpha: alpha.clone() },
        settings: settings.clone(),
        grid,
        per_n,
        flags,
    })
}

/// Writes a lemma report as CSV `n,tau_threshold,freq_tau,omega_threshold,freq_omega,freq_tau_horizon`.
pub fn write_lemma_csv<W: Write>(report: &LemmaReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "tau_threshold", "freq_tau", "omega_threshold", "freq_omega", "freq_tau_horizon"])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            r.tau_threshold.to_string(),
            r.freq_tau.to_string(),
            r.omega_threshold.to_string(),
            r.freq_omega.to_string(),
            r.freq_tau_horizon.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
