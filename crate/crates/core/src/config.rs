//! JSON run configuration shared by the `simulate` and `converge` commands.
//!
//! ```json
//! {
//!   "model": {"lambda": 2.0, "mu": 1.0, "det_case": {"d": 2.0}},
//!   "mode": "edf",
//!   "experiment": {"n_list": [10, 100, 1000], "reps": 100, "T": 5.0},
//!   "seeds": {"master": 2024},
//!   "output": {"directory": "out/det"}
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calculus::Distribution;
use crate::error::{Error, Result};
use crate::harness::ExperimentSettings;
use crate::sim::Mode;

/// Text shown by `--help` on the commands that read a config file.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (JSON, unknown keys rejected)
  model.lambda            arrival rate, >= 0 (required)
  model.mu                service rate, >= 0 (required in edf mode, default 0)
  model.patience          patience law (edf) or service-duration law (pure_delay),
                          tagged record such as {\"kind\":\"deterministic\",\"d\":2.0},
                          {\"kind\":\"exponential\",\"rate\":1.0}, {\"kind\":\"uniform\",\"a\":0,\"b\":1},
                          {\"kind\":\"discrete\",\"points\":[..],\"probs\":[..]}
  model.initial_credits   list of positive initial credits (raw system)
  model.det_case.d        deterministic deadline d; replaces patience and
                          initial_credits with the n-th scaled system
                          (n+1 customers of credit n*d, patience n*d)
  mode                    \"edf\" (default) or \"pure_delay\"
  experiment.n_list       scaling indices, default [10, 100, 1000]
                          (simulate uses the first entry for det_case)
  experiment.reps         replications per n, default 100
  experiment.T            horizon in fluid time units (simulate: raw time), required
  experiment.grid_step    sup-distance grid step, default T/500
  experiment.pairing_points
                          times for the probe-function pairings, default 50
  experiment.tolerance    optional threshold on the largest-n medians
  experiment.lemma_reps   optional replication count for the early-emptying
                          and early-loss frequency checks
  seeds.master            master seed, default 0
  seeds.rule              only \"xor\": seed = master ^ (n*1000000 + rep)
  output.directory        output directory, default \"out\"";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetCase {
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda: f64,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub patience: Option<Distribution>,
    #[serde(default)]
    pub initial_credits: Option<Vec<f64>>,
    #[serde(default)]
    pub det_case: Option<DetCase>,
}

fn default_n_list() -> Vec<u64> {
    vec![10, 100, 1000]
}

fn default_reps() -> u64 {
    100
}

fn default_pairing_points() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u64>,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default = "default_pairing_points")]
    pub pairing_points: usize,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub lemma_reps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeedRule {
    #[default]
    Xor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    #[serde(default)]
    pub master: u64,
    #[serde(default)]
    pub rule: SeedRule,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_directory() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub mode: Mode,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks; numeric ranges are left to the consumers.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match (&m.det_case, &m.patience, &m.initial_credits) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(config_err("model.det_case excludes model.patience and model.initial_credits"))
            }
            (None, None, _) => return Err(config_err("model needs either det_case or patience")),
            _ => {}
        }
        if self.mode == Mode::Edf && m.mu.is_none() {
            return Err(config_err("missing field `mu` (required in edf mode)"));
        }
        if self.mode == Mode::PureDelay && m.det_case.is_some() {
            return Err(config_err("model.det_case is only meaningful in edf mode"));
        }
        if self.experiment.n_list.is_empty() {
            return Err(config_err("experiment.n_list must not be empty"));
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        self.model.mu.unwrap_or(0.0)
    }

    pub fn settings(&self) -> ExperimentSettings {
        let e = &self.experiment;
        ExperimentSettings {
            n_list: e.n_list.clone(),
            reps: e.reps,
            horizon: e.horizon,
            grid_step: e.grid_step,
            master_seed: self.seeds.master,
            pairing_points: e.pairing_points,
            tolerance: e.tolerance,
        }
    }
}
