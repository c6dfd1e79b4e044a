//! Exact event-driven simulation of the hard-EDF queue with impatient
//! customers, and of the pure-delay (infinite-server) profile.
//!
//! Between events every atom of the profile moves left at unit speed. Events
//! are arrivals, service starts and ends, and losses, which are scheduled at
//! the exact deadlines. A customer whose deadline equals the current time is
//! lost, never served.

mod engine;
mod martingale;
mod observables;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use engine::{initial_stream, run, run_scripted, ScriptedArrival};
pub use martingale::{bracket_at, bracket_path, generator_apply, martingale_at, martingale_path, Compensator, MartingaleParams};
pub use observables::{observables, ObsPoint, Observables};
pub use trajectory::{Customer, Event, EventKind, Fate, Snapshot, Trajectory};

use crate::calculus::Distribution;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Single non-idling server, hard EDF, losses at deadlines.
    #[default]
    Edf,
    /// No server: each atom leaves when it crosses zero.
    PureDelay,
}

/// Parameters of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub mu: f64,
    /// Patience law in EDF mode, service-duration law in pure-delay mode.
    pub patience: Distribution,
    pub initial_credits: Vec<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu = {} must be finite and >= 0", self.mu)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon = {} must be positive", self.horizon)));
        }
        if let Some(c) = self.initial_credits.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(invalid(format!("initial credit {c} must be positive")));
        }
        self.patience.validate()
    }
}
