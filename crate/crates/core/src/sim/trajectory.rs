use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Mode, SimConfig};
use crate::error::{Error, Result};
use crate::measure::PointMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    ServiceStart,
    ServiceEnd,
    /// Deadline reached while waiting. In pure-delay mode: departure.
    Loss,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service_start",
            EventKind::ServiceEnd => "service_end",
            EventKind::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub customer: usize,
}

/// Where a customer stands at the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fate {
    Waiting,
    InService { start: f64 },
    Served { start: f64, end: f64 },
    Lost { at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: usize,
    pub initial: bool,
    pub arrival_time: f64,
    pub deadline: f64,
    pub fate: Fate,
}

impl Customer {
    pub fn service_start(&self) -> Option<f64> {
        match self.fate {
            Fate::InService { start } | Fate::Served { start, .. } => Some(start),
            _ => None,
        }
    }

    /// Time from which the customer's atom is absent from the profile.
    pub fn erased_at(&self) -> f64 {
        self.service_start().unwrap_or(f64::INFINITY)
    }
}

/// Whether a snapshot at `t` reflects service starts occurring exactly at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Snapshot {
    /// Atoms of customers entering service at `t` already erased.
    #[default]
    AfterStarts,
    /// Atoms of customers entering service at `t` still present.
    BeforeStarts,
}

/// Complete event history of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: SimConfig,
    pub events: Vec<Event>,
    pub customers: Vec<Customer>,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn initial_count(&self) -> usize {
        self.customers.iter().filter(|c| c.initial).count()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::OutOfRange { t, horizon: self.horizon() });
        }
        Ok(())
    }

    /// The credit profile `ν_t`: a unit atom at `deadline − t` for every
    /// customer present by `t` that has not entered service.
    pub fn profile_at(&self, t: f64) -> Result<PointMeasure> {
        self.profile_at_with(t, Snapshot::AfterStarts)
    }

    pub fn profile_at_with(&self, t: f64, side: Snapshot) -> Result<PointMeasure> {
        self.check_time(t)?;
        let present = |c: &&Customer| {
            let erased = c.erased_at();
            c.arrival_time <= t
                && match side {
                    Snapshot::AfterStarts => erased > t,
                    Snapshot::BeforeStarts => erased >= t,
                }
        };
        PointMeasure::unit_atoms(self.customers.iter().filter(present).map(|c| c.deadline - t))
    }

    /// CSV with header `time,kind,customer_id,deadline`.
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "kind", "customer_id", "deadline"])?;
        for e in &self.events {
            let c = &self.customers[e.customer];
            w.write_record([
                e.time.to_string(),
                e.kind.as_str().to_string(),
                e.customer.to_string(),
                c.deadline.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
