use std::collections::BTreeSet;
use std::io::Write;

use super::trajectory::{EventKind, Trajectory};
use super::Mode;
use crate::error::Result;

/// State right after all events at `time` (paths are right-continuous).
///
/// In pure-delay mode `q` counts customers in service, `p` counts departed
/// customers, `s` stays 0 and `x = q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsPoint {
    pub time: f64,
    /// Waiting customers, `⟨ν_t, 1{x > 0}⟩`.
    pub q: usize,
    /// Lost customers, `⟨ν_t, 1{x ≤ 0}⟩`.
    pub p: usize,
    /// Served (completed) customers.
    pub s: usize,
    /// Customers in buffer plus booth.
    pub x: usize,
    /// Arrivals after time 0.
    pub arrivals: usize,
    /// Smallest deadline among waiting customers.
    pub next_deadline: Option<f64>,
}

impl ObsPoint {
    /// `t₁(ν_t)` for a `t` inside this point's constancy interval.
    pub fn t1(&self, t: f64) -> Option<f64> {
        self.next_deadline.map(|d| d - t)
    }
}

/// Piecewise-constant observables of a trajectory, plus `τ₀` and `ω₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub points: Vec<ObsPoint>,
    pub horizon: f64,
    pub initial: usize,
    /// First time the buffer holds no positive atom; `+∞` if never.
    pub tau0: f64,
    /// First loss (first atom reaching 0); `+∞` if never.
    pub omega0: f64,
}

impl Observables {
    /// State in force at time `t` (last point with `time ≤ t`).
    pub fn at(&self, t: f64) -> &ObsPoint {
        let idx = self.points.partition_point(|p| p.time <= t);
        &self.points[idx.saturating_sub(1)]
    }

    pub fn t1(&self, t: f64) -> Option<f64> {
        self.at(t).t1(t)
    }

    /// Constancy segments `[start, end)` clipped to `[0, t]`.
    pub fn segments(&self, t: f64) -> impl Iterator<Item = (f64, f64, &ObsPoint)> {
        self.points.iter().enumerate().filter_map(move |(i, p)| {
            let end = self.points.get(i + 1).map_or(t, |n| n.time.min(t));
            (p.time < end).then_some((p.time, end, p))
        })
    }

    /// CSV `t,Q,P,S,X,t1` sampled on `grid` merged with every event time.
    /// `t1` is left empty when the buffer holds no positive atom.
    pub fn write_csv<W: Write>(&self, grid: &[f64], out: W) -> Result<()> {
        let mut times: Vec<f64> = grid
            .iter()
            .copied()
            .chain(self.points.iter().map(|p| p.time))
            .filter(|t| (0.0..=self.horizon).contains(t))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "Q", "P", "S", "X", "t1"])?;
        for t in times {
            let p = self.at(t);
            w.write_record([
                t.to_string(),
                p.q.to_string(),
                p.p.to_string(),
                p.s.to_string(),
                p.x.to_string(),
                p.t1(t).map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn observables(traj: &Trajectory) -> Observables {
    let pure = traj.mode() == Mode::PureDelay;
    let mut waiting: BTreeSet<(u64, usize)> = BTreeSet::new();
    let key = |d: f64| -> u64 {
        // order-preserving map of f64 onto u64
        let bits = d.to_bits();
        if bits >> 63 == 1 {
            !bits
        } else {
            bits | (1 << 63)
        }
    };
    let mut busy = false;
    let (mut p, mut s, mut arrivals) = (0usize, 0usize, 0usize);
    let mut points: Vec<ObsPoint> = Vec::new();
    let mut omega0 = f64::INFINITY;

    let mut snapshot = |time: f64, waiting: &BTreeSet<(u64, usize)>, busy: bool, p, s, arrivals| {
        let q = waiting.len();
        let point = ObsPoint {
            time,
            q,
            p,
            s,
            x: q + usize::from(busy),
            arrivals,
            next_deadline: waiting.first().map(|&(_, id)| traj.customers[id].deadline),
        };
        match points.last_mut() {
            Some(last) if last.time == time => *last = point,
            _ => points.push(point),
        }
    };

    if traj.events.first().is_none_or(|e| e.time > 0.0) {
        snapshot(0.0, &waiting, busy, p, s, arrivals);
    }
    for (i, e) in traj.events.iter().enumerate() {
        let c = &traj.customers[e.customer];
        match e.kind {
            EventKind::Arrival => {
                if !c.initial {
                    arrivals += 1;
                }
                waiting.insert((key(c.deadline), c.id));
            }
            EventKind::ServiceStart => {
                waiting.remove(&(key(c.deadline), c.id));
                busy = true;
            }
            EventKind::ServiceEnd => {
                busy = false;
                s += 1;
            }
            EventKind::Loss => {
                waiting.remove(&(key(c.deadline), c.id));
                p += 1;
                omega0 = omega0.min(e.time);
            }
        }
        let last_at_time = traj.events.get(i + 1).is_none_or(|n| n.time > e.time);
        if last_at_time {
            snapshot(e.time, &waiting, busy, p, s, arrivals);
        }
    }
    if pure {
        debug_assert_eq!(s, 0);
    }
    let tau0 = points.iter().find(|pt| pt.q == 0).map_or(f64::INFINITY, |pt| pt.time);
    Observables { points, horizon: traj.horizon(), initial: traj.initial_count(), tau0, omega0 }
}
