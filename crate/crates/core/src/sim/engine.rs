use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trajectory::{Customer, Event, EventKind, Fate, Trajectory};
use super::{Mode, SimConfig};
use crate::calculus::Distribution;
use crate::error::{invalid, Error, Result};

/// RNG substreams, one per purpose, so that e.g. changing `mu` leaves the
/// arrival sample path untouched.
const ARRIVAL_STREAM: u64 = 0;
const SERVICE_STREAM: u64 = 1;
const PATIENCE_STREAM: u64 = 2;
const INITIAL_STREAM: u64 = 3;

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Substream reserved for drawing initial populations outside the engine.
pub fn initial_stream(seed: u64) -> ChaCha8Rng {
    substream(seed, INITIAL_STREAM)
}

fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// One scripted arrival: absolute time and patience.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedArrival {
    pub time: f64,
    pub patience: f64,
}

trait Driver {
    /// Next arrival strictly after the previous one, if any.
    fn next_arrival(&mut self) -> Result<Option<ScriptedArrival>>;
    fn service_duration(&mut self, now: f64) -> Result<f64>;
}

struct RandomDriver {
    lambda: f64,
    mu: f64,
    patience: Distribution,
    clock: f64,
    arrivals: ChaCha8Rng,
    services: ChaCha8Rng,
    patience_rng: ChaCha8Rng,
}

impl Driver for RandomDriver {
    fn next_arrival(&mut self) -> Result<Option<ScriptedArrival>> {
        if self.lambda <= 0.0 {
            return Ok(None);
        }
        self.clock += exponential(&mut self.arrivals, self.lambda);
        let patience = self.patience.sample(&mut self.patience_rng);
        Ok(Some(ScriptedArrival { time: self.clock, patience }))
    }

    fn service_duration(&mut self, _now: f64) -> Result<f64> {
        if self.mu <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(exponential(&mut self.services, self.mu))
    }
}

struct ScriptDriver<'a> {
    arrivals: std::iter::Copied<std::slice::Iter<'a, ScriptedArrival>>,
    services: std::iter::Copied<std::slice::Iter<'a, f64>>,
}

impl Driver for ScriptDriver<'_> {
    fn next_arrival(&mut self) -> Result<Option<ScriptedArrival>> {
        Ok(self.arrivals.next())
    }

    fn service_duration(&mut self, now: f64) -> Result<f64> {
        self.services
            .next()
            .ok_or_else(|| Error::ScriptExhausted(format!("no service duration left for a start at t = {now}")))
    }
}

/// Waiting-set key: deadline first, then customer id (arrival order).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

struct Engine<D> {
    mode: Mode,
    horizon: f64,
    driver: D,
    now: f64,
    waiting: BTreeSet<Key>,
    in_service: Option<(usize, f64)>,
    pending: Option<ScriptedArrival>,
    customers: Vec<Customer>,
    events: Vec<Event>,
}

impl<D: Driver> Engine<D> {
    fn admit(&mut self, time: f64, patience: f64, initial: bool) {
        let id = self.customers.len();
        let deadline = time + patience;
        self.customers.push(Customer { id, initial, arrival_time: time, deadline, fate: Fate::Waiting });
        self.events.push(Event { time, kind: EventKind::Arrival, customer: id });
        self.waiting.insert(Key(deadline, id));
    }

    fn start_service_if_idle(&mut self) -> Result<()> {
        if self.mode == Mode::PureDelay || self.in_service.is_some() {
            return Ok(());
        }
        // expired customers are flushed first, so the minimum is eligible
        while let Some(&Key(deadline, id)) = self.waiting.first() {
            if deadline > self.now {
                break;
            }
            self.lose(id, deadline);
        }
        if let Some(Key(_, id)) = self.waiting.pop_first() {
            let duration = self.driver.service_duration(self.now)?;
            let start = self.now;
            self.customers[id].fate = Fate::InService { start };
            self.events.push(Event { time: start, kind: EventKind::ServiceStart, customer: id });
            self.in_service = Some((id, start + duration));
        }
        Ok(())
    }

    fn lose(&mut self, id: usize, at: f64) {
        self.waiting.remove(&Key(self.customers[id].deadline, id));
        self.customers[id].fate = Fate::Lost { at };
        self.events.push(Event { time: at, kind: EventKind::Loss, customer: id });
    }

    fn run(mut self, initial_credits: &[f64]) -> Result<(Vec<Event>, Vec<Customer>)> {
        for &c in initial_credits {
            self.admit(0.0, c, true);
        }
        self.pending = self.driver.next_arrival()?;
        self.start_service_if_idle()?;

        loop {
            // ties resolve loss < service end < arrival
            let loss = self.waiting.first().map(|k| k.0);
            let end = self.in_service.map(|(_, e)| e);
            let arrival = self.pending.map(|a| a.time);
            let mut next: Option<(f64, u8)> = None;
            for (t, rank) in [(loss, 0u8), (end, 1), (arrival, 2)] {
                if let Some(t) = t {
                    if next.is_none_or(|(best, r)| t < best || (t == best && rank < r)) {
                        next = Some((t, rank));
                    }
                }
            }
            let Some((t, rank)) = next else { break };
            if t > self.horizon {
                break;
            }
            self.now = t;
            match rank {
                0 => {
                    let Key(deadline, id) = *self.waiting.first().expect("loss candidate");
                    self.lose(id, deadline);
                }
                1 => {
                    let (id, end) = self.in_service.take().expect("service candidate");
                    let Fate::InService { start } = self.customers[id].fate else {
                        unreachable!("customer in service has an InService fate")
                    };
                    self.customers[id].fate = Fate::Served { start, end };
                    self.events.push(Event { time: end, kind: EventKind::ServiceEnd, customer: id });
                }
                _ => {
                    let a = self.pending.take().expect("arrival candidate");
                    self.admit(a.time, a.patience, false);
                    self.pending = self.driver.next_arrival()?;
                    if let Some(next) = self.pending {
                        if next.time < a.time {
                            return Err(invalid("arrival times must be nondecreasing"));
                        }
                    }
                }
            }
            self.start_service_if_idle()?;
        }
        Ok((self.events, self.customers))
    }
}

fn execute<D: Driver>(config: &SimConfig, driver: D) -> Result<Trajectory> {
    config.validate()?;
    let engine = Engine {
        mode: config.mode,
        horizon: config.horizon,
        driver,
        now: 0.0,
        waiting: BTreeSet::new(),
        in_service: None,
        pending: None,
        customers: Vec::new(),
        events: Vec::new(),
    };
    let (events, customers) = engine.run(&config.initial_credits)?;
    Ok(Trajectory { config: config.clone(), events, customers })
}

/// Simulates one trajectory: Poisson(λ) arrivals, patience drawn at arrival,
/// exponential(μ) service drawn at service start.
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    let driver = RandomDriver {
        lambda: config.lambda,
        mu: config.mu,
        patience: config.patience.clone(),
        clock: 0.0,
        arrivals: substream(config.seed, ARRIVAL_STREAM),
        services: substream(config.seed, SERVICE_STREAM),
        patience_rng: substream(config.seed, PATIENCE_STREAM),
    };
    execute(config, driver)
}

/// Same engine with every random draw replaced by a script. Service
/// durations are consumed in service-start order; running out of them before
/// the horizon is an error. `lambda`, `mu`, `patience` and `seed` of the
/// config are ignored.
pub fn run_scripted(config: &SimConfig, arrivals: &[ScriptedArrival], services: &[f64]) -> Result<Trajectory> {
    if arrivals.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(invalid("scripted arrival times must be increasing"));
    }
    if let Some(a) = arrivals.iter().find(|a| !(a.time >= 0.0) || !(a.patience >= 0.0)) {
        return Err(invalid(format!("bad scripted arrival {a:?}")));
    }
    if let Some(s) = services.iter().find(|s| !(**s > 0.0)) {
        return Err(invalid(format!("scripted service duration {s} must be positive")));
    }
    let driver = ScriptDriver { arrivals: arrivals.iter().copied(), services: services.iter().copied() };
    execute(config, driver)
}
