//! Shared helpers for the simulator tests and the acceptance suite.

use edffluid::sim::{observables, run, EventKind, Fate, Mode, SimConfig, Trajectory};
use edffluid::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_config(rng: &mut ChaCha8Rng, seed: u64) -> SimConfig {
    let patience = match rng.random_range(0..4) {
        0 => Distribution::Deterministic { d: rng.random_range(0.2..3.0) },
        1 => Distribution::Exponential { rate: rng.random_range(0.3..3.0) },
        2 => {
            let a = rng.random_range(0.0..1.0);
            Distribution::Uniform { a, b: a + rng.random_range(0.1..2.0) }
        }
        _ => Distribution::Discrete { points: vec![0.5, 1.0, 2.0], probs: vec![0.25, 0.25, 0.5] },
    };
    let k = rng.random_range(0..6);
    SimConfig {
        lambda: rng.random_range(0.0..4.0),
        mu: rng.random_range(0.0..4.0),
        patience,
        initial_credits: (0..k).map(|_| rng.random_range(0.05..3.0)).collect(),
        horizon: rng.random_range(0.5..5.0),
        seed,
        mode: if rng.random_bool(0.8) { Mode::Edf } else { Mode::PureDelay },
    }
}

pub fn check_invariants(traj: &Trajectory) {
    let events = &traj.events;
    assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
    let obs = observables(traj);
    let initial = traj.initial_count();
    let mut in_service: Option<usize> = None;
    for (i, e) in events.iter().enumerate() {
        let c = &traj.customers[e.customer];
        match e.kind {
            EventKind::ServiceStart => {
                assert_eq!(traj.mode(), Mode::Edf);
                assert!(in_service.is_none(), "two customers in service");
                in_service = Some(c.id);
                assert!(c.deadline > e.time, "served an expired customer");
                // brute-force EDF pick over the ledger
                let best = traj
                    .customers
                    .iter()
                    .filter(|o| o.arrival_time <= e.time && o.erased_at() >= e.time && o.deadline > e.time)
                    .min_by(|a, b| a.deadline.total_cmp(&b.deadline).then(a.id.cmp(&b.id)))
                    .unwrap();
                assert_eq!(best.id, c.id, "not the earliest deadline at {}", e.time);
            }
            EventKind::ServiceEnd => {
                assert_eq!(in_service, Some(c.id));
                in_service = None;
            }
            EventKind::Loss => assert_eq!(c.deadline, e.time),
            EventKind::Arrival => {}
        }
        let last_at_time = events.get(i + 1).is_none_or(|n| n.time > e.time);
        if !last_at_time {
            continue;
        }
        let t = e.time;
        let p = obs.at(t);
        assert_eq!(initial + p.arrivals, p.x + p.s + p.p, "conservation at {t}");
        let nu = traj.profile_at(t).unwrap();
        assert_eq!(nu.total_mass(), (p.q + p.p) as f64);
        assert_eq!(nu.mass_positive(), p.q as f64);
        if traj.mode() == Mode::Edf {
            let eligible = traj.customers.iter().any(|o| o.arrival_time <= t && o.erased_at() > t && o.deadline > t);
            assert!(!(in_service.is_none() && eligible), "idle server with eligible customer at {t}");
            assert_eq!(p.x, p.q + usize::from(in_service.is_some()));
        }
    }
}


/// Runs `count` random configurations through [`check_invariants`] and
/// returns the number of service starts and losses seen.
pub fn fuzz(count: u64, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut starts, mut losses) = (0, 0);
    for run_seed in 0..count {
        let cfg = random_config(&mut rng, run_seed);
        let traj = run(&cfg).unwrap();
        check_invariants(&traj);
        for c in &traj.customers {
            assert!(c.deadline >= c.arrival_time);
            if let Fate::Served { start, end } = c.fate {
                assert!(start < c.deadline && start < end);
            }
        }
        starts += traj.events.iter().filter(|e| e.kind == EventKind::ServiceStart).count();
        losses += traj.events.iter().filter(|e| e.kind == EventKind::Loss).count();
    }
    (starts, losses)
}
