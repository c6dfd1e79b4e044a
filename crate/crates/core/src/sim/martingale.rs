//! Dynkin martingales of the profile process and their brackets.
//!
//! For `φ ∈ C¹_b`, with atoms moving left at unit speed,
//!
//! ```text
//! M_φ(t) = ⟨ν_t,φ⟩ − ⟨ν_0,φ⟩ + ∫₀ᵗ⟨ν_s,φ′⟩ds + μ∫₀ᵗφ(t₁(ν_s))1{ν_s(ℝ₊)>0}ds − λt·E[φ(D)]
//! ⟨M_φ⟩_t = μ∫₀ᵗφ²(t₁(ν_s))1{ν_s(ℝ₊)>0}ds + λt·E[φ²(D)]
//! ```
//!
//! The drift integral is evaluated exactly through `φ` itself (each atom
//! contributes `φ(x_a) − φ(x_b)` over its lifetime); the service integrals
//! use quadrature per inter-event segment, where `t₁(ν_s)` is affine.

use super::observables::{observables, Observables};
use super::trajectory::Trajectory;
use crate::calculus::{expect, integrate, Distribution, QuadratureSpec, RcllFunction, TestFunction};
use crate::error::Result;
use crate::measure::PointMeasure;

/// Arrival compensator used in `M_φ` and `⟨M_φ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compensator {
    /// `λt·E[φ(D)]`: every arrival adds an atom, as in the generator.
    #[default]
    Generator,
    /// `λ·E[φ(D)]·∫₀ᵗ1{X_s>0}ds`: an arrival finding the server idle enters
    /// service at once and never shows in the profile. Exact for the
    /// simulated non-idling system.
    NonIdling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleParams {
    pub lambda: f64,
    pub mu: f64,
    pub patience: Distribution,
    pub compensator: Compensator,
}

impl MartingaleParams {
    pub fn new(lambda: f64, mu: f64, patience: Distribution) -> Self {
        Self { lambda, mu, patience, compensator: Compensator::Generator }
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self::new(traj.config.lambda, traj.config.mu, traj.config.patience.clone())
    }

    pub fn with_compensator(mut self, compensator: Compensator) -> Self {
        self.compensator = compensator;
        self
    }
}

struct Integrals {
    /// `∫₀ᵗ g(t₁(ν_s))1{ν_s(ℝ₊)>0}ds`
    service: f64,
    /// `∫₀ᵗ 1{X_s > 0} ds`
    busy: f64,
}

fn service_integrals(obs: &Observables, g: &dyn Fn(f64) -> f64, t: f64, spec: &QuadratureSpec) -> Result<Integrals> {
    let mut service = 0.0;
    let mut busy = 0.0;
    for (a, b, point) in obs.segments(t) {
        if point.x > 0 {
            busy += b - a;
        }
        if let Some(deadline) = point.next_deadline {
            // t₁(ν_s) = deadline − s runs over [deadline − b, deadline − a]
            service += integrate(g, deadline - b, deadline - a, spec)?;
        }
    }
    Ok(Integrals { service, busy })
}

fn arrival_clock(params: &MartingaleParams, t: f64, busy: f64) -> f64 {
    match params.compensator {
        Compensator::Generator => t,
        Compensator::NonIdling => busy,
    }
}

fn squared(phi: &TestFunction) -> RcllFunction {
    let phi2 = phi.clone();
    let bound = phi.sup_norm_bound().powi(2);
    RcllFunction::new(format!("({})^2", phi.name()), move |x| phi2.eval(x).powi(2), vec![], bound)
}

/// `M_φ(t)` for one trajectory.
pub fn martingale_at(traj: &Trajectory, phi: &TestFunction, params: &MartingaleParams, t: f64) -> Result<f64> {
    let obs = observables(traj);
    martingale_with(traj, &obs, phi, params, t, &QuadratureSpec::default())
}

pub(crate) fn martingale_with(
    traj: &Trajectory,
    obs: &Observables,
    phi: &TestFunction,
    params: &MartingaleParams,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let now = traj.profile_at(t)?.pair(phi);
    let start = traj.profile_at(0.0)?.pair(phi);
    let mut drift = 0.0;
    for c in traj.customers.iter().filter(|c| c.arrival_time <= t) {
        let a = c.arrival_time.max(0.0);
        let b = c.erased_at().min(t);
        if a < b {
            drift += phi.eval(c.deadline - a) - phi.eval(c.deadline - b);
        }
    }
    let ints = service_integrals(obs, &|x| phi.eval(x), t, spec)?;
    let mean_phi = expect(&params.patience, phi, spec)?;
    let clock = arrival_clock(params, t, ints.busy);
    Ok(now - start + drift + params.mu * ints.service - params.lambda * clock * mean_phi)
}

/// `⟨M_φ⟩_t` for one trajectory.
pub fn bracket_at(traj: &Trajectory, phi: &TestFunction, params: &MartingaleParams, t: f64) -> Result<f64> {
    let obs = observables(traj);
    bracket_with(&obs, phi, params, t, &QuadratureSpec::default())
}

pub(crate) fn bracket_with(
    obs: &Observables,
    phi: &TestFunction,
    params: &MartingaleParams,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let ints = service_integrals(obs, &|x| phi.eval(x).powi(2), t, spec)?;
    let mean_sq = expect(&params.patience, &squared(phi), spec)?;
    let clock = arrival_clock(params, t, ints.busy);
    Ok(params.mu * ints.service + params.lambda * clock * mean_sq)
}

/// `M_φ` sampled at each grid time.
pub fn martingale_path(
    traj: &Trajectory,
    phi: &TestFunction,
    params: &MartingaleParams,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let obs = observables(traj);
    let spec = QuadratureSpec::default();
    grid.iter().map(|&t| Ok((t, martingale_with(traj, &obs, phi, params, t, &spec)?))).collect()
}

/// `⟨M_φ⟩` sampled at each grid time.
pub fn bracket_path(
    traj: &Trajectory,
    phi: &TestFunction,
    params: &MartingaleParams,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let obs = observables(traj);
    let spec = QuadratureSpec::default();
    grid.iter().map(|&t| Ok((t, bracket_with(&obs, phi, params, t, &spec)?))).collect()
}

/// `A Π_φ(ν) = −⟨ν,φ′⟩ − μφ(t₁(ν))1{ν(ℝ₊)>0} + λE[φ(D)]`.
pub fn generator_apply(
    nu: &PointMeasure,
    phi: &TestFunction,
    lambda: f64,
    mu: f64,
    patience: &Distribution,
) -> Result<f64> {
    let drift = nu.pair(&|x: f64| phi.deriv(x));
    let service = nu.first_positive_atom().map_or(0.0, |x| phi.eval(x));
    let arrivals = if lambda == 0.0 { 0.0 } else { lambda * expect(patience, phi, &QuadratureSpec::default())? };
    Ok(-drift - mu * service + arrivals)
}
