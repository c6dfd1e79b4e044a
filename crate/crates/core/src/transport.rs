//! The integrated transport equation `E(K, g, b)`:
//!
//! ```text
//! ⟨η_t, φ⟩ = ⟨K, φ⟩ − b∫₀ᵗ⟨η_s, φ′⟩ds + ⟨g_t, φ⟩
//! ```
//!
//! and its unique solution
//!
//! ```text
//! ⟨L_t, φ⟩ = ⟨K, φ(· − bt)⟩ + ⟨g_t, φ⟩ − b∫₀ᵗ⟨g_s, φ′(· − b(t − s))⟩ds
//! ```
//!
//! restricted to finite point-mass `K`, sources built from point masses or
//! from the fluid-limit source, and `C¹_b` probes.

use std::cell::RefCell;
use std::io::Write;
use std::sync::Arc;

use crate::calculus::{expect, integrate, standard_test_suite, Distribution, QuadratureSpec, TestFunction};
use crate::error::{invalid, Error, Result};
use crate::fluid::{DetEdf, Frontier};
use crate::measure::PointMeasure;
use crate::RealFn;

/// Time profile of a point-mass injection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// Weight `w·(t − start)⁺`.
    Ramp,
    /// Weight `w·1{t ≥ start}`; needs `start > 0`.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub location: f64,
    pub weight: f64,
    pub start: f64,
    pub growth: Growth,
}

impl Injection {
    fn coefficient(&self, t: f64) -> f64 {
        match self.growth {
            Growth::Ramp => (t - self.start).max(0.0),
            Growth::Step => {
                if t >= self.start {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// The source `g` of the transport equation, with `g₀ = 0`.
#[derive(Clone)]
pub enum SourceTerm {
    Zero,
    /// `g_t = Σ c_k(t) δ_{x_k}`.
    Injections(Vec<Injection>),
    /// `g_t = −μ∫₀ᵗδ_{r_s}ds + λt·law(D̄)`.
    Fluid {
        lambda: f64,
        mu: f64,
        frontier: Arc<dyn Frontier>,
        patience: Distribution,
    },
}

impl std::fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceTerm::Zero => write!(f, "Zero"),
            SourceTerm::Injections(v) => f.debug_tuple("Injections").field(v).finish(),
            SourceTerm::Fluid { lambda, mu, patience, .. } => f
                .debug_struct("Fluid")
                .field("lambda", lambda)
                .field("mu", mu)
                .field("patience", patience)
                .finish_non_exhaustive(),
        }
    }
}

impl SourceTerm {
    /// The fluid-limit source for deterministic deadlines.
    pub fn det_edf(model: DetEdf) -> Self {
        SourceTerm::Fluid {
            lambda: model.lambda(),
            mu: model.mu(),
            frontier: Arc::new(model),
            patience: Distribution::Deterministic { d: model.d() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceTerm::Zero => Ok(()),
            SourceTerm::Injections(v) => {
                for inj in v {
                    if !(inj.location.is_finite() && inj.weight.is_finite() && inj.start >= 0.0) {
                        return Err(invalid(format!("bad injection {inj:?}")));
                    }
                    if inj.growth == Growth::Step && inj.start <= 0.0 {
                        return Err(invalid("step injections must start after 0 so that g_0 = 0"));
                    }
                }
                Ok(())
            }
            SourceTerm::Fluid { patience, .. } => patience.validate(),
        }
    }

    /// `⟨g_t, ψ⟩` where `ψ` is bounded by `bound`.
    pub fn pair(&self, t: f64, psi: &dyn Fn(f64) -> f64, bound: f64, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            SourceTerm::Zero => Ok(0.0),
            SourceTerm::Injections(v) => Ok(v.iter().map(|i| i.weight * i.coefficient(t) * psi(i.location)).sum()),
            SourceTerm::Fluid { lambda, mu, frontier, patience } => {
                if t <= 0.0 {
                    return Ok(0.0);
                }
                let q = spec.clone().with_breakpoints(frontier.kinks());
                let served = integrate(&|u| psi(frontier.at(u)), 0.0, t, &q)?;
                let arrivals = expect(patience, &Bounded { f: psi, bound }, spec)?;
                Ok(-mu * served + lambda * t * arrivals)
            }
        }
    }

    /// Times where `t ↦ ⟨g_t, ψ⟩` is not smooth.
    pub fn time_breakpoints(&self) -> Vec<f64> {
        match self {
            SourceTerm::Zero => Vec::new(),
            SourceTerm::Injections(v) => v.iter().map(|i| i.start).collect(),
            SourceTerm::Fluid { frontier, .. } => frontier.kinks(),
        }
    }
}

/// Borrowed function with a known sup bound, for `expect`.
struct Bounded<'a> {
    f: &'a dyn Fn(f64) -> f64,
    bound: f64,
}

impl RealFn for Bounded<'_> {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn sup_bound(&self) -> f64 {
        self.bound
    }
}

/// `E(K, g, b)`.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub initial: PointMeasure,
    pub source: SourceTerm,
    pub drift: f64,
}

/// `⟨L_t, φ⟩` for the unique solution.
pub fn solve_pairing(prob: &TransportProblem, phi: &TestFunction, t: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time {t} must be finite and >= 0")));
    }
    prob.source.validate()?;
    let b = prob.drift;
    let transported = prob.initial.pair(&|x: f64| phi.eval(x - b * t));
    let bound = phi.sup_norm_bound();
    let source_now = prob.source.pair(t, &|x| phi.eval(x), bound, spec)?;
    if b == 0.0 || t == 0.0 || matches!(prob.source, SourceTerm::Zero) {
        return Ok(transported + source_now);
    }
    if let SourceTerm::Fluid { lambda, mu, frontier, patience } = &prob.source {
        let memory = fluid_memory(t, phi, b, *lambda, *mu, frontier.as_ref(), patience, spec)?;
        return Ok(transported + source_now - memory);
    }
    let inner = tighter(spec);
    let q = spec.clone().with_breakpoints(prob.source.time_breakpoints());
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let memory = integrate(
        &|s: f64| {
            let shift = b * (t - s);
            prob.source
                .pair(s, &|x| phi.deriv(x - shift), bound, &inner)
                .unwrap_or_else(|e| {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                })
        },
        0.0,
        t,
        &q,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(transported + source_now - b * memory?)
}

/// `b∫₀ᵗ⟨g_s, φ′(· − b(t − s))⟩ds` for the fluid source, after exchanging the
/// order of integration:
///
/// ```text
/// −μ∫₀ᵗ[φ(r_u) − φ(r_u − b(t − u))]du + λ(t·E[φ(D̄)] − ∫₀ᵗE[φ(D̄ − b(t − s))]ds)
/// ```
#[allow(clippy::too_many_arguments)]
fn fluid_memory(
    t: f64,
    phi: &TestFunction,
    b: f64,
    lambda: f64,
    mu: f64,
    frontier: &dyn Frontier,
    patience: &Distribution,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let q = spec.clone().with_breakpoints(frontier.kinks());
    let served = integrate(
        &|u: f64| {
            let r = frontier.at(u);
            phi.eval(r) - phi.eval(r - b * (t - u))
        },
        0.0,
        t,
        &q,
    )?;
    let bound = phi.sup_norm_bound();
    let now = expect(patience, &Bounded { f: &|x| phi.eval(x), bound }, spec)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let past = integrate(
        &|s: f64| {
            let shift = b * (t - s);
            expect(patience, &Bounded { f: &|x| phi.eval(x - shift), bound }, spec).unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            })
        },
        0.0,
        t,
        &q,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(-mu * served + lambda * (t * now - past?))
}

fn tighter(spec: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec { abs_tol: spec.abs_tol * 1e-3, ..spec.clone() }
}

/// A candidate solution: `(t, φ) ↦ ⟨η_t, φ⟩`.
pub type Candidate<'a> = dyn Fn(f64, &TestFunction) -> Result<f64> + 'a;

/// `|⟨η_t,φ⟩ − ⟨K,φ⟩ + b∫₀ᵗ⟨η_s,φ′⟩ds − ⟨g_t,φ⟩|` for a candidate `η`.
pub fn residual(
    candidate: &Candidate<'_>,
    prob: &TransportProblem,
    phi: &TestFunction,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let dphi = phi
        .derivative()
        .ok_or_else(|| invalid(format!("residual needs the second derivative of {}", phi.name())))?;
    let lhs = candidate(t, phi)?;
    let initial = prob.initial.pair(phi);
    let source = prob.source.pair(t, &|x| phi.eval(x), phi.sup_norm_bound(), spec)?;
    let mut integral = 0.0;
    if prob.drift != 0.0 && t > 0.0 {
        let q = spec.clone().with_breakpoints(prob.source.time_breakpoints());
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let value = integrate(
            &|s: f64| {
                candidate(s, &dphi).unwrap_or_else(|e| {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                })
            },
            0.0,
            t,
            &q,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        integral = value?;
    }
    Ok((lhs - initial + prob.drift * integral - source).abs())
}

/// Characteristic-line solution `u(x,t) = h(x − tb) + ∫₀ᵗ f(x + (s − t)b, s) ds`
/// of `∂_t u + b ∂_x u = f`.
pub fn classical_crosscheck(
    h: &dyn Fn(f64) -> f64,
    f: &dyn Fn(f64, f64) -> f64,
    b: f64,
    x: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let along = integrate(&|s: f64| f(x + (s - t) * b, s), 0.0, t, spec)?;
    Ok(h(x - t * b) + along)
}

/// A named transport problem for the `transport-check` registry.
#[derive(Debug, Clone)]
pub struct TransportCase {
    pub name: &'static str,
    pub problem: TransportProblem,
}

pub fn case_registry() -> Vec<TransportCase> {
    let fluid = DetEdf::new(2.0, 1.0, 2.0).expect("valid fixture");
    vec![
        TransportCase {
            name: "pure-translation",
            problem: TransportProblem {
                initial: PointMeasure::dirac(2.0),
                source: SourceTerm::Zero,
                drift: 1.0,
            },
        },
        TransportCase {
            name: "point-mass-sources",
            problem: TransportProblem {
                initial: PointMeasure::new([(1.0, 1.0), (-1.0, 0.5)]).expect("valid atoms"),
                source: SourceTerm::Injections(vec![
                    Injection { location: 1.5, weight: 1.0, start: 0.0, growth: Growth::Ramp },
                    Injection { location: 0.5, weight: -0.75, start: 1.0, growth: Growth::Step },
                    Injection { location: 2.5, weight: 0.5, start: 0.4, growth: Growth::Ramp },
                ]),
                drift: 1.0,
            },
        },
        TransportCase {
            name: "fluid-edf-source",
            problem: TransportProblem {
                initial: PointMeasure::dirac(fluid.d()),
                source: SourceTerm::det_edf(fluid),
                drift: 1.0,
            },
        },
        TransportCase {
            name: "zero-drift",
            problem: TransportProblem {
                initial: PointMeasure::dirac(0.5),
                source: SourceTerm::Injections(vec![Injection {
                    location: -1.0,
                    weight: 2.0,
                    start: 0.5,
                    growth: Growth::Ramp,
                }]),
                drift: 0.0,
            },
        },
    ]
}

pub fn case_names() -> Vec<&'static str> {
    case_registry().iter().map(|c| c.name).collect()
}

/// One row of the residual report.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub case: String,
    pub phi: String,
    pub t: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportReport {
    pub rows: Vec<ResidualRow>,
    /// Largest disagreement between two quadrature meshes, and its allowance.
    pub mesh_gap: f64,
    pub mesh_tol: f64,
}

impl TransportReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.mesh_gap <= self.mesh_tol
    }

    /// CSV `case,phi,t,residual,tol,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["case", "phi", "t", "residual", "tol", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.case.clone(),
                r.phi.clone(),
                r.t.to_string(),
                r.residual.to_string(),
                r.tol.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Residual of the solution formula for a case over the probe suite and the
/// time grid `0, 0.5, …, 3`, plus a two-mesh comparison of the solution.
pub fn check_case(case: &TransportCase, tol: f64) -> Result<TransportReport> {
    let spec = QuadratureSpec::default();
    let fine = QuadratureSpec::with_tol(1e-11);
    let prob = &case.problem;
    let solution = |s: f64, phi: &TestFunction| solve_pairing(prob, phi, s, &spec);
    let mut rows = Vec::new();
    let mut mesh_gap: f64 = 0.0;
    for phi in standard_test_suite() {
        for k in 0..=6 {
            let t = 0.5 * k as f64;
            let r = residual(&solution, prob, &phi, t, &spec)?;
            rows.push(ResidualRow {
                case: case.name.to_string(),
                phi: phi.name().to_string(),
                t,
                residual: r,
                tol,
                pass: r <= tol,
            });
            let coarse = solve_pairing(prob, &phi, t, &spec)?;
            let refined = solve_pairing(prob, &phi, t, &fine)?;
            mesh_gap = mesh_gap.max((coarse - refined).abs());
        }
    }
    Ok(TransportReport { rows, mesh_gap, mesh_tol: spec.abs_tol + fine.abs_tol })
}
