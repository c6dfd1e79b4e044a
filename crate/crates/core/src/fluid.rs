//! Fluid limits of the renormalized profile process.
//!
//! The general limit pairs the fluid measure with a bounded rcll `f` through
//! a known frontier `r̄` (the limit of `t₁(ν̄ⁿ_t)`):
//!
//! ```text
//! ⟨ν̄*_t, f⟩ = ⟨ν̄*_0, f(· − t)⟩ − μ∫₀ᵗ f(r̄_s − (t − s)) ds + λ∫₀ᵗ E[f(D̄ − (t − s))] ds
//! ```
//!
//! For deterministic deadlines the frontier, the first-loss epoch and the
//! queue/loss curves have closed forms ([`DetEdf`]). The pure-delay
//! (infinite-server) limits are in the `mginf_*` functions.

use std::cell::RefCell;
use std::io::Write;
use std::sync::Arc;

use crate::calculus::{expect, integrate, Distribution, QuadratureSpec};
use crate::error::{invalid, Error, Result};
use crate::measure::PointMeasure;
use crate::RealFn;

/// Deterministic-deadline parameters, validated so that `1/d < μ < λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetEdf {
    lambda: f64,
    mu: f64,
    d: f64,
}

impl DetEdf {
    pub fn new(lambda: f64, mu: f64, d: f64) -> Result<Self> {
        let finite = lambda.is_finite() && mu.is_finite() && d.is_finite();
        if !(finite && d > 0.0 && 1.0 / d < mu && mu < lambda) {
            return Err(invalid(format!(
                "deterministic-deadline fluid limit needs 1/d < mu < lambda (got lambda={lambda}, mu={mu}, d={d})"
            )));
        }
        Ok(Self { lambda, mu, d })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Traffic intensity `λ/μ`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Fluid first-loss epoch `(ρd − 1/μ)/(ρ − 1)`.
    pub fn omega_star(&self) -> f64 {
        let rho = self.rho();
        (rho * self.d - 1.0 / self.mu) / (rho - 1.0)
    }

    /// Frontier `r̄_t`: the fluid credit of the next customer served.
    pub fn r_bar(&self, t: f64) -> f64 {
        let rho = self.rho();
        let raw = if t <= 1.0 / self.mu {
            self.d - t
        } else {
            self.d - ((rho - 1.0) / rho * t + 1.0 / self.lambda)
        };
        raw.max(0.0)
    }

    /// Fluid queue length `Q̄*(t)`.
    pub fn q_fluid(&self, t: f64) -> f64 {
        if t <= self.omega_star() {
            1.0 + (self.lambda - self.mu) * t
        } else {
            self.lambda * self.d
        }
    }

    /// Fluid cumulative losses `P̄*(t)`.
    pub fn p_fluid(&self, t: f64) -> f64 {
        if t >= self.omega_star() {
            1.0 + self.lambda * (t - self.d) - self.mu * t
        } else {
            0.0
        }
    }

    /// The general fluid model these closed forms solve: `ν̄*_0 = δ_d`,
    /// `D̄ = d`, frontier `r̄`.
    pub fn model(&self) -> FluidModel {
        FluidModel {
            lambda: self.lambda,
            mu: self.mu,
            initial: PointMeasure::dirac(self.d),
            patience_limit: Distribution::Deterministic { d: self.d },
            frontier: Arc::new(*self),
        }
    }
}

pub fn r_bar_det(t: f64, lambda: f64, mu: f64, d: f64) -> Result<f64> {
    Ok(DetEdf::new(lambda, mu, d)?.r_bar(t))
}

pub fn omega_star(lambda: f64, mu: f64, d: f64) -> Result<f64> {
    Ok(DetEdf::new(lambda, mu, d)?.omega_star())
}

pub fn q_fluid_det(t: f64, lambda: f64, mu: f64, d: f64) -> Result<f64> {
    Ok(DetEdf::new(lambda, mu, d)?.q_fluid(t))
}

pub fn p_fluid_det(t: f64, lambda: f64, mu: f64, d: f64) -> Result<f64> {
    Ok(DetEdf::new(lambda, mu, d)?.p_fluid(t))
}

/// A fluid frontier `s ↦ r̄_s`, continuous and piecewise smooth.
pub trait Frontier: Send + Sync {
    fn at(&self, s: f64) -> f64;

    /// Points where the frontier is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Frontier for DetEdf {
    fn at(&self, s: f64) -> f64 {
        self.r_bar(s)
    }

    fn kinks(&self) -> Vec<f64> {
        vec![1.0 / self.mu, self.omega_star()]
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> Frontier for F {
    fn at(&self, s: f64) -> f64 {
        self(s)
    }
}

/// Parameters of the general fluid limit.
#[derive(Clone)]
pub struct FluidModel {
    pub lambda: f64,
    pub mu: f64,
    pub initial: PointMeasure,
    pub patience_limit: Distribution,
    pub frontier: Arc<dyn Frontier>,
}

impl std::fmt::Debug for FluidModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FluidModel")
            .field("lambda", &self.lambda)
            .field("mu", &self.mu)
            .field("initial", &self.initial)
            .field("patience_limit", &self.patience_limit)
            .finish_non_exhaustive()
    }
}

/// `x ↦ f(x − shift)` with shifted breakpoints.
struct Shifted<'a, F: ?Sized> {
    f: &'a F,
    shift: f64,
}

impl<F: RealFn + ?Sized> RealFn for Shifted<'_, F> {
    fn eval(&self, x: f64) -> f64 {
        self.f.eval(x - self.shift)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.f.breakpoints().into_iter().map(|b| b + self.shift).collect()
    }

    fn sup_bound(&self) -> f64 {
        self.f.sup_bound()
    }
}

/// Roots in `[lo, hi]` of `s ↦ r̄_s + s − level`, scanned piece by piece.
fn frontier_crossings(frontier: &dyn Frontier, level: f64, lo: f64, hi: f64) -> Vec<f64> {
    const SCAN: usize = 64;
    let g = |s: f64| frontier.at(s) + s - level;
    let mut knots: Vec<f64> = frontier.kinks().into_iter().filter(|&k| k > lo && k < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut x0 = a;
        let mut g0 = g(a);
        for k in 1..=SCAN {
            let x1 = if k == SCAN { b } else { a + (b - a) * k as f64 / SCAN as f64 };
            let g1 = g(x1);
            if g0 == 0.0 {
                roots.push(x0);
            } else if g0 * g1 < 0.0 {
                let (mut l, mut r) = (x0, x1);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if m <= l || m >= r {
                        break;
                    }
                    if g(m) * g0 > 0.0 {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                roots.push(0.5 * (l + r));
            }
            x0 = x1;
            g0 = g1;
        }
        if g0 == 0.0 {
            roots.push(b);
        }
    }
    roots
}

/// `⟨ν̄*_t, f⟩` for the general fluid limit.
///
/// Quadrature splits at the frontier kinks, at the times where
/// `r̄_s − (t − s)` hits a breakpoint of `f`, and at the times where a
/// breakpoint of `f` shifted by `t − s` meets an atom or density jump of the
/// patience limit.
pub fn nu_fluid_general<F: RealFn + ?Sized>(t: f64, f: &F, model: &FluidModel, spec: &QuadratureSpec) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("fluid time {t} must be finite and >= 0")));
    }
    let initial = model.initial.pair(&|x: f64| f.eval(x - t));
    if t == 0.0 {
        return Ok(initial);
    }
    let f_breaks = f.breakpoints();

    let service = if model.mu == 0.0 {
        0.0
    } else {
        let mut cuts: Vec<f64> = model.frontier.kinks();
        for &b in &f_breaks {
            cuts.extend(frontier_crossings(model.frontier.as_ref(), t + b, 0.0, t));
        }
        let q = spec.clone().with_breakpoints(cuts);
        let frontier = &model.frontier;
        integrate(&|s: f64| f.eval(frontier.at(s) - (t - s)), 0.0, t, &q)?
    };

    let arrivals = if model.lambda == 0.0 {
        0.0
    } else {
        let mut cuts = Vec::new();
        for e in model.patience_limit.breakpoints() {
            cuts.extend(f_breaks.iter().map(|b| b + t - e));
        }
        let q = spec.clone().with_breakpoints(cuts);
        let patience = &model.patience_limit;
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let value = integrate(
            &|s: f64| match expect(patience, &Shifted { f, shift: t - s }, spec) {
                Ok(v) => v,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            &q,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        value?
    };

    Ok(initial - model.mu * service + model.lambda * arrivals)
}

/// Pure-delay congestion `P(α > t) + λ∫₀ᵗP(α > s)ds`.
pub fn mginf_congestion(t: f64, lambda: f64, alpha: &Distribution) -> f64 {
    alpha.survival(t) + lambda * alpha.integrated_survival(t)
}

/// Pure-delay served count `P(α ≤ t) + λ∫₀ᵗP(α ≤ s)ds`.
pub fn mginf_served(t: f64, lambda: f64, alpha: &Distribution) -> f64 {
    alpha.cdf(t) + lambda * (t - alpha.integrated_survival(t))
}

/// Pure-delay workload `E[(α − t)⁺] + λ∫₀ᵗE[(α − s)⁺]ds`.
pub fn mginf_workload(t: f64, lambda: f64, alpha: &Distribution) -> Result<f64> {
    let integral = match alpha {
        Distribution::Deterministic { d } => {
            let m = t.min(*d);
            d * m - 0.5 * m * m
        }
        Distribution::Exponential { rate } => (1.0 - (-rate * t).exp()) / (rate * rate),
        Distribution::Discrete { points, probs } => points
            .iter()
            .zip(probs)
            .map(|(d, p)| {
                let m = t.min(*d);
                p * (d * m - 0.5 * m * m)
            })
            .sum(),
        Distribution::Uniform { .. } => {
            let spec = QuadratureSpec::default().with_breakpoints(alpha.breakpoints());
            integrate(&|s| alpha.mean_excess(s), 0.0, t, &spec)?
        }
    };
    Ok(alpha.mean_excess(t) + lambda * integral)
}

/// `⟨ν̄_t, f⟩ = E[f(α − t)] + λ∫₀ᵗE[f(α − s)]ds` for the pure-delay limit.
pub fn mginf_pairing<F: RealFn + ?Sized>(t: f64, f: &F, lambda: f64, alpha: &Distribution, spec: &QuadratureSpec) -> Result<f64> {
    let initial = expect(alpha, &Shifted { f, shift: t }, spec)?;
    let mut cuts = Vec::new();
    for e in alpha.breakpoints() {
        cuts.extend(f.breakpoints().iter().map(|b| e - b));
    }
    let q = spec.clone().with_breakpoints(cuts);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integral = integrate(
        &|s: f64| {
            expect(alpha, &Shifted { f, shift: s }, spec).unwrap_or_else(|e| {
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
    Ok(initial + lambda * integral?)
}

fn grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt = {dt} must be positive")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(invalid(format!("t_max = {t_max} must be finite and >= 0")));
    }
    let steps = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// CSV `t,Q_fluid,P_fluid,r_bar` on `0, dt, …, t_max`.
pub fn write_det_edf_csv<W: Write>(model: &DetEdf, t_max: f64, dt: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "Q_fluid", "P_fluid", "r_bar"])?;
    for t in grid(t_max, dt)? {
        w.write_record([t, model.q_fluid(t), model.p_fluid(t), model.r_bar(t)].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV `t,congestion,workload,served` on `0, dt, …, t_max`.
pub fn write_mginf_csv<W: Write>(lambda: f64, alpha: &Distribution, t_max: f64, dt: f64, out: W) -> Result<()> {
    alpha.validate()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "congestion", "workload", "served"])?;
    for t in grid(t_max, dt)? {
        let row = [t, mginf_congestion(t, lambda, alpha), mginf_workload(t, lambda, alpha)?, mginf_served(t, lambda, alpha)];
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{RcllFunction, TestFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> DetEdf {
        DetEdf::new(2.0, 1.0, 2.0).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng) -> DetEdf {
        loop {
            let mu = rng.random_range(0.2..3.0);
            let lambda = mu * rng.random_range(1.05..4.0);
            let d = (1.0 / mu) * rng.random_range(1.05..5.0);
            if let Ok(p) = DetEdf::new(lambda, mu, d) {
                return p;
            }
        }
    }

    #[test]
    fn closed_form_fixtures() {
        let m = fixture();
        assert_eq!(m.omega_star(), 3.0);
        assert_eq!(m.r_bar(0.0), 2.0);
        assert_eq!(m.r_bar(0.5), 1.5);
        assert_eq!(m.r_bar(3.0), 0.0);
        assert_eq!(m.r_bar(7.0), 0.0);
        assert_eq!(m.q_fluid(2.0), 3.0);
        assert_eq!(m.q_fluid(10.0), 4.0);
        assert_eq!(m.p_fluid(3.0), 0.0);
        assert_eq!(m.p_fluid(4.0), 1.0);
        // both branches of Q̄* at the switch point
        assert_eq!(1.0 + (2.0 - 1.0) * 3.0, 4.0);
        assert_eq!(m.q_fluid(3.0), 4.0);
    }

    #[test]
    fn parameter_constraints() {
        assert!(DetEdf::new(1.0, 2.0, 2.0).is_err()); // mu > lambda
        assert!(DetEdf::new(2.0, 1.0, 0.5).is_err()); // d < 1/mu
        assert!(DetEdf::new(2.0, 1.0, -1.0).is_err());
        assert!(r_bar_det(0.5, 2.0, 1.0, 2.0).is_ok());
        assert!(omega_star(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn omega_star_tends_to_mean_service_time() {
        let mu = 1.5;
        let w = DetEdf::new(3.0, mu, 1.0 / mu * (1.0 + 1e-9)).unwrap().omega_star();
        assert!((w - 1.0 / mu).abs() < 1e-8);
    }

    #[test]
    fn frontier_continuity_and_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_params(&mut rng);
            let rho = m.rho();
            let at = 1.0 / m.mu;
            let left = m.d - at;
            let right = m.d - ((rho - 1.0) / rho * at + 1.0 / m.lambda);
            assert!((left - right).abs() <= 1e-12);
            let w = m.omega_star();
            let raw = m.d - ((rho - 1.0) / rho * w + 1.0 / m.lambda);
            assert!(raw.abs() <= 1e-12, "{m:?}: {raw}");
            assert!(m.r_bar(w * (1.0 - 1e-6)) > 0.0);
            assert_eq!(m.r_bar(w * (1.0 + 1e-6)), 0.0);
            // Q̄* continuous, P̄* vanishes at ω̄₀*
            let q_left = 1.0 + (m.lambda - m.mu) * w;
            assert!((q_left - m.lambda * m.d).abs() <= 1e-12 * (1.0 + q_left));
            let p = 1.0 + m.lambda * (w - m.d) - m.mu * w;
            assert!(p.abs() <= 1e-12 * (1.0 + m.lambda * w));
            assert!(w > m.d && m.d > 1.0 / m.mu);
        }
    }

    #[test]
    fn general_formula_reproduces_closed_forms() {
        let m = fixture();
        let model = m.model();
        let spec = QuadratureSpec::default();
        let pos = RcllFunction::indicator_positive();
        for (t, q) in [(0.5, 1.5), (2.0, 3.0), (4.0, 4.0)] {
            let v = nu_fluid_general(t, &pos, &model, &spec).unwrap();
            assert!((v - q).abs() <= 1e-8, "t={t}: {v}");
            assert!((v - m.q_fluid(t)).abs() <= 1e-8);
        }
        let one = RcllFunction::constant(1.0);
        for t in [0.0, 1.0, 3.0, 5.5] {
            let v = nu_fluid_general(t, &one, &model, &spec).unwrap();
            assert!((v - (1.0 + t)).abs() <= 1e-8);
        }
        let phi = TestFunction::gaussian(0.3, 0.8);
        assert_eq!(nu_fluid_general(0.0, &phi, &model, &spec).unwrap(), phi.eval(2.0));
    }

    #[test]
    fn general_formula_with_non_atomic_patience() {
        // zero service: the measure is the initial atom plus the arrivals' laws
        let model = FluidModel {
            lambda: 1.5,
            mu: 0.0,
            initial: PointMeasure::dirac(1.0),
            patience_limit: Distribution::Uniform { a: 0.5, b: 2.0 },
            frontier: Arc::new(|_s: f64| 0.0),
        };
        let alpha = Distribution::Uniform { a: 0.5, b: 2.0 };
        let pos = RcllFunction::indicator_positive();
        let t = 1.2;
        let v = nu_fluid_general(t, &pos, &model, &QuadratureSpec::default()).unwrap();
        let expected = 0.0 + 1.5 * alpha.integrated_survival(t);
        assert!((v - expected).abs() <= 1e-8, "{v} vs {expected}");
    }

    #[test]
    fn exponential_service_closed_form() {
        let alpha = Distribution::Exponential { rate: 1.0 };
        let t = 2f64.ln();
        assert!((mginf_congestion(t, 0.5, &alpha) - 0.75).abs() <= 1e-15);
        for t in [0.0f64, 0.5, 1.0, 3.0] {
            let closed = (-t).exp() + 0.5 * (1.0 - (-t).exp());
            assert!((mginf_congestion(t, 0.5, &alpha) - closed).abs() <= 1e-14);
        }
        assert!((mginf_congestion(60.0, 0.5, &alpha) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn mginf_examples() {
        let det = Distribution::Deterministic { d: 1.0 };
        assert_eq!(mginf_workload(2.0, 1.0, &det).unwrap(), 0.5);
        let alpha = Distribution::Exponential { rate: 2.0 };
        assert_eq!(mginf_congestion(0.0, 0.7, &alpha), 1.0);
        assert_eq!(mginf_served(0.0, 0.7, &alpha), 0.0);
    }

    #[test]
    fn mginf_congestion_plus_served_is_total_input() {
        for alpha in [
            Distribution::Exponential { rate: 0.6 },
            Distribution::Deterministic { d: 1.7 },
            Distribution::Uniform { a: 0.2, b: 1.4 },
            Distribution::Discrete { points: vec![0.5, 3.0], probs: vec![0.4, 0.6] },
        ] {
            for k in 0..40 {
                let t = k as f64 * 0.15;
                let total = mginf_congestion(t, 1.3, &alpha) + mginf_served(t, 1.3, &alpha);
                assert!((total - (1.0 + 1.3 * t)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn mginf_closed_forms_match_generic_pairing() {
        let spec = QuadratureSpec::default();
        for alpha in [
            Distribution::Exponential { rate: 1.0 },
            Distribution::Deterministic { d: 1.0 },
            Distribution::Uniform { a: 0.5, b: 1.5 },
        ] {
            for t in [0.0, 0.4, 1.0, 2.5] {
                let pos = RcllFunction::indicator_positive();
                let v = mginf_pairing(t, &pos, 0.5, &alpha, &spec).unwrap();
                assert!((v - mginf_congestion(t, 0.5, &alpha)).abs() <= 1e-8, "{alpha:?} t={t}");
                let np = RcllFunction::indicator_nonpositive();
                let v = mginf_pairing(t, &np, 0.5, &alpha, &spec).unwrap();
                assert!((v - mginf_served(t, 0.5, &alpha)).abs() <= 1e-8, "{alpha:?} t={t}");
                let work = RcllFunction::new("x+", |x: f64| x.clamp(0.0, 50.0), vec![0.0], 50.0);
                let v = mginf_pairing(t, &work, 0.5, &alpha, &QuadratureSpec::with_tol(1e-11)).unwrap();
                assert!((v - mginf_workload(t, 0.5, &alpha).unwrap()).abs() <= 1e-8, "{alpha:?} t={t}");
            }
        }
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_det_edf_csv(&fixture(), 4.0, 1.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,Q_fluid,P_fluid,r_bar");
        assert_eq!(lines[4], "3,4,0,0");
        assert_eq!(lines[5], "4,4,1,0");
        assert!(write_det_edf_csv(&fixture(), 4.0, 0.0, Vec::new()).is_err());
    }
}
