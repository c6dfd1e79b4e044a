use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::{integrate, QuadratureSpec};
use crate::error::{invalid, Error, Result};
use crate::RealFn;

/// Law of a patience (initial time credit) or of a pure-delay service
/// duration. Serialized as a record tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Deterministic { d: f64 },
    Exponential { rate: f64 },
    Uniform { a: f64, b: f64 },
    Discrete { points: Vec<f64>, probs: Vec<f64> },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Deterministic { d } if !(*d >= 0.0 && d.is_finite()) => {
                Err(invalid(format!("deterministic value {d} must be finite and >= 0")))
            }
            Distribution::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(invalid(format!("exponential rate {rate} must be positive")))
            }
            Distribution::Uniform { a, b } if !(*a >= 0.0 && a < b && b.is_finite()) => {
                Err(invalid(format!("uniform bounds [{a}, {b}] must satisfy 0 <= a < b")))
            }
            Distribution::Discrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(invalid("discrete law needs equally many points and probs"));
                }
                if points.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(invalid("discrete points must be finite and >= 0"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid("discrete probabilities must be >= 0"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("discrete probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Deterministic { d } => *d,
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Uniform { a, b } => 0.5 * (a + b),
            Distribution::Discrete { points, probs } => points.iter().zip(probs).map(|(x, p)| x * p).sum(),
        }
    }

    /// Draws by inverse CDF from one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Deterministic { d } => *d,
            Distribution::Exponential { rate } => {
                let u: f64 = rng.random();
                -(1.0 - u).ln() / rate
            }
            Distribution::Uniform { a, b } => {
                let u: f64 = rng.random();
                a + (b - a) * u
            }
            Distribution::Discrete { points, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, p) in points.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                *points.last().expect("validated non-empty")
            }
        }
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Distribution::Deterministic { d } => indicator(*d > x),
            Distribution::Exponential { rate } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Distribution::Uniform { a, b } => ((b - x) / (b - a)).clamp(0.0, 1.0),
            Distribution::Discrete { points, probs } => {
                points.iter().zip(probs).filter(|(p, _)| **p > x).map(|(_, q)| q).sum()
            }
        }
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// `E[min(X, t)] = ∫₀ᵗ P(X > s) ds` for `t ≥ 0`.
    pub fn integrated_survival(&self, t: f64) -> f64 {
        match self {
            Distribution::Deterministic { d } => d.min(t),
            Distribution::Exponential { rate } => (1.0 - (-rate * t).exp()) / rate,
            Distribution::Uniform { a, b } => {
                let lo = t.min(*a);
                let hi = t.clamp(*a, *b);
                // ∫_a^hi (b - s)/(b - a) ds
                lo + ((b - a) * (hi - a) - 0.5 * (hi - a).powi(2)) / (b - a)
            }
            Distribution::Discrete { points, probs } => points.iter().zip(probs).map(|(x, p)| p * x.min(t)).sum(),
        }
    }

    /// `E[(X - t)⁺]`.
    pub fn mean_excess(&self, t: f64) -> f64 {
        match self {
            Distribution::Deterministic { d } => (d - t).max(0.0),
            Distribution::Exponential { rate } => {
                if t < 0.0 {
                    1.0 / rate - t
                } else {
                    (-rate * t).exp() / rate
                }
            }
            Distribution::Uniform { a, b } => {
                if t <= *a {
                    0.5 * (a + b) - t
                } else if t >= *b {
                    0.0
                } else {
                    (b - t).powi(2) / (2.0 * (b - a))
                }
            }
            Distribution::Discrete { points, probs } => {
                points.iter().zip(probs).map(|(x, p)| p * (x - t).max(0.0)).sum()
            }
        }
    }

    /// Law of `n·X`.
    pub fn scaled(&self, n: f64) -> Distribution {
        match self {
            Distribution::Deterministic { d } => Distribution::Deterministic { d: d * n },
            Distribution::Exponential { rate } => Distribution::Exponential { rate: rate / n },
            Distribution::Uniform { a, b } => Distribution::Uniform { a: a * n, b: b * n },
            Distribution::Discrete { points, probs } => Distribution::Discrete {
                points: points.iter().map(|x| x * n).collect(),
                probs: probs.clone(),
            },
        }
    }

    /// Points where the law has atoms or its density jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Distribution::Deterministic { d } => vec![*d],
            Distribution::Exponential { .. } => vec![0.0],
            Distribution::Uniform { a, b } => vec![*a, *b],
            Distribution::Discrete { points, .. } => points.clone(),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `E[f(X)]`: exact for atomic laws, breakpoint-aware adaptive quadrature
/// against the density otherwise. The exponential tail is truncated where
/// `sup|f|·e^{-rate·x}` drops below a tenth of the tolerance.
pub fn expect<F: RealFn + ?Sized>(dist: &Distribution, f: &F, spec: &QuadratureSpec) -> Result<f64> {
    dist.validate()?;
    let bound = f.sup_bound();
    if !bound.is_finite() {
        return Err(Error::Unbounded(bound));
    }
    match dist {
        Distribution::Deterministic { d } => Ok(f.eval(*d)),
        Distribution::Discrete { points, probs } => Ok(points.iter().zip(probs).map(|(x, p)| p * f.eval(*x)).sum()),
        Distribution::Uniform { a, b } => {
            let spec = spec.clone().with_breakpoints(f.breakpoints());
            Ok(integrate(&|x| f.eval(x), *a, *b, &spec)? / (b - a))
        }
        Distribution::Exponential { rate } => {
            let upper = if bound > 0.0 {
                ((10.0 * bound / spec.abs_tol).ln() / rate).max(0.0)
            } else {
                0.0
            };
            let spec = spec.clone().with_breakpoints(f.breakpoints());
            integrate(&|x| rate * (-rate * x).exp() * f.eval(x), 0.0, upper, &spec)
        }
    }
}
