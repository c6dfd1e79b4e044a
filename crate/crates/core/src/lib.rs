//! Simulation and fluid-limit analysis of single-server queues with impatient
//! customers served Earliest-Deadline-First, through their measure-valued
//! profile of residual time credits.
//!
//! * [`measure`]: weighted point measures and the credit-profile queries.
//! * [`calculus`]: test functions, patience laws, adaptive quadrature.
//! * [`sim`]: exact event-driven simulation and its observables.
//! * [`fluid`]: closed-form and quadrature fluid limits.
//! * [`transport`]: the integrated transport equation behind the fluid limit.
//! * [`harness`]: replicated convergence experiments.
//! * [`cli`]: the `edffluid` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod cli;
pub mod config;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod measure;
pub mod sim;
pub mod transport;

pub use calculus::{Distribution, QuadratureSpec, RcllFunction, TestFunction};
pub use error::{Error, Result};
pub use measure::PointMeasure;

/// A real function that can be paired with a measure or integrated.
pub trait RealFn {
    fn eval(&self, x: f64) -> f64;

    /// Discontinuity locations, for quadrature splitting.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Upper bound on `|f|` (on `|f| + |f′|` for test functions).
    fn sup_bound(&self) -> f64 {
        f64::INFINITY
    }
}

impl<F: Fn(f64) -> f64> RealFn for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}
