//! Test functions, patience laws and quadrature.

mod distribution;
mod functions;
mod quadrature;

pub use distribution::{expect, Distribution};
pub use functions::{standard_test_suite, RcllFunction, TestFunction};
pub use quadrature::{integrate, QuadratureSpec};
