use std::fmt;
use std::sync::Arc;

use crate::RealFn;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A bounded C¹ function with its exact derivative.
///
/// `sup_norm_bound` bounds `|φ(x)| + |φ′(x)|` over the whole line. When the
/// second derivative is known, [`TestFunction::derivative`] yields `φ′` as a
/// test function in its own right (needed to feed `φ′` back into pairings
/// that differentiate their argument).
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    eval: Scalar,
    deriv: Scalar,
    second: Option<Scalar>,
    sup_norm_bound: f64,
    deriv_bound: Option<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sup_norm_bound: f64,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            second: None,
            sup_norm_bound,
            deriv_bound: None,
        }
    }

    /// Attaches `φ″` together with a bound on `|φ′| + |φ″|`.
    pub fn with_second_derivative(
        mut self,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bound: f64,
    ) -> Self {
        self.second = Some(Arc::new(second));
        self.deriv_bound = Some(bound);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.deriv)(x)
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    /// `φ′` as a test function, if `φ″` is known.
    pub fn derivative(&self) -> Option<TestFunction> {
        let second = self.second.clone()?;
        Some(TestFunction {
            name: format!("d/dx {}", self.name),
            eval: self.deriv.clone(),
            deriv: second,
            second: None,
            sup_norm_bound: self.deriv_bound.unwrap_or(f64::INFINITY),
            deriv_bound: None,
        })
    }

    /// `x ↦ φ(x − y)`.
    pub fn shifted(&self, y: f64) -> TestFunction {
        let eval = self.eval.clone();
        let deriv = self.deriv.clone();
        let mut out = TestFunction {
            name: format!("{} shifted by {y}", self.name),
            eval: Arc::new(move |x| eval(x - y)),
            deriv: Arc::new(move |x| deriv(x - y)),
            second: None,
            sup_norm_bound: self.sup_norm_bound,
            deriv_bound: self.deriv_bound,
        };
        if let Some(second) = self.second.clone() {
            out.second = Some(Arc::new(move |x| second(x - y)));
        }
        out
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c, |_| 0.0, c.abs())
            .with_second_derivative(|_| 0.0, 0.0)
    }

    /// Equals `x` on `[-cap, cap]` and bends smoothly (`tanh`) towards
    /// `±(cap + 1)` outside. C² at the junctions.
    pub fn capped_identity(cap: f64) -> Self {
        let eval = move |x: f64| {
            if x > cap {
                cap + (x - cap).tanh()
            } else if x < -cap {
                -cap + (x + cap).tanh()
            } else {
                x
            }
        };
        let deriv = move |x: f64| {
            let u = if x > cap {
                x - cap
            } else if x < -cap {
                x + cap
            } else {
                return 1.0;
            };
            1.0 / u.cosh().powi(2)
        };
        let second = move |x: f64| {
            let u = if x > cap {
                x - cap
            } else if x < -cap {
                x + cap
            } else {
                return 0.0;
            };
            -2.0 * u.tanh() / u.cosh().powi(2)
        };
        // tanh u + sech² u ≤ 5/4
        Self::new(format!("capped_identity({cap})"), eval, deriv, cap + 1.25)
            .with_second_derivative(second, 1.0 + 0.8)
    }

    /// `exp(-(x - center)² / (2 width²))`.
    pub fn gaussian(center: f64, width: f64) -> Self {
        let w2 = width * width;
        let g = move |x: f64| (-(x - center).powi(2) / (2.0 * w2)).exp();
        let deriv = move |x: f64| -(x - center) / w2 * g(x);
        let second = move |x: f64| ((x - center).powi(2) / (w2 * w2) - 1.0 / w2) * g(x);
        Self::new(format!("gaussian({center},{width})"), g, deriv, 1.0 + 1.0 / width)
            .with_second_derivative(second, 1.0 / width + 1.0 / w2)
    }

    /// Logistic sigmoid `1 / (1 + exp(-(x - center)/scale))`, a smooth
    /// surrogate for `1{x > center}`.
    pub fn sigmoid(center: f64, scale: f64) -> Self {
        let s = move |x: f64| 1.0 / (1.0 + (-(x - center) / scale).exp());
        let deriv = move |x: f64| {
            let v = s(x);
            v * (1.0 - v) / scale
        };
        let second = move |x: f64| {
            let v = s(x);
            v * (1.0 - v) * (1.0 - 2.0 * v) / (scale * scale)
        };
        Self::new(format!("sigmoid({center},{scale})"), s, deriv, 1.0 + 0.25 / scale)
            .with_second_derivative(second, 0.25 / scale + 0.1 / (scale * scale))
    }
}

impl RealFn for TestFunction {
    fn eval(&self, x: f64) -> f64 {
        TestFunction::eval(self, x)
    }

    fn sup_bound(&self) -> f64 {
        self.sup_norm_bound
    }
}

/// Probe functions used for pairing convergence and martingale checks.
pub fn standard_test_suite() -> Vec<TestFunction> {
    vec![
        TestFunction::constant(1.0),
        TestFunction::capped_identity(10.0),
        TestFunction::gaussian(0.0, 1.0),
        TestFunction::gaussian(1.0, 0.5),
        TestFunction::gaussian(2.5, 1.5),
        TestFunction::sigmoid(0.0, 0.25),
        TestFunction::sigmoid(1.0, 1.0),
    ]
}

/// Bounded, piecewise-defined function with known discontinuities.
///
/// Quadrature over compositions of these functions splits at the
/// breakpoints, so indicator pairings carry no smoothing bias. The strict
/// half-line indicator [`RcllFunction::indicator_positive`] is left- rather
/// than right-continuous at 0; it is kept because atoms at 0 count as lost.
#[derive(Clone)]
pub struct RcllFunction {
    name: String,
    eval: Scalar,
    breakpoints: Vec<f64>,
    bound: f64,
}

impl fmt::Debug for RcllFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RcllFunction")
            .field("name", &self.name)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl RcllFunction {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breakpoints: Vec<f64>,
        bound: f64,
    ) -> Self {
        Self { name: name.into(), eval: Arc::new(eval), breakpoints, bound }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `1{x > 0}`
    pub fn indicator_positive() -> Self {
        Self::new("1(0,inf)", |x| if x > 0.0 { 1.0 } else { 0.0 }, vec![0.0], 1.0)
    }

    /// `1{x ≤ 0}`
    pub fn indicator_nonpositive() -> Self {
        Self::new("1(-inf,0]", |x| if x <= 0.0 { 1.0 } else { 0.0 }, vec![0.0], 1.0)
    }

    /// `1{x > threshold}`
    pub fn indicator_above(threshold: f64) -> Self {
        Self::new(
            format!("1({threshold},inf)"),
            move |x| if x > threshold { 1.0 } else { 0.0 },
            vec![threshold],
            1.0,
        )
    }

    /// `1{lo ≤ x < hi}`, right-continuous.
    pub fn indicator_interval(lo: f64, hi: f64) -> Self {
        Self::new(
            format!("1[{lo},{hi})"),
            move |x| if x >= lo && x < hi { 1.0 } else { 0.0 },
            vec![lo, hi],
            1.0,
        )
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c, Vec::new(), c.abs())
    }
}

impl From<TestFunction> for RcllFunction {
    fn from(phi: TestFunction) -> Self {
        let bound = phi.sup_norm_bound;
        let name = phi.name.clone();
        Self { name, eval: phi.eval, breakpoints: Vec::new(), bound }
    }
}

impl RealFn for RcllFunction {
    fn eval(&self, x: f64) -> f64 {
        RcllFunction::eval(self, x)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn sup_bound(&self) -> f64 {
        self.bound
    }
}
