use crate::error::{invalid, Error, Result};

/// Tolerances and breakpoints for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub breakpoints: Vec<f64>,
    pub max_depth: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-9, rel_tol: 0.0, breakpoints: Vec::new(), max_depth: 50 }
    }
}

impl QuadratureSpec {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self { abs_tol, ..Self::default() }
    }

    pub fn with_breakpoints(mut self, breakpoints: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(breakpoints);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || self.rel_tol < 0.0 {
            return Err(invalid("quadrature tolerances must be positive"));
        }
        Ok(())
    }
}

// Subdivisions forced before the error estimate is trusted; keeps narrow
// features from being missed by a lucky coarse Simpson estimate.
const MIN_DEPTH: usize = 5;

/// Adaptive Simpson quadrature of `f` over `[a, b]`, split at every
/// breakpoint of `spec` lying strictly inside the interval. The tolerance is
/// shared between the pieces in proportion to their length.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid(format!("integration bounds [{a}, {b}] must be finite")));
    }
    if a > b {
        return Err(invalid(format!("integration bounds reversed: {a} > {b}")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut cuts: Vec<f64> = spec.breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut total = 0.0;
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let share = spec.abs_tol * (hi - lo) / (b - a);
        total += simpson_piece(f, lo, hi, share, spec)?;
        lo = hi;
    }
    Ok(total)
}

fn simpson_piece<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, tol: f64, spec: &QuadratureSpec) -> Result<f64> {
    // Open at the ends: the piece may be bounded by a discontinuity whose
    // value on the other side must not leak in.
    let eps = (b - a) * 1e-13;
    let fa = f(a + eps);
    let fb = f(b - eps);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 0, spec)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let refined = left + right;
    let err = refined - whole;
    let allowed = tol.max(spec.rel_tol * refined.abs());
    if depth >= MIN_DEPTH && err.abs() <= 15.0 * allowed {
        return Ok(refined + err / 15.0);
    }
    if !err.is_finite() {
        return Err(invalid(format!("integrand is not finite on [{a}, {b}]")));
    }
    if depth >= spec.max_depth {
        return Err(Error::Quadrature { a, b, depth });
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, spec)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, spec)?)
}
