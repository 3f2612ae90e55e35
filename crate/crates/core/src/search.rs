//! One-dimensional minimization and root bracketing.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_section(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Minimum> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Numerical(format!(
            "golden-section bracket [{lo}, {hi}] or tolerance {tol} is invalid"
        )));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut evaluations = 2;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        evaluations += 1;
        if evaluations > 10_000 {
            return Err(Error::Numerical("golden-section search did not converge".into()));
        }
    }
    let (x, value) = if fc <= fd { (c, fc) } else { (d, fd) };
    if !value.is_finite() {
        return Err(Error::Numerical(format!("merit is not finite at {x}")));
    }
    Ok(Minimum {
        x,
        value,
        evaluations,
    })
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, given `pred(lo)` true and
/// `pred(hi)` false, to within `tol`.
pub fn bisect_last_true(
    mut pred: impl FnMut(f64) -> Result<bool>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    if !(a < b) || !(tol > 0.0) {
        return Err(Error::Numerical(format!("bisection bracket [{lo}, {hi}] is invalid")));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if pred(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}
