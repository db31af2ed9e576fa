//! Scalar quadrature and bracketing minimization.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[derive(Clone, Copy, Debug)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`, stopping when the
/// bracket is narrower than `tol`.
///
/// Fails when the best point found sits on the bracket boundary, i.e. the
/// objective is monotone on the bracket.
pub fn golden_section(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<Minimum> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Parameter(format!(
            "golden section needs lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}"
        )));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while (b - a) > tol {
        iterations += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let value = f(x);
    // A minimum pinned to either end means the bracket held no interior minimum.
    let margin = 2.0 * tol.max((hi - lo) * 1e-9);
    if x - lo <= margin || hi - x <= margin || value > f(lo).min(f(hi)) {
        return Err(Error::Optimization(format!(
            "objective is monotone on [{lo}, {hi}]; no interior minimum"
        )));
    }
    Ok(Minimum {
        x,
        value,
        iterations,
    })
}
