//! Best scalar `ε` for approximating erf by `tanh(ε·x)` in the L1 sense.

use crate::error::{Error, Result};
use crate::funcs::erf_eval;
use crate::numeric::{adaptive_simpson, golden_section};
use serde::{Deserialize, Serialize};

pub const EPS_BRACKET: (f64, f64) = (0.8, 1.6);
pub const INTEGRATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsFitResult {
    pub eps_star: f64,
    pub objective_value: f64,
    pub truncation_radius: f64,
    pub integration_tolerance: f64,
    pub bracket: (f64, f64),
    pub search_tolerance: f64,
    pub iterations: usize,
}

/// `∫_{−R}^{R} |tanh(εx) − erf(x)| dx`, integrated as twice the half-line
/// integral since the integrand is even.
pub fn eps_objective(eps: f64, radius: f64) -> f64 {
    let integrand = move |x: f64| ((eps * x).tanh() - erf_eval(x)).abs();
    2.0 * adaptive_simpson(&integrand, 0.0, radius, INTEGRATION_TOL / 2.0)
}

pub fn fit_eps(truncation_radius: f64, tol: f64) -> Result<EpsFitResult> {
    if !(truncation_radius >= 6.0) || !truncation_radius.is_finite() {
        return Err(Error::Parameter(format!(
            "truncation radius must be >= 6, got {truncation_radius}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be > 0, got {tol}")));
    }
    let (lo, hi) = EPS_BRACKET;
    let objective = |e: f64| eps_objective(e, truncation_radius);
    let min = golden_section(&objective, lo, hi, tol)?;
    Ok(EpsFitResult {
        eps_star: min.x,
        objective_value: min.value,
        truncation_radius,
        integration_tolerance: INTEGRATION_TOL,
        bracket: EPS_BRACKET,
        search_tolerance: tol,
        iterations: min.iterations,
    })
}
