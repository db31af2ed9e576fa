//! Central finite differences for checking analytic gradients.

use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function of `x`, step `h`.
pub fn central_diff(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// First element where `analytic` and `numeric` disagree by more than
/// `rel_tol` relative to `|numeric| + 1e-8` and more than `abs_floor` absolute.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

pub fn compare(analytic: &Tensor, numeric: &Tensor, rel_tol: f64, abs_floor: f64) -> Result<f64, Mismatch> {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    let mut worst = 0.0f64;
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let rel = relative_error(a, n);
        if (a - n).abs() <= abs_floor {
            continue;
        }
        if rel > rel_tol || !rel.is_finite() {
            return Err(Mismatch {
                index: i,
                analytic: a,
                numeric: n,
                rel_error: rel,
            });
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}
