//! Numeric classification of scalar functions along the four shape axes
//! (zero-centeredness, boundedness, center sensitivity, monotonicity) plus an
//! asymptotic growth class for unbounded functions.
//!
//! Every flag is a deterministic function of a fixed probe set and the
//! [`Thresholds`]. The center-sensitivity flag is a proxy: it measures the
//! half-width of the region around the origin where `|f|` stays below a small
//! level, which is exactly what the flat-zone construction widens.

mod eps_fit;

pub use eps_fit::{eps_objective, fit_eps, EpsFitResult, EPS_BRACKET, INTEGRATION_TOL};

use crate::error::{Error, Result};
use crate::funcs::{DeclaredProps, GrowthClass, Monotonicity, PointwiseFn};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Largest admissible `max |f(x) + f(−x)| / 2` and `|f(0)|`.
    pub asymmetry: f64,
    /// Largest admissible `sup |f|` over the log-spaced probes.
    pub bound_cap: f64,
    /// `|f|` below this counts as flat.
    pub flat_level: f64,
    /// Largest admissible flat half-width for a center-sensitive function.
    pub flat_half_width: f64,
    pub monotonic_tol: f64,
    /// Growth slopes below this are logarithmic.
    pub log_slope_cutoff: f64,
    /// Growth slopes at or above this are linear or faster.
    pub linear_slope_cutoff: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            asymmetry: 0.05,
            bound_cap: 1.5,
            flat_level: 1e-3,
            flat_half_width: 0.25,
            monotonic_tol: 1e-10,
            log_slope_cutoff: 0.25,
            linear_slope_cutoff: 0.9,
        }
    }
}

const GRID_POINTS: usize = 4001;
const GRID_RADIUS: f64 = 8.0;
const FLAT_SCAN_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub function: String,
    pub zero_centered: bool,
    pub asymmetry: f64,
    pub bounded: bool,
    pub sup_abs: f64,
    pub center_sensitive: bool,
    pub flat_half_width: f64,
    pub monotonic: Monotonicity,
    pub monotonic_violations: usize,
    pub growth_class: GrowthClass,
    /// Least-squares slope of `ln|f|` against `ln x` on `[1e2, 1e6]`.
    pub growth_slope: f64,
}

impl PropertyReport {
    pub fn as_declared(&self) -> DeclaredProps {
        DeclaredProps {
            zero_centered: self.zero_centered,
            bounded: self.bounded,
            center_sensitive: self.center_sensitive,
            monotonic: self.monotonic,
            growth: self.growth_class,
        }
    }

    /// Names of the flags that disagree with `declared`.
    pub fn mismatches(&self, declared: &DeclaredProps) -> Vec<&'static str> {
        let m = self.as_declared();
        let mut out = Vec::new();
        if m.zero_centered != declared.zero_centered {
            out.push("zero_centered");
        }
        if m.bounded != declared.bounded {
            out.push("bounded");
        }
        if m.center_sensitive != declared.center_sensitive {
            out.push("center_sensitive");
        }
        if m.monotonic != declared.monotonic {
            out.push("monotonic");
        }
        if m.growth != declared.growth {
            out.push("growth_class");
        }
        out
    }
}

fn grid() -> impl Iterator<Item = f64> {
    (0..GRID_POINTS).map(|i| -GRID_RADIUS + 2.0 * GRID_RADIUS * i as f64 / (GRID_POINTS - 1) as f64)
}

/// Magnitudes 1e-3 ..= 1e6, 20 per decade.
fn log_probes() -> impl Iterator<Item = f64> {
    (0..=180).map(|i| 10f64.powf(-3.0 + f64::from(i) / 20.0))
}

fn checked(f: &PointwiseFn, x: f64) -> Result<f64> {
    let v = f.eval(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation {
            name: f.name().to_string(),
            point: x,
        })
    }
}

pub fn classify(f: &PointwiseFn) -> Result<PropertyReport> {
    classify_with(f, &Thresholds::default())
}

pub fn classify_with(f: &PointwiseFn, th: &Thresholds) -> Result<PropertyReport> {
    let grid_values: Vec<f64> = grid().map(|x| checked(f, x)).collect::<Result<_>>()?;

    // zero-centeredness
    let f0 = checked(f, 0.0)?;
    let mut asymmetry = f0.abs();
    let half = GRID_POINTS / 2;
    for i in 1..=half {
        let pair = (grid_values[half + i] + grid_values[half - i]).abs() / 2.0;
        asymmetry = asymmetry.max(pair);
    }
    let mut sup_abs = grid_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for x in log_probes() {
        let (p, n) = (checked(f, x)?, checked(f, -x)?);
        asymmetry = asymmetry.max((p + n).abs() / 2.0);
        sup_abs = sup_abs.max(p.abs()).max(n.abs());
    }
    let zero_centered = asymmetry <= th.asymmetry && f0.abs() <= th.asymmetry;
    let bounded = sup_abs <= th.bound_cap;

    let flat_half_width = flat_half_width(f, th.flat_level)?;
    let center_sensitive = flat_half_width <= th.flat_half_width;

    let (mut up, mut down) = (0usize, 0usize);
    for w in grid_values.windows(2) {
        let d = w[1] - w[0];
        if d > th.monotonic_tol {
            up += 1;
        } else if d < -th.monotonic_tol {
            down += 1;
        }
    }
    let (monotonic, monotonic_violations) = match (up, down) {
        (_, 0) => (Monotonicity::Increasing, 0),
        (0, _) => (Monotonicity::Decreasing, 0),
        (u, d) => (Monotonicity::NonMonotonic, u.min(d)),
    };

    let growth_slope = growth_slope(f)?;
    let growth_class = if bounded {
        GrowthClass::Bounded
    } else if growth_slope < th.log_slope_cutoff {
        GrowthClass::Logarithmic
    } else if growth_slope < th.linear_slope_cutoff {
        GrowthClass::SublinearPower
    } else {
        GrowthClass::LinearOrFaster
    };

    Ok(PropertyReport {
        function: f.name().to_string(),
        zero_centered,
        asymmetry,
        bounded,
        sup_abs,
        center_sensitive,
        flat_half_width,
        monotonic,
        monotonic_violations,
        growth_class,
        growth_slope,
    })
}

/// Half-width of the interval around the origin on which `|f| < level`,
/// averaged over the two sides. Zero when `|f(0)|` already reaches `level`;
/// capped at the probe radius.
fn flat_half_width(f: &PointwiseFn, level: f64) -> Result<f64> {
    if checked(f, 0.0)?.abs() >= level {
        return Ok(0.0);
    }
    let mut sides = [GRID_RADIUS; 2];
    for (side, dir) in sides.iter_mut().zip([1.0, -1.0]) {
        let steps = (GRID_RADIUS / FLAT_SCAN_STEP) as usize;
        for i in 1..=steps {
            let x = dir * FLAT_SCAN_STEP * i as f64;
            if checked(f, x)?.abs() >= level {
                let (mut inside, mut outside) = (dir * FLAT_SCAN_STEP * (i - 1) as f64, x);
                for _ in 0..50 {
                    let mid = 0.5 * (inside + outside);
                    if f.eval(mid).abs() >= level {
                        outside = mid;
                    } else {
                        inside = mid;
                    }
                }
                *side = (0.5 * (inside + outside)).abs();
                break;
            }
        }
    }
    Ok(0.5 * (sides[0] + sides[1]))
}

fn growth_points() -> impl Iterator<Item = f64> {
    (0..=40).map(|i| 10f64.powf(2.0 + f64::from(i) / 10.0))
}

fn growth_slope(f: &PointwiseFn) -> Result<f64> {
    let pts: Vec<(f64, f64)> = growth_points()
        .map(|x| Ok((x.ln(), checked(f, x)?.abs().max(f64::MIN_POSITIVE).ln())))
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRank {
    pub function: String,
    pub growth_class: GrowthClass,
    pub slope: f64,
    pub value_at_1e6: f64,
}

/// Orders unbounded functions from slowest to fastest growth: by growth class,
/// then by `|f(1e6)|` within a class.
pub fn growth_ordering(fs: &[PointwiseFn]) -> Result<Vec<GrowthRank>> {
    let mut ranks = Vec::with_capacity(fs.len());
    for f in fs {
        let report = classify(f)?;
        if report.bounded {
            return Err(Error::Contract(format!(
                "growth ordering needs unbounded functions, `{}` is bounded (sup |f| = {})",
                f.name(),
                report.sup_abs
            )));
        }
        ranks.push(GrowthRank {
            function: f.name().to_string(),
            growth_class: report.growth_class,
            slope: report.growth_slope,
            value_at_1e6: checked(f, 1e6)?.abs(),
        });
    }
    ranks.sort_by(|a, b| {
        a.growth_class
            .cmp(&b.growth_class)
            .then(a.value_at_1e6.partial_cmp(&b.value_at_1e6).unwrap_or(Ordering::Equal))
    });
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{flat_zone, lookup, negate, shift, ShiftKind};

    #[test]
    fn tanh_is_well_behaved() {
        let r = classify(&lookup("tanh").unwrap()).unwrap();
        assert!(r.zero_centered && r.bounded && r.center_sensitive);
        assert_eq!(r.monotonic, Monotonicity::Increasing);
        assert_eq!(r.growth_class, GrowthClass::Bounded);
    }

    #[test]
    fn dampx_is_non_monotonic() {
        let r = classify(&lookup("dampx").unwrap()).unwrap();
        assert_eq!(r.monotonic, Monotonicity::NonMonotonic);
        assert!(r.monotonic_violations > 0);
    }

    #[test]
    fn flat_zone_loses_center_sensitivity() {
        let f = flat_zone(&lookup("erf").unwrap(), 2.0).unwrap();
        let r = classify(&f).unwrap();
        assert!(!r.center_sensitive);
        // |erf(x − 2)| reaches 1e-3 at x ≈ 2 + 8.86e-4
        assert!((r.flat_half_width - 2.0).abs() < 1e-3, "{}", r.flat_half_width);
        assert!(r.zero_centered && r.bounded);
    }

    #[test]
    fn negation_flips_only_monotonicity() {
        for name in ["erf", "tanh", "isru", "logsign"] {
            let f = lookup(name).unwrap();
            let a = classify(&f).unwrap();
            let b = classify(&negate(&f)).unwrap();
            assert_eq!(b.monotonic, a.monotonic.flipped());
            assert_eq!(
                (a.zero_centered, a.bounded, a.center_sensitive, a.growth_class),
                (b.zero_centered, b.bounded, b.center_sensitive, b.growth_class)
            );
        }
    }

    #[test]
    fn horizontal_shift_breaks_zero_centering() {
        let f = shift(&lookup("erf").unwrap(), ShiftKind::Horizontal, 1.0);
        assert!(!classify(&f).unwrap().zero_centered);
        let v = shift(&lookup("tanh").unwrap(), ShiftKind::Vertical, -0.5);
        assert!(!classify(&v).unwrap().zero_centered);
    }

    #[test]
    fn non_finite_evaluation_names_the_point() {
        let bad = crate::funcs::PointwiseFn::new(
            "pole",
            "1/(x-1)",
            |x: f64| if x == 1.0 { f64::INFINITY } else { 1.0 / (x - 1.0) },
            |x: f64| -1.0 / (x - 1.0).powi(2),
            DeclaredProps::well_behaved(),
            crate::funcs::ConstructionGroup::Natural,
        );
        match classify(&bad).unwrap_err() {
            Error::Evaluation { name, point } => {
                assert_eq!(name, "pole");
                assert_eq!(point, 1.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn growth_ordering_examples() {
        let get = |n: &str| lookup(n).unwrap();
        let names = |r: Vec<GrowthRank>| r.into_iter().map(|g| g.function).collect::<Vec<_>>();
        assert_eq!(
            names(growth_ordering(&[get("linear"), get("logsign")]).unwrap()),
            ["logsign", "linear"]
        );
        assert_eq!(
            names(growth_ordering(&[get("linear"), get("power23")]).unwrap()),
            ["power23", "linear"]
        );
        assert_eq!(
            names(growth_ordering(&[get("logquad"), get("logsign")]).unwrap()),
            ["logsign", "logquad"]
        );
        assert!(matches!(
            growth_ordering(&[get("linear"), get("erf")]),
            Err(Error::Contract(_))
        ));
    }
}
