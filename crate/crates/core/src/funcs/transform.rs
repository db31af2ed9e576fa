//! Controlled transformations of a base function, each of which switches one
//! shape property on or off.

use super::{DeclaredProps, GrowthClass, PointwiseFn};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Horizontal,
    Vertical,
}

/// The knobs of every transformation, validated together.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub lambda_horiz: f64,
    pub lambda_vert: f64,
    pub lambda_u: f64,
    pub lambda_b: f64,
    pub lambda_flat: f64,
    pub eps_tanh: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        TransformParams {
            lambda_horiz: 0.0,
            lambda_vert: 0.0,
            lambda_u: 1.0,
            lambda_b: 0.1,
            lambda_flat: 0.0,
            eps_tanh: 1.0,
        }
    }
}

impl TransformParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lambda_u > 0.0) {
            bad.push(format!("lambda_u must be > 0, got {}", self.lambda_u));
        }
        if !(self.lambda_b > 0.0 && self.lambda_b < 1.0) {
            bad.push(format!("lambda_b must lie in (0, 1), got {}", self.lambda_b));
        }
        if !(self.lambda_flat >= 0.0) {
            bad.push(format!("lambda_flat must be >= 0, got {}", self.lambda_flat));
        }
        if !(self.eps_tanh > 0.0) {
            bad.push(format!("eps_tanh must be > 0, got {}", self.eps_tanh));
        }
        if !self.lambda_horiz.is_finite() || !self.lambda_vert.is_finite() {
            bad.push("shift magnitudes must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(bad.join("; ")))
        }
    }
}

/// `x ↦ f(x + λ)` or `x ↦ f(x) + λ`.
pub fn shift(f: &PointwiseFn, kind: ShiftKind, lambda: f64) -> PointwiseFn {
    let (v, d) = (f.value_map(), f.derivative_map());
    let props = DeclaredProps {
        zero_centered: f.declared_props().zero_centered && lambda == 0.0,
        ..f.declared_props()
    };
    match kind {
        ShiftKind::Horizontal => f.derive(
            format!("hshift({},{lambda})", f.name()),
            format!("f(x + {lambda}), f = {}", f.formula()),
            Arc::new(move |x| v(x + lambda)),
            Arc::new(move |x| d(x + lambda)),
            props,
            f.kinks().iter().map(|k| k - lambda).collect(),
        ),
        ShiftKind::Vertical => f.derive(
            format!("vshift({},{lambda})", f.name()),
            format!("f(x) + {lambda}, f = {}", f.formula()),
            Arc::new(move |x| v(x) + lambda),
            d,
            props,
            f.kinks().to_vec(),
        ),
    }
}

/// `x ↦ clip(f(x), −λ_u, λ_u)`. The derivative is zero where `|f(x)| > λ_u`.
pub fn clip_bound(f: &PointwiseFn, lambda_u: f64) -> Result<PointwiseFn> {
    if !(lambda_u > 0.0) || !lambda_u.is_finite() {
        return Err(Error::Parameter(format!(
            "clip radius must be positive and finite, got {lambda_u}"
        )));
    }
    let (v, d) = (f.value_map(), f.derivative_map());
    let v2 = Arc::clone(&v);
    let mut kinks = f.kinks().to_vec();
    kinks.extend(level_crossings(&*v, lambda_u));
    kinks.extend(level_crossings(&*v, -lambda_u));
    Ok(f.derive(
        format!("clip({},{lambda_u})", f.name()),
        format!("clip(f(x), -{lambda_u}, {lambda_u}), f = {}", f.formula()),
        Arc::new(move |x| v(x).clamp(-lambda_u, lambda_u)),
        Arc::new(move |x| if v2(x).abs() > lambda_u { 0.0 } else { d(x) }),
        DeclaredProps {
            bounded: true,
            growth: GrowthClass::Bounded,
            ..f.declared_props()
        },
        kinks,
    ))
}

/// `x ↦ (1 − λ_b)·f(x) + λ_b·x`, which grows linearly for any λ_b > 0.
pub fn mix_linear(f: &PointwiseFn, lambda_b: f64) -> Result<PointwiseFn> {
    if !(lambda_b > 0.0 && lambda_b < 1.0) {
        return Err(Error::Parameter(format!(
            "mix weight must lie in (0, 1), got {lambda_b}"
        )));
    }
    if !f.declared_props().bounded {
        return Err(Error::Contract(format!(
            "mix_linear expects a bounded base function, `{}` is unbounded",
            f.name()
        )));
    }
    let (v, d) = (f.value_map(), f.derivative_map());
    let keep = 1.0 - lambda_b;
    Ok(f.derive(
        format!("mix({},{lambda_b})", f.name()),
        format!("{keep}*f(x) + {lambda_b}*x, f = {}", f.formula()),
        Arc::new(move |x| keep * v(x) + lambda_b * x),
        Arc::new(move |x| keep * d(x) + lambda_b),
        DeclaredProps {
            bounded: false,
            growth: GrowthClass::LinearOrFaster,
            ..f.declared_props()
        },
        f.kinks().to_vec(),
    ))
}

/// Zero on `[−λ, λ]`, with the two branches of `f` pushed outward by λ:
/// `g(x) = f(x − λ)` for `x > λ` and `g(x) = f(x + λ)` for `x < −λ`.
///
/// `g` is continuous but not differentiable at ±λ; there the derivative of the
/// outer branch, `f′(0)`, is used.
pub fn flat_zone(f: &PointwiseFn, lambda_flat: f64) -> Result<PointwiseFn> {
    if !(lambda_flat >= 0.0) || !lambda_flat.is_finite() {
        return Err(Error::Parameter(format!(
            "flat-zone half-width must be finite and >= 0, got {lambda_flat}"
        )));
    }
    check_odd(f)?;
    let (v, d) = (f.value_map(), f.derivative_map());
    let lam = lambda_flat;
    let mut kinks = vec![-lam, lam];
    for &k in f.kinks() {
        match k.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => kinks.push(k + lam),
            Some(std::cmp::Ordering::Less) => kinks.push(k - lam),
            _ => {}
        }
    }
    let props = DeclaredProps {
        center_sensitive: f.declared_props().center_sensitive
            && lam <= crate::props::Thresholds::default().flat_half_width,
        ..f.declared_props()
    };
    Ok(f.derive(
        format!("flat({},{lam})", f.name()),
        format!("0 on |x| <= {lam}, else f(x -+ {lam}), f = {}", f.formula()),
        Arc::new(move |x| {
            if x > lam {
                v(x - lam)
            } else if x < -lam {
                v(x + lam)
            } else {
                0.0
            }
        }),
        Arc::new(move |x| {
            if x >= lam {
                d(x - lam)
            } else if x <= -lam {
                d(x + lam)
            } else {
                0.0
            }
        }),
        props,
        kinks,
    ))
}

fn check_odd(f: &PointwiseFn) -> Result<()> {
    let at_zero = f.eval(0.0);
    if at_zero.abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "flat_zone needs an odd base function, `{}`(0) = {at_zero}",
            f.name()
        )));
    }
    for i in 1..=600 {
        let x = 0.01 * f64::from(i);
        let asym = (f.eval(x) + f.eval(-x)).abs();
        if asym > 1e-9 {
            return Err(Error::Contract(format!(
                "flat_zone needs an odd base function, `{}` has |f(x) + f(-x)| = {asym:e} at x = {x}",
                f.name()
            )));
        }
    }
    Ok(())
}

/// `x ↦ −f(x)`.
pub fn negate(f: &PointwiseFn) -> PointwiseFn {
    let (v, d) = (f.value_map(), f.derivative_map());
    let props = f.declared_props();
    f.derive(
        format!("neg({})", f.name()),
        format!("-f(x), f = {}", f.formula()),
        Arc::new(move |x| -v(x)),
        Arc::new(move |x| -d(x)),
        DeclaredProps {
            monotonic: props.monotonic.flipped(),
            ..props
        },
        f.kinks().to_vec(),
    )
}

/// `x ↦ tanh(ε·x)`.
pub fn scaled_tanh(eps_tanh: f64) -> Result<PointwiseFn> {
    if !(eps_tanh > 0.0) || !eps_tanh.is_finite() {
        return Err(Error::Parameter(format!(
            "tanh coefficient must be positive and finite, got {eps_tanh}"
        )));
    }
    Ok(PointwiseFn::new(
        format!("tanh_eps({eps_tanh})"),
        format!("tanh({eps_tanh} * x)"),
        move |x: f64| (eps_tanh * x).tanh(),
        move |x: f64| eps_tanh * (1.0 - (eps_tanh * x).tanh().powi(2)),
        DeclaredProps::well_behaved(),
        super::ConstructionGroup::Natural,
    ))
}

/// Points in [−50, 50] where `v` crosses `level`, refined by bisection.
fn level_crossings(v: &dyn Fn(f64) -> f64, level: f64) -> Vec<f64> {
    const STEPS: i32 = 20_000;
    let at = |i: i32| -50.0 + 100.0 * f64::from(i) / f64::from(STEPS);
    let mut out = Vec::new();
    let mut prev = v(at(0)) - level;
    for i in 1..=STEPS {
        let cur = v(at(i)) - level;
        if prev == 0.0 {
            out.push(at(i - 1));
        } else if prev * cur < 0.0 {
            let (mut lo, mut hi) = (at(i - 1), at(i));
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (v(mid) - level) * prev > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    out
}
