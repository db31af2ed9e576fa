//! Scalar point-wise functions: the candidate catalog, the probe functions used
//! by the property studies, and the transformations that derive variants.

mod catalog;
mod erf;
mod recipe;
mod transform;

pub use catalog::{arctan_raw, catalog, lookup, names, search_candidates, ALIASES};
pub use erf::{erf_derivative, erf_eval, TWO_OVER_SQRT_PI};
pub use recipe::{FuncSpec, Transform};
pub use transform::{clip_bound, flat_zone, mix_linear, negate, scaled_tanh, shift, ShiftKind, TransformParams};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    NonMonotonic,
}

impl Monotonicity {
    pub fn flipped(self) -> Self {
        match self {
            Monotonicity::Increasing => Monotonicity::Decreasing,
            Monotonicity::Decreasing => Monotonicity::Increasing,
            Monotonicity::NonMonotonic => Monotonicity::NonMonotonic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    Bounded,
    Logarithmic,
    SublinearPower,
    LinearOrFaster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionGroup {
    Natural,
    TransformedBasic,
    ClippedUnbounded,
    CanonicalRatio,
    UnboundedProbe,
    NonMonotonicProbe,
}

impl ConstructionGroup {
    /// Groups whose members make up the function-search candidate set.
    pub fn is_search_group(self) -> bool {
        matches!(
            self,
            ConstructionGroup::Natural
                | ConstructionGroup::TransformedBasic
                | ConstructionGroup::ClippedUnbounded
                | ConstructionGroup::CanonicalRatio
        )
    }
}

impl fmt::Display for ConstructionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstructionGroup::Natural => "natural",
            ConstructionGroup::TransformedBasic => "transformed_basic",
            ConstructionGroup::ClippedUnbounded => "clipped_unbounded",
            ConstructionGroup::CanonicalRatio => "canonical_ratio",
            ConstructionGroup::UnboundedProbe => "unbounded_probe",
            ConstructionGroup::NonMonotonicProbe => "non_monotonic_probe",
        };
        f.write_str(s)
    }
}

/// The shape properties a function is expected to have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredProps {
    pub zero_centered: bool,
    pub bounded: bool,
    pub center_sensitive: bool,
    pub monotonic: Monotonicity,
    pub growth: GrowthClass,
}

impl DeclaredProps {
    /// Zero-centered, bounded, center-sensitive and increasing.
    pub const fn well_behaved() -> Self {
        DeclaredProps {
            zero_centered: true,
            bounded: true,
            center_sensitive: true,
            monotonic: Monotonicity::Increasing,
            growth: GrowthClass::Bounded,
        }
    }

    pub const fn unbounded(growth: GrowthClass) -> Self {
        DeclaredProps {
            bounded: false,
            growth,
            ..Self::well_behaved()
        }
    }

    pub const fn with_monotonic(self, monotonic: Monotonicity) -> Self {
        DeclaredProps { monotonic, ..self }
    }
}

/// A named scalar function with its analytic derivative.
///
/// Cloning is cheap; the maps are shared.
#[derive(Clone)]
pub struct PointwiseFn {
    name: String,
    formula: String,
    value: ScalarMap,
    derivative: ScalarMap,
    props: DeclaredProps,
    group: ConstructionGroup,
    /// Points where the derivative jumps (clip boundaries, kinks) or diverges.
    kinks: Vec<f64>,
}

impl PointwiseFn {
    pub fn new(
        name: impl Into<String>,
        formula: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        props: DeclaredProps,
        group: ConstructionGroup,
    ) -> Self {
        PointwiseFn {
            name: name.into(),
            formula: formula.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            props,
            group,
            kinks: Vec::new(),
        }
    }

    pub fn with_kinks(mut self, kinks: impl IntoIterator<Item = f64>) -> Self {
        self.kinks.extend(kinks);
        self.kinks.sort_by(f64::total_cmp);
        self.kinks.dedup();
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn formula(&self) -> &str {
        &self.formula
    }

    pub fn declared_props(&self) -> DeclaredProps {
        self.props
    }

    pub fn group(&self) -> ConstructionGroup {
        self.group
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    /// Distance from `x` to the nearest kink, `f64::INFINITY` when there are none.
    pub fn distance_to_kink(&self, x: f64) -> f64 {
        self.kinks
            .iter()
            .map(|k| (x - k).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_search_candidate(&self) -> bool {
        self.group.is_search_group()
    }

    pub(crate) fn value_map(&self) -> ScalarMap {
        Arc::clone(&self.value)
    }

    pub(crate) fn derivative_map(&self) -> ScalarMap {
        Arc::clone(&self.derivative)
    }

    pub(crate) fn derive(
        &self,
        name: String,
        formula: String,
        value: ScalarMap,
        derivative: ScalarMap,
        props: DeclaredProps,
        kinks: Vec<f64>,
    ) -> Self {
        PointwiseFn {
            name,
            formula,
            value,
            derivative,
            props,
            group: self.group,
            kinks: Vec::new(),
        }
        .with_kinks(kinks)
    }
}

impl fmt::Debug for PointwiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointwiseFn")
            .field("name", &self.name)
            .field("formula", &self.formula)
            .field("group", &self.group)
            .field("props", &self.props)
            .finish()
    }
}

/// Sign with `sign(0) = 0`; `f64::signum` returns ±1 for ±0.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
