//! Serializable descriptions of catalog functions and their transformations,
//! used wherever a function must travel through a config or a report.

use super::{clip_bound, flat_zone, lookup, mix_linear, negate, scaled_tanh, shift, PointwiseFn, ShiftKind};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Either a catalog name (`"erf"`) or a transformation of another recipe
/// (`{"clip": {"base": "arcsinh", "lambda_u": 1.0}}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FuncSpec {
    Named(String),
    Transformed(Box<Transform>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Shift {
        base: FuncSpec,
        kind: ShiftKind,
        lambda: f64,
    },
    Clip {
        base: FuncSpec,
        lambda_u: f64,
    },
    Mix {
        base: FuncSpec,
        lambda_b: f64,
    },
    Flat {
        base: FuncSpec,
        lambda_flat: f64,
    },
    Negate {
        base: FuncSpec,
    },
    ScaledTanh {
        eps_tanh: f64,
    },
}

impl FuncSpec {
    pub fn named(name: impl Into<String>) -> Self {
        FuncSpec::Named(name.into())
    }

    pub fn transformed(t: Transform) -> Self {
        FuncSpec::Transformed(Box::new(t))
    }

    pub fn resolve(&self) -> Result<PointwiseFn> {
        match self {
            FuncSpec::Named(n) => lookup(n),
            FuncSpec::Transformed(t) => match t.as_ref() {
                Transform::Shift { base, kind, lambda } => Ok(shift(&base.resolve()?, *kind, *lambda)),
                Transform::Clip { base, lambda_u } => clip_bound(&base.resolve()?, *lambda_u),
                Transform::Mix { base, lambda_b } => mix_linear(&base.resolve()?, *lambda_b),
                Transform::Flat { base, lambda_flat } => flat_zone(&base.resolve()?, *lambda_flat),
                Transform::Negate { base } => Ok(negate(&base.resolve()?)),
                Transform::ScaledTanh { eps_tanh } => scaled_tanh(*eps_tanh),
            },
        }
    }
}

impl fmt::Display for FuncSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuncSpec::Named(n) => f.write_str(n),
            FuncSpec::Transformed(t) => match t.as_ref() {
                Transform::Shift { base, kind, lambda } => {
                    let k = match kind {
                        ShiftKind::Horizontal => "hshift",
                        ShiftKind::Vertical => "vshift",
                    };
                    write!(f, "{k}({base},{lambda})")
                }
                Transform::Clip { base, lambda_u } => write!(f, "clip({base},{lambda_u})"),
                Transform::Mix { base, lambda_b } => write!(f, "mix({base},{lambda_b})"),
                Transform::Flat { base, lambda_flat } => write!(f, "flat({base},{lambda_flat})"),
                Transform::Negate { base } => write!(f, "neg({base})"),
                Transform::ScaledTanh { eps_tanh } => write!(f, "tanh_eps({eps_tanh})"),
            },
        }
    }
}
