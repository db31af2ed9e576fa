//! Normalization layers and their point-wise replacements.
//!
//! Every layer maps `[..., C]` activations to the same shape, acting on the
//! trailing channel axis:
//!
//! * LayerNorm: `γ ⊙ (x − μ)/√(σ² + ε) + β` with per-token μ and population σ².
//! * RMSNorm: `γ ⊙ x/√(mean(x²) + ε)`, with an optional β.
//! * Dynamic point-wise: `γ ⊙ f(α·x + s) + β` with a learnable scalar α and a
//!   learnable shift `s` that is a scalar, a per-channel vector or absent.
//!   DyT is `f = tanh` without shift; Derf is `f = erf` with a scalar shift.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::funcs::{lookup, FuncSpec, PointwiseFn};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_NORM_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    LayerNorm,
    RmsNorm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    #[default]
    Scalar,
    PerChannel,
    Absent,
}

/// What occupies each normalization position of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSlot {
    LayerNorm,
    RmsNorm,
    Dyt,
    Derf,
    Dynamic {
        func: FuncSpec,
        #[serde(default)]
        s_mode: ShiftMode,
    },
}

impl NormSlot {
    pub fn dynamic(func: impl Into<String>, s_mode: ShiftMode) -> Self {
        NormSlot::Dynamic {
            func: FuncSpec::named(func),
            s_mode,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NormSlot::LayerNorm => "layer_norm".into(),
            NormSlot::RmsNorm => "rms_norm".into(),
            NormSlot::Dyt => "dyt".into(),
            NormSlot::Derf => "derf".into(),
            NormSlot::Dynamic { func, s_mode } => match s_mode {
                ShiftMode::Scalar => format!("{func}"),
                ShiftMode::PerChannel => format!("{func}[s=per_channel]"),
                ShiftMode::Absent => format!("{func}[s=absent]"),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub kind: NormKind,
    pub gamma: Tensor,
    pub beta: Option<Tensor>,
    pub epsilon: f64,
}

#[derive(Clone, Debug)]
pub struct DynamicPointwiseLayer {
    pub f: PointwiseFn,
    pub alpha: Tensor,
    pub s: Option<Tensor>,
    pub s_mode: ShiftMode,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Norm(NormLayer),
    Dynamic(DynamicPointwiseLayer),
}

impl NormLayer {
    pub fn new(kind: NormKind, channels: usize, epsilon: f64, with_beta: bool) -> Result<Self> {
        if channels < 1 {
            return Err(Error::Parameter("channel count must be >= 1".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("norm epsilon must be > 0, got {epsilon}")));
        }
        Ok(NormLayer {
            kind,
            gamma: Tensor::ones(&[channels]),
            beta: with_beta.then(|| Tensor::zeros(&[channels])),
            epsilon,
        })
    }
}

impl DynamicPointwiseLayer {
    pub fn new(f: PointwiseFn, channels: usize, s_mode: ShiftMode, alpha0: f64) -> Result<Self> {
        if channels < 1 {
            return Err(Error::Parameter("channel count must be >= 1".into()));
        }
        if !alpha0.is_finite() {
            return Err(Error::Parameter(format!("alpha0 must be finite, got {alpha0}")));
        }
        let s = match s_mode {
            ShiftMode::Scalar => Some(Tensor::zeros(&[1])),
            ShiftMode::PerChannel => Some(Tensor::zeros(&[channels])),
            ShiftMode::Absent => None,
        };
        Ok(DynamicPointwiseLayer {
            f,
            alpha: Tensor::full(&[1], alpha0),
            s,
            s_mode,
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
        })
    }

    /// `γ·tanh(αx) + β`
    pub fn dyt(channels: usize, alpha0: f64) -> Result<Self> {
        Self::new(lookup("tanh")?, channels, ShiftMode::Absent, alpha0)
    }

    /// `γ·erf(αx + s) + β`
    pub fn derf(channels: usize, alpha0: f64) -> Result<Self> {
        Self::new(lookup("erf")?, channels, ShiftMode::Scalar, alpha0)
    }
}

/// Builds a freshly initialized layer: γ = 1, β = 0, α = `alpha0`, s = 0.
/// Normalization layers use `norm_epsilon` and ignore `alpha0`.
pub fn init_layer(slot: &NormSlot, channels: usize, alpha0: f64, norm_epsilon: f64) -> Result<Layer> {
    Ok(match slot {
        NormSlot::LayerNorm => Layer::Norm(NormLayer::new(NormKind::LayerNorm, channels, norm_epsilon, true)?),
        NormSlot::RmsNorm => Layer::Norm(NormLayer::new(NormKind::RmsNorm, channels, norm_epsilon, false)?),
        NormSlot::Dyt => Layer::Dynamic(DynamicPointwiseLayer::dyt(channels, alpha0)?),
        NormSlot::Derf => Layer::Dynamic(DynamicPointwiseLayer::derf(channels, alpha0)?),
        NormSlot::Dynamic { func, s_mode } => {
            Layer::Dynamic(DynamicPointwiseLayer::new(func.resolve()?, channels, *s_mode, alpha0)?)
        }
    })
}

impl Layer {
    pub fn channels(&self) -> usize {
        match self {
            Layer::Norm(n) => n.gamma.len(),
            Layer::Dynamic(d) => d.gamma.len(),
        }
    }

    /// Trainable tensors in a fixed order; [`Layer::apply`] expects its
    /// parameter handles in the same order.
    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Norm(n) => {
                let mut v = vec![("gamma", &n.gamma)];
                if let Some(b) = &n.beta {
                    v.push(("beta", b));
                }
                v
            }
            Layer::Dynamic(d) => {
                let mut v = vec![("alpha", &d.alpha)];
                if let Some(s) = &d.s {
                    v.push(("s", s));
                }
                v.push(("gamma", &d.gamma));
                v.push(("beta", &d.beta));
                v
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Layer::Norm(n) => {
                let mut v = vec![("gamma", &mut n.gamma)];
                if let Some(b) = &mut n.beta {
                    v.push(("beta", b));
                }
                v
            }
            Layer::Dynamic(d) => {
                let mut v = vec![("alpha", &mut d.alpha)];
                if let Some(s) = &mut d.s {
                    v.push(("s", s));
                }
                v.push(("gamma", &mut d.gamma));
                v.push(("beta", &mut d.beta));
                v
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records the layer on `tape`. `params` are the handles of
    /// [`Layer::params`], in order.
    pub fn apply(&self, tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
        let expected = self.params().len();
        if params.len() != expected {
            return Err(Error::Contract(format!(
                "layer expects {expected} parameter handles, got {}",
                params.len()
            )));
        }
        match self {
            Layer::Norm(n) => tape.norm(x, params[0], params.get(1).copied(), n.kind, n.epsilon),
            Layer::Dynamic(d) => {
                let (alpha, rest) = (params[0], &params[1..]);
                let (shift, rest) = if d.s.is_some() {
                    (Some(rest[0]), &rest[1..])
                } else {
                    (None, rest)
                };
                tape.dyn_pointwise(x, alpha, shift, rest[0], rest[1], &d.f)
            }
        }
    }

    /// Forward pass without gradient tracking.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let ps: Vec<Var> = self
            .params()
            .into_iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect();
        let y = self.apply(&mut tape, xv, &ps)?;
        Ok(tape.value(y).clone())
    }
}

pub fn layer_norm_forward(x: &Tensor, layer: &NormLayer) -> Result<Tensor> {
    Layer::Norm(layer.clone()).forward(x)
}

pub fn rms_norm_forward(x: &Tensor, layer: &NormLayer) -> Result<Tensor> {
    Layer::Norm(layer.clone()).forward(x)
}

pub fn dyn_pointwise_forward(x: &Tensor, layer: &DynamicPointwiseLayer) -> Result<Tensor> {
    Layer::Dynamic(layer.clone()).forward(x)
}
