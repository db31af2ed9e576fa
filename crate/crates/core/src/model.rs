//! A small pre-norm transformer encoder classifier with a pluggable
//! normalization slot.
//!
//! Each block computes `x + DropPath(Attn(N(x)))` and then
//! `x + DropPath(FFN(N(x)))`; a final `N` precedes a linear head applied to
//! mean-pooled tokens. Every `N` is an instance of the configured slot.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::funcs::{erf_eval, ConstructionGroup, DeclaredProps, GrowthClass, Monotonicity, PointwiseFn};
use crate::layers::{init_layer, Layer, NormSlot, DEFAULT_ALPHA, DEFAULT_NORM_EPSILON};
use crate::tensor::Tensor;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTransformerConfig {
    pub depth: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub norm_slot: NormSlot,
    pub drop_path_rate: f64,
    pub seed: u64,
    pub alpha0: f64,
    pub norm_epsilon: f64,
}

impl Default for ToyTransformerConfig {
    fn default() -> Self {
        ToyTransformerConfig {
            depth: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            seq_len: 16,
            input_dim: 16,
            n_classes: 2,
            norm_slot: NormSlot::Derf,
            drop_path_rate: 0.0,
            seed: 0,
            alpha0: DEFAULT_ALPHA,
            norm_epsilon: DEFAULT_NORM_EPSILON,
        }
    }
}

impl ToyTransformerConfig {
    /// Every violated constraint, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, val) in [
            ("depth", self.depth),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("seq_len", self.seq_len),
            ("input_dim", self.input_dim),
        ] {
            if val == 0 {
                v.push(format!("{name} must be >= 1"));
            }
        }
        if self.n_classes < 2 {
            v.push(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.n_heads > 0 && !self.d_model.is_multiple_of(self.n_heads) {
            v.push(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            v.push(format!("drop_path_rate must lie in [0, 1), got {}", self.drop_path_rate));
        }
        if !self.alpha0.is_finite() {
            v.push(format!("alpha0 must be finite, got {}", self.alpha0));
        }
        if !(self.norm_epsilon > 0.0) {
            v.push(format!("norm_epsilon must be > 0, got {}", self.norm_epsilon));
        }
        if let NormSlot::Dynamic { func, .. } = &self.norm_slot {
            if let Err(e) = func.resolve() {
                v.push(format!("norm_slot: {e}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Normalization positions: two per block plus the final one.
    pub fn norm_slot_count(&self) -> usize {
        2 * self.depth + 1
    }
}

/// Inputs `[B, T, C_in]` and one label per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyBatch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl ToyBatch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.ndim() != 3 || inputs.shape()[0] != labels.len() {
            return Err(Error::shape("batch", inputs.shape(), &[labels.len()]));
        }
        Ok(ToyBatch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub enum Mode<'a> {
    /// Stochastic depth active, sampled from `rng`.
    Train(&'a mut dyn RngCore),
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..fan_in * fan_out).map(|_| trunc_normal(rng, INIT_STD)).collect();
        Linear {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("sized"),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    fn apply(&self, tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var> {
        let h = tape.matmul(x, p[0])?;
        tape.add_trailing(h, p[1])
    }
}

/// Normal draw rejected outside ±2σ.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub norm_attn: Layer,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub norm_ffn: Layer,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Clone, Debug)]
pub struct ToyTransformer {
    config: ToyTransformerConfig,
    pub embed: Linear,
    pub blocks: Vec<Block>,
    pub final_norm: Layer,
    pub head: Linear,
}

/// `x·Φ(x)` with the exact Gaussian CDF.
pub fn gelu() -> PointwiseFn {
    let phi = |x: f64| 0.5 * (1.0 + erf_eval(x / std::f64::consts::SQRT_2));
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    PointwiseFn::new(
        "gelu",
        "x * Phi(x)",
        move |x| x * phi(x),
        move |x| phi(x) + x * pdf(x),
        DeclaredProps::unbounded(GrowthClass::LinearOrFaster).with_monotonic(Monotonicity::NonMonotonic),
        ConstructionGroup::Natural,
    )
}

impl ToyTransformer {
    /// Builds a model with truncated-normal linear weights. Norm slots draw no
    /// randomness, so models differing only in the slot share every other weight.
    pub fn build(config: ToyTransformerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (c, ff) = (config.d_model, config.d_ff);
        let norm = || init_layer(&config.norm_slot, c, config.alpha0, config.norm_epsilon);
        let embed = Linear::init(config.input_dim, c, &mut rng);
        let mut blocks = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            blocks.push(Block {
                norm_attn: norm()?,
                wq: Linear::init(c, c, &mut rng),
                wk: Linear::init(c, c, &mut rng),
                wv: Linear::init(c, c, &mut rng),
                wo: Linear::init(c, c, &mut rng),
                norm_ffn: norm()?,
                ff_in: Linear::init(c, ff, &mut rng),
                ff_out: Linear::init(ff, c, &mut rng),
            });
        }
        let final_norm = norm()?;
        let head = Linear::init(c, config.n_classes, &mut rng);
        Ok(ToyTransformer {
            config,
            embed,
            blocks,
            final_norm,
            head,
        })
    }

    pub fn config(&self) -> &ToyTransformerConfig {
        &self.config
    }

    pub fn norm_layers(&self) -> Vec<&Layer> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.push(&b.norm_attn);
            v.push(&b.norm_ffn);
        }
        v.push(&self.final_norm);
        v
    }

    /// Named parameters in canonical order; [`ToyTransformer::forward`] returns
    /// handles in the same order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        push_linear(&mut out, "embed", &self.embed);
        for (i, b) in self.blocks.iter().enumerate() {
            push_layer(&mut out, &format!("blocks.{i}.norm_attn"), &b.norm_attn);
            push_linear(&mut out, &format!("blocks.{i}.attn.q"), &b.wq);
            push_linear(&mut out, &format!("blocks.{i}.attn.k"), &b.wk);
            push_linear(&mut out, &format!("blocks.{i}.attn.v"), &b.wv);
            push_linear(&mut out, &format!("blocks.{i}.attn.o"), &b.wo);
            push_layer(&mut out, &format!("blocks.{i}.norm_ffn"), &b.norm_ffn);
            push_linear(&mut out, &format!("blocks.{i}.ffn.in"), &b.ff_in);
            push_linear(&mut out, &format!("blocks.{i}.ffn.out"), &b.ff_out);
        }
        push_layer(&mut out, "final_norm", &self.final_norm);
        push_linear(&mut out, "head", &self.head);
        out
    }

    /// Mutable view of [`ToyTransformer::params`], same order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend([&mut self.embed.weight, &mut self.embed.bias]);
        for b in &mut self.blocks {
            out.extend(b.norm_attn.params_mut().into_iter().map(|(_, t)| t));
            for l in [&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo] {
                out.extend([&mut l.weight, &mut l.bias]);
            }
            out.extend(b.norm_ffn.params_mut().into_iter().map(|(_, t)| t));
            out.extend([&mut b.ff_in.weight, &mut b.ff_in.bias]);
            out.extend([&mut b.ff_out.weight, &mut b.ff_out.bias]);
        }
        out.extend(self.final_norm.params_mut().into_iter().map(|(_, t)| t));
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records the forward pass and returns the `[B, n_classes]` logits plus
    /// the parameter handles. Parameters are leaves when `track` is set and
    /// constants otherwise.
    pub fn forward(&self, tape: &mut Tape, inputs: &Tensor, mode: Mode<'_>, track: bool) -> Result<(Var, Vec<Var>)> {
        let cfg = &self.config;
        let s = inputs.shape();
        if s.len() != 3 || s[1] != cfg.seq_len || s[2] != cfg.input_dim {
            return Err(Error::shape("model input", s, &[0, cfg.seq_len, cfg.input_dim]));
        }
        let (b, t, c) = (s[0], cfg.seq_len, cfg.d_model);
        let params: Vec<Var> = self
            .params()
            .into_iter()
            .map(|(_, p)| if track { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        let mut mode = mode;
        let mut cursor = 0usize;
        let mut take = |n: usize| {
            let out = &params[cursor..cursor + n];
            cursor += n;
            out
        };

        let x_in = tape.constant(inputs.reshape(&[b * t, cfg.input_dim])?);
        let mut x = self.embed.apply(tape, x_in, take(2))?;
        let gelu = gelu();
        for blk in &self.blocks {
            let h = blk.norm_attn.apply(tape, x, take(blk.norm_attn.params().len()))?;
            let q = blk.wq.apply(tape, h, take(2))?;
            let k = blk.wk.apply(tape, h, take(2))?;
            let v = blk.wv.apply(tape, h, take(2))?;
            let a = attention(tape, q, k, v, b, t, c, cfg.n_heads)?;
            let a = blk.wo.apply(tape, a, take(2))?;
            let a = drop_path(tape, a, b, t, cfg.drop_path_rate, &mut mode)?;
            x = tape.add(x, a)?;

            let h = blk.norm_ffn.apply(tape, x, take(blk.norm_ffn.params().len()))?;
            let h = blk.ff_in.apply(tape, h, take(2))?;
            let h = tape.map(h, &gelu);
            let h = blk.ff_out.apply(tape, h, take(2))?;
            let h = drop_path(tape, h, b, t, cfg.drop_path_rate, &mut mode)?;
            x = tape.add(x, h)?;
        }
        let x = self.final_norm.apply(tape, x, take(self.final_norm.params().len()))?;
        let x = tape.reshape(x, &[b, t, c])?;
        let pooled = tape.mean_axis(x, 1)?;
        let logits = self.head.apply(tape, pooled, take(2))?;
        Ok((logits, params))
    }

    /// Eval-mode logits without gradient tracking.
    pub fn logits(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (l, _) = self.forward(&mut tape, inputs, Mode::Eval, false)?;
        Ok(tape.value(l).clone())
    }

    /// Mean cross-entropy and its gradient for every parameter, in
    /// [`ToyTransformer::params`] order.
    pub fn loss_and_grads(&self, batch: &ToyBatch, mode: Mode<'_>) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let (logits, params) = self.forward(&mut tape, &batch.inputs, mode, true)?;
        let loss = tape.cross_entropy(logits, &batch.labels)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        let g = params
            .iter()
            .map(|&p| grads.get_or_zeros(p, tape.value(p)))
            .collect();
        Ok((value, g))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, batch: &ToyBatch, mode: Mode<'_>) -> Result<f64> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, &batch.inputs, mode, false)?;
        let loss = tape.cross_entropy(logits, &batch.labels)?;
        Ok(tape.value(loss).data()[0])
    }
}

fn push_linear<'a>(out: &mut Vec<(String, &'a Tensor)>, name: &str, l: &'a Linear) {
    out.push((format!("{name}.weight"), &l.weight));
    out.push((format!("{name}.bias"), &l.bias));
}

fn push_layer<'a>(out: &mut Vec<(String, &'a Tensor)>, name: &str, l: &'a Layer) {
    for (p, t) in l.params() {
        out.push((format!("{name}.{p}"), t));
    }
}

/// Multi-head self-attention over `[B·T, C]` projections.
#[allow(clippy::too_many_arguments)]
fn attention(tape: &mut Tape, q: Var, k: Var, v: Var, b: usize, t: usize, c: usize, heads: usize) -> Result<Var> {
    let dh = c / heads;
    let split = |tape: &mut Tape, x: Var| -> Result<Var> {
        let x = tape.reshape(x, &[b, t, heads, dh])?;
        let x = tape.permute(x, &[0, 2, 1, 3])?;
        tape.reshape(x, &[b * heads, t, dh])
    };
    let q = split(tape, q)?;
    let k = split(tape, k)?;
    let v = split(tape, v)?;
    let kt = tape.permute(k, &[0, 2, 1])?;
    let scores = tape.batch_matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
    let attn = tape.softmax(scores, 2)?;
    let out = tape.batch_matmul(attn, v)?;
    let out = tape.reshape(out, &[b, heads, t, dh])?;
    let out = tape.permute(out, &[0, 2, 1, 3])?;
    tape.reshape(out, &[b * t, c])
}

/// Per-sample residual-branch dropping, rescaled by `1/(1 − p)`. A no-op in
/// eval mode or at `p = 0`, where no randomness is drawn.
fn drop_path(tape: &mut Tape, x: Var, b: usize, t: usize, p: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let rng = match mode {
        Mode::Train(rng) if p > 0.0 => rng,
        _ => return Ok(x),
    };
    let keep = 1.0 - p;
    let mut factors = Vec::with_capacity(b * t);
    for _ in 0..b {
        let f = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        factors.extend(std::iter::repeat_n(f, t));
    }
    tape.scale_rows(x, &factors)
}
