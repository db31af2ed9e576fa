//! AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        // lr = 0 is accepted: it freezes the weights, which is handy for probes.
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            v.push(format!("optimizer.lr must be finite and >= 0, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            v.push(format!("optimizer.weight_decay must be >= 0, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                v.push(format!("optimizer.{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            v.push(format!("optimizer.eps must be > 0, got {}", self.eps));
        }
        v
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    #[default]
    Cosine,
}

/// Learning rate for 0-based `step`: linear warmup over `warmup` steps, then
/// constant or cosine decay to zero at `total`.
pub fn lr_at(schedule: LrSchedule, base: f64, step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    match schedule {
        LrSchedule::Constant => base,
        LrSchedule::Cosine => {
            let span = total.saturating_sub(warmup).max(1) as f64;
            let progress = ((step - warmup) as f64 / span).min(1.0);
            0.5 * base * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}

pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    /// Per-parameter switch for weight decay.
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    /// One state slot per parameter shape; `decay[i]` enables weight decay for
    /// parameter `i`.
    pub fn new(cfg: AdamWConfig, shapes: &[&[usize]], decay: Vec<bool>) -> Result<Self> {
        let bad = cfg.violations();
        if !bad.is_empty() {
            return Err(Error::Config(bad));
        }
        if decay.len() != shapes.len() {
            return Err(Error::Contract("one decay flag per parameter".into()));
        }
        Ok(AdamW {
            cfg,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            decay,
            t: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamWConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.cfg;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("adamw", p.shape(), g.shape()));
            }
            let wd = if self.decay[i] { lr * weight_decay } else { 0.0 };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                *w -= wd * *w + lr * update;
            }
        }
        Ok(())
    }
}
