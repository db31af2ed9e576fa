//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass in execution order,
//! so a node's inputs always precede it. [`Tape::backward`] walks the records
//! in reverse and accumulates adjoints. The tape is rebuilt for each forward
//! pass; nothing is cached between passes.

use crate::error::{Error, Result};
use crate::funcs::PointwiseFn;
use crate::layers::NormKind;
use crate::tensor::{gemm, gemm_at, gemm_bt, invert_axes, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    AddTrailing(Var, Var),
    MulTrailing(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Softmax(Var, usize),
    Sum(Var),
    Mean(Var),
    MeanAxis(Var, usize),
    Map(Var, PointwiseFn),
    ScaleRows(Var, Vec<f64>),
    Norm {
        x: Var,
        gamma: Var,
        beta: Option<Var>,
        kind: NormKind,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    DynPointwise {
        x: Var,
        alpha: Var,
        shift: Option<Var>,
        gamma: Var,
        beta: Var,
        f: PointwiseFn,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every recorded node, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the value does not influence the loss or does not require
    /// gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros of `like`'s shape when it received none.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn outer_len_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = self.rg(inputs);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.record(v, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.record(v, Op::Mul(a, b), &[a, b]))
    }

    fn check_trailing(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let c = self.value(a).last_dim();
        if self.value(b).ndim() != 1 || self.value(b).len() != c {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(c)
    }

    /// `a + b` with `b` a vector broadcast over the last axis of `a`.
    pub fn add_trailing(&mut self, a: Var, b: Var) -> Result<Var> {
        let c = self.check_trailing("add_trailing", a, b)?;
        let bias = self.value(b).data();
        let mut v = self.value(a).clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += bias[i % c];
        }
        Ok(self.record(v, Op::AddTrailing(a, b), &[a, b]))
    }

    /// `a * w` with `w` a vector broadcast over the last axis of `a`.
    pub fn mul_trailing(&mut self, a: Var, w: Var) -> Result<Var> {
        let c = self.check_trailing("mul_trailing", a, w)?;
        let scale = self.value(w).data();
        let mut v = self.value(a).clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x *= scale[i % c];
        }
        Ok(self.record(v, Op::MulTrailing(a, w), &[a, w]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.record(v, Op::Scale(a, c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.record(v, Op::MatMul(a, b), &[a, b]))
    }

    /// `[N, m, k] @ [N, k, n] → [N, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("batch_matmul", sa, sb));
        }
        let (nb, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; nb * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..nb {
            gemm(
                &ad[i * m * k..(i + 1) * m * k],
                &bd[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let v = Tensor::new(vec![nb, m, n], out)?;
        Ok(self.record(v, Op::BatchMatMul(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.record(v, Op::Reshape(a), &[a]))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let v = self.value(a).permute(axes)?;
        Ok(self.record(v, Op::Permute(a, axes.to_vec()), &[a]))
    }

    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() {
            return Err(Error::shape("softmax", x.shape(), &[axis]));
        }
        let v = softmax_values(x, axis);
        Ok(self.record(v, Op::Softmax(a, axis), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.record(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.record(v, Op::Mean(a), &[a])
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() {
            return Err(Error::shape("mean_axis", x.shape(), &[axis]));
        }
        let (outer, len, inner) = outer_len_inner(x.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        let d = x.data();
        for o in 0..outer {
            for j in 0..len {
                let src = &d[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (acc, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let v = Tensor::new(shape, out)?;
        Ok(self.record(v, Op::MeanAxis(a, axis), &[a]))
    }

    /// Applies `f` elementwise.
    pub fn map(&mut self, a: Var, f: &PointwiseFn) -> Var {
        let v = self.value(a).map(|x| f.eval(x));
        self.record(v, Op::Map(a, f.clone()), &[a])
    }

    /// Multiplies every slice along the leading axis by a constant factor.
    pub fn scale_rows(&mut self, a: Var, factors: &[f64]) -> Result<Var> {
        let x = self.value(a);
        if x.ndim() == 0 || x.shape()[0] != factors.len() {
            return Err(Error::shape("scale_rows", x.shape(), &[factors.len()]));
        }
        let per = x.len() / factors.len();
        let mut v = x.clone();
        for (i, val) in v.data_mut().iter_mut().enumerate() {
            *val *= factors[i / per];
        }
        Ok(self.record(v, Op::ScaleRows(a, factors.to_vec()), &[a]))
    }

    /// Per-token normalization over the last axis followed by the affine map.
    pub fn norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Option<Var>,
        kind: NormKind,
        eps: f64,
    ) -> Result<Var> {
        let c = self.check_trailing("norm", x, gamma)?;
        if let Some(b) = beta {
            self.check_trailing("norm", x, b)?;
        }
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = beta.map(|b| self.value(b).data());
        let rows = xv.len() / c;
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * c..(r + 1) * c];
            let (mu, ms) = match kind {
                NormKind::LayerNorm => {
                    let mu = row.iter().sum::<f64>() / c as f64;
                    let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / c as f64;
                    (mu, var)
                }
                NormKind::RmsNorm => (0.0, row.iter().map(|v| v * v).sum::<f64>() / c as f64),
            };
            let rs = 1.0 / (ms + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mu) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = g[j] * h + b.map_or(0.0, |b| b[j]);
            }
        }
        let v = Tensor::new(self.shape(x).to_vec(), out)?;
        let mut inputs = vec![x, gamma];
        inputs.extend(beta);
        Ok(self.record(
            v,
            Op::Norm {
                x,
                gamma,
                beta,
                kind,
                xhat,
                rstd,
            },
            &inputs,
        ))
    }

    /// `y = γ_c · f(α·x + s) + β_c` over the last axis `c`; `s` is a scalar,
    /// a per-channel vector, or absent.
    pub fn dyn_pointwise(
        &mut self,
        x: Var,
        alpha: Var,
        shift: Option<Var>,
        gamma: Var,
        beta: Var,
        f: &PointwiseFn,
    ) -> Result<Var> {
        let c = self.check_trailing("dyn_pointwise", x, gamma)?;
        self.check_trailing("dyn_pointwise", x, beta)?;
        if self.value(alpha).len() != 1 {
            return Err(Error::shape("dyn_pointwise alpha", self.shape(alpha), &[1]));
        }
        if let Some(s) = shift {
            let n = self.value(s).len();
            if n != 1 && n != c {
                return Err(Error::shape("dyn_pointwise shift", self.shape(s), &[c]));
            }
        }
        let a = self.value(alpha).data()[0];
        let s = shift.map(|s| self.value(s).data());
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut v = self.value(x).clone();
        for (i, val) in v.data_mut().iter_mut().enumerate() {
            let ch = i % c;
            let sv = s.map_or(0.0, |s| if s.len() == 1 { s[0] } else { s[ch] });
            *val = g[ch] * f.eval(a * *val + sv) + b[ch];
        }
        let mut inputs = vec![x, alpha, gamma, beta];
        inputs.extend(shift);
        Ok(self.record(
            v,
            Op::DynPointwise {
                x,
                alpha,
                shift,
                gamma,
                beta,
                f: f.clone(),
            },
            &inputs,
        ))
    }

    /// Mean softmax cross-entropy of `[B, K]` logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        if l.ndim() != 2 || l.shape()[0] != labels.len() {
            return Err(Error::shape("cross_entropy", l.shape(), &[labels.len()]));
        }
        let k = l.shape()[1];
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Contract(format!("label {bad} out of range for {k} classes")));
        }
        let probs = softmax_values(l, 1).into_data();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[i * k + y].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / labels.len() as f64;
        let op = Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.record(Tensor::scalar(loss), op, &[logits]))
    }

    /// Adjoints of `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                self.acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                self.acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
            }
            Op::AddTrailing(a, b) => {
                self.acc(grads, *a, g.clone());
                let c = self.value(*b).len();
                let mut db = vec![0.0; c];
                for (j, v) in g.data().iter().enumerate() {
                    db[j % c] += v;
                }
                self.acc(grads, *b, Tensor::from_vec(db));
            }
            Op::MulTrailing(a, w) => {
                let wv = self.value(*w).data();
                let c = wv.len();
                let av = self.value(*a).data();
                let mut da = g.clone();
                let mut dw = vec![0.0; c];
                for (j, d) in da.data_mut().iter_mut().enumerate() {
                    dw[j % c] += *d * av[j];
                    *d *= wv[j % c];
                }
                self.acc(grads, *a, da);
                self.acc(grads, *w, Tensor::from_vec(dw));
            }
            Op::Scale(a, c) => self.acc(grads, *a, g.map(|x| x * c)),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    gemm_bt(g.data(), bv.data(), &mut da, m, n, k);
                    self.acc(grads, *a, Tensor::new(vec![m, k], da)?);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    gemm_at(av.data(), g.data(), &mut db, k, m, n);
                    self.acc(grads, *b, Tensor::new(vec![k, n], db)?);
                }
            }
            Op::BatchMatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (nb, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                let gd = g.data();
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; nb * m * k];
                    for t in 0..nb {
                        gemm_bt(
                            &gd[t * m * n..(t + 1) * m * n],
                            &bv.data()[t * k * n..(t + 1) * k * n],
                            &mut da[t * m * k..(t + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    self.acc(grads, *a, Tensor::new(vec![nb, m, k], da)?);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; nb * k * n];
                    for t in 0..nb {
                        gemm_at(
                            &av.data()[t * m * k..(t + 1) * m * k],
                            &gd[t * m * n..(t + 1) * m * n],
                            &mut db[t * k * n..(t + 1) * k * n],
                            k,
                            m,
                            n,
                        );
                    }
                    self.acc(grads, *b, Tensor::new(vec![nb, k, n], db)?);
                }
            }
            Op::Reshape(a) => self.acc(grads, *a, g.reshape(self.shape(*a))?),
            Op::Permute(a, axes) => self.acc(grads, *a, g.permute(&invert_axes(axes))?),
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let (outer, len, inner) = outer_len_inner(y.shape(), *axis);
                let (yd, gd) = (y.data(), g.data());
                let mut dx = vec![0.0; yd.len()];
                for o in 0..outer {
                    for inn in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + inn;
                        let dot: f64 = (0..len).map(|j| gd[at(j)] * yd[at(j)]).sum();
                        for j in 0..len {
                            dx[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                self.acc(grads, *a, Tensor::new(y.shape().to_vec(), dx)?);
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                self.acc(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let gv = g.data()[0] / n;
                self.acc(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::MeanAxis(a, axis) => {
                let shape = self.shape(*a).to_vec();
                let (outer, len, inner) = outer_len_inner(&shape, *axis);
                let gd = g.data();
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        for inn in 0..inner {
                            dx[(o * len + j) * inner + inn] = gd[o * inner + inn] / len as f64;
                        }
                    }
                }
                self.acc(grads, *a, Tensor::new(shape, dx)?);
            }
            Op::Map(a, f) => {
                let dx = g.zip_map(self.value(*a), |gv, x| gv * f.deriv(x))?;
                self.acc(grads, *a, dx);
            }
            Op::ScaleRows(a, factors) => {
                let per = g.len() / factors.len();
                let mut dx = g.clone();
                for (j, v) in dx.data_mut().iter_mut().enumerate() {
                    *v *= factors[j / per];
                }
                self.acc(grads, *a, dx);
            }
            Op::Norm {
                x,
                gamma,
                beta,
                kind,
                xhat,
                rstd,
            } => {
                let gam = self.value(*gamma).data();
                let c = gam.len();
                let gd = g.data();
                let rows = gd.len() / c;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; gd.len()];
                for r in 0..rows {
                    let span = r * c..(r + 1) * c;
                    let (gr, hr) = (&gd[span.clone()], &xhat[span.clone()]);
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..c {
                        dgamma[j] += gr[j] * hr[j];
                        dbeta[j] += gr[j];
                        let dh = gr[j] * gam[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= c as f64;
                    mean_dh_h /= c as f64;
                    let rs = rstd[r];
                    for j in 0..c {
                        let dh = gr[j] * gam[j];
                        dx[r * c + j] = match kind {
                            NormKind::LayerNorm => rs * (dh - mean_dh - hr[j] * mean_dh_h),
                            NormKind::RmsNorm => rs * (dh - hr[j] * mean_dh_h),
                        };
                    }
                }
                self.acc(grads, *x, Tensor::new(g.shape().to_vec(), dx)?);
                self.acc(grads, *gamma, Tensor::from_vec(dgamma));
                if let Some(b) = beta {
                    self.acc(grads, *b, Tensor::from_vec(dbeta));
                }
            }
            Op::DynPointwise {
                x,
                alpha,
                shift,
                gamma,
                beta,
                f,
            } => {
                let xv = self.value(*x).data();
                let a = self.value(*alpha).data()[0];
                let s = shift.map(|s| self.value(s).data());
                let gam = self.value(*gamma).data();
                let c = gam.len();
                let mut dx = vec![0.0; xv.len()];
                let mut dalpha = 0.0;
                let mut ds = vec![0.0; s.map_or(0, <[f64]>::len)];
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (i, (&gv, &xi)) in g.data().iter().zip(xv).enumerate() {
                    let ch = i % c;
                    let sv = s.map_or(0.0, |s| if s.len() == 1 { s[0] } else { s[ch] });
                    let u = a * xi + sv;
                    dgamma[ch] += gv * f.eval(u);
                    dbeta[ch] += gv;
                    let du = gv * gam[ch] * f.deriv(u);
                    dx[i] = du * a;
                    dalpha += du * xi;
                    match ds.len() {
                        0 => {}
                        1 => ds[0] += du,
                        _ => ds[ch] += du,
                    }
                }
                self.acc(grads, *x, Tensor::new(g.shape().to_vec(), dx)?);
                self.acc(grads, *alpha, Tensor::new(self.shape(*alpha).to_vec(), vec![dalpha])?);
                if let Some(sv) = shift {
                    self.acc(grads, *sv, Tensor::new(self.shape(*sv).to_vec(), ds)?);
                }
                self.acc(grads, *gamma, Tensor::from_vec(dgamma));
                self.acc(grads, *beta, Tensor::from_vec(dbeta));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g.data()[0] / labels.len() as f64;
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    d[i * k + y] -= 1.0;
                }
                for v in &mut d {
                    *v *= scale;
                }
                self.acc(grads, *logits, Tensor::new(self.shape(*logits).to_vec(), d)?);
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax along `axis`.
pub fn softmax_values(x: &Tensor, axis: usize) -> Tensor {
    let (outer, len, inner) = outer_len_inner(x.shape(), axis);
    let d = x.data();
    let mut out = vec![0.0; d.len()];
    for o in 0..outer {
        for inn in 0..inner {
            let at = |j: usize| (o * len + j) * inner + inn;
            let max = (0..len).map(|j| d[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..len {
                let e = (d[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..len {
                out[at(j)] /= total;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("shape preserved")
}
