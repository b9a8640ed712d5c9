use std::sync::atomic::{AtomicU32, Ordering};

use super::kernels::{self, GroupStats};
use super::{checked_mode, Real, Tensor};
use crate::{Error, Result};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Silu(Var),
    Relu(Var),
    MatMul(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: Var,
        gain: Var,
        bias: Var,
        groups: usize,
        stats: GroupStats<F>,
    },
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    Upsample2x(Var),
    AddChannelwise {
        x: Var,
        v: Var,
        per_item: bool,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Ordered record of executed operations. Nodes are appended after their
/// inputs, so index order is a topological order of the graph.
///
/// A tape built with [`Tape::no_grad`] evaluates the same kernels but keeps
/// no backward information.
#[derive(Debug)]
pub struct Tape<F: Real = f32> {
    id: u32,
    nodes: Vec<Node<F>>,
    recording: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn no_grad() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (parameter or image).
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        let needs = self.recording;
        self.push_raw(value, Op::Leaf, needs)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index as usize].value
    }

    pub fn contains(&self, v: Var) -> bool {
        v.tape == self.id && (v.index as usize) < self.nodes.len()
    }

    fn check(&self, v: Var) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::ForeignVar)
        }
    }

    fn push_raw(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, index }
    }

    fn push(&mut self, name: &'static str, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> Result<Var> {
        if checked_mode() && !value.all_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let needs = self.recording && inputs.iter().any(|v| self.nodes[v.index as usize].needs_grad);
        let op = if self.recording { op } else { Op::Leaf };
        Ok(self.push_raw(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push("sub", v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push("mul", v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: F) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(|x| x * s);
        self.push("scale", v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: F) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(|x| x + s);
        self.push("add_scalar", v, Op::AddScalar(a), &[a])
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(kernels::silu);
        self.push("silu", v, Op::Silu(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let v = self.value(a).map(|x| x.max(F::zero()));
        self.push("relu", v, Op::Relu(a), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let v = kernels::matmul(self.value(a), self.value(b))?;
        self.push("matmul", v, Op::MatMul(a, b), &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = bias {
            self.check(b)?;
        }
        let v = kernels::conv2d(self.value(x), self.value(w), bias.map(|b| self.value(b)), stride, pad)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(
            "conv2d",
            v,
            Op::Conv2d {
                x,
                w,
                bias,
                stride,
                pad,
            },
            &inputs,
        )
    }

    pub fn group_norm(&mut self, x: Var, groups: usize, gain: Var, bias: Var) -> Result<Var> {
        for v in [x, gain, bias] {
            self.check(v)?;
        }
        let (v, stats) = kernels::group_norm(self.value(x), groups, self.value(gain), self.value(bias))?;
        self.push(
            "group_norm",
            v,
            Op::GroupNorm {
                x,
                gain,
                bias,
                groups,
                stats,
            },
            &[x, gain, bias],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let v = self.value(x).clone().reshape(shape)?;
        self.push("reshape", v, Op::Reshape(x), &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let refs: Vec<&Tensor<F>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = kernels::concat(&refs, axis)?;
        self.push(
            "concat",
            v,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.check(x)?;
        let v = kernels::slice(self.value(x), axis, start, end)?;
        self.push("slice", v, Op::Slice { x, axis, start }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = Tensor::scalar(self.value(x).sum());
        self.push("sum", v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = Tensor::scalar(self.value(x).mean());
        self.push("mean", v, Op::Mean(x), &[x])
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let v = kernels::upsample2x(self.value(x))?;
        self.push("upsample2x", v, Op::Upsample2x(x), &[x])
    }

    /// Adds `v[c]` (or `v[b, c]` with `per_item`) to every element of channel `c`.
    pub fn add_channelwise(&mut self, x: Var, v: Var, per_item: bool) -> Result<Var> {
        self.check(x)?;
        self.check(v)?;
        let out = kernels::add_channelwise(self.value(x), self.value(v), per_item)?;
        self.push("add_channelwise", out, Op::AddChannelwise { x, v, per_item }, &[x, v])
    }

    /// Reverse sweep from a scalar `loss`. Gradients are accumulated
    /// additively when a value feeds several consumers.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        self.check(loss)?;
        if !self.recording {
            return Err(Error::NotRecording);
        }
        let root = &self.nodes[loss.index as usize];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index as usize] = Some(Tensor::full(root.value.shape(), F::one()));
        for i in (0..=loss.index as usize).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index as usize].needs_grad
    }

    fn propagate(&self, node: &Node<F>, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) -> Result<()> {
        let mut acc = |v: Var, t: Tensor<F>| accumulate(grads, v, t);
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.clone());
                }
                if self.wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.clone());
                }
                if self.wants(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.zip_map(self.value(*b), "mul", |x, y| x * y)?);
                }
                if self.wants(*b) {
                    acc(*b, g.zip_map(self.value(*a), "mul", |x, y| x * y)?);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, g.map(|x| x * s));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Silu(a) => acc(*a, g.zip_map(self.value(*a), "silu", |d, x| d * kernels::silu_grad(x))?),
            Op::Relu(a) => acc(
                *a,
                g.zip_map(self.value(*a), "relu", |d, x| if x > F::zero() { d } else { F::zero() })?,
            ),
            Op::MatMul(a, b) => {
                let (ga, gb) = kernels::matmul_backward(self.value(*a), self.value(*b), g);
                if self.wants(*a) {
                    acc(*a, ga);
                }
                if self.wants(*b) {
                    acc(*b, gb);
                }
            }
            Op::Conv2d {
                x,
                w,
                bias,
                stride,
                pad,
            } => {
                let need_b = bias.is_some_and(|b| self.wants(b));
                let (dx, dw, db) = kernels::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *stride,
                    *pad,
                    (self.wants(*x), self.wants(*w), need_b),
                )?;
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
                if let (Some(b), Some(db)) = (bias, db) {
                    acc(*b, db);
                }
            }
            Op::GroupNorm {
                x,
                gain,
                bias,
                groups,
                stats,
            } => {
                let (dx, dgain, dbias) =
                    kernels::group_norm_backward(self.value(*x), *groups, self.value(*gain), stats, g);
                if self.wants(*x) {
                    acc(*x, dx);
                }
                if self.wants(*gain) {
                    acc(*gain, dgain);
                }
                if self.wants(*bias) {
                    acc(*bias, dbias);
                }
            }
            Op::Reshape(x) => acc(*x, g.clone().reshape(self.value(*x).shape())?),
            Op::Concat { parts, axis } => {
                let mut start = 0;
                for &p in parts {
                    let n = self.value(p).shape()[*axis];
                    if self.wants(p) {
                        acc(p, kernels::slice(g, *axis, start, start + n)?);
                    }
                    start += n;
                }
            }
            Op::Slice { x, axis, start } => {
                acc(*x, kernels::slice_backward(g, self.value(*x).shape(), *axis, *start));
            }
            Op::Sum(x) => acc(*x, Tensor::full(self.value(*x).shape(), g.item())),
            Op::Mean(x) => {
                let src = self.value(*x);
                let n = F::from_usize(src.len()).unwrap();
                acc(*x, Tensor::full(src.shape(), g.item() / n));
            }
            Op::Upsample2x(x) => acc(*x, kernels::upsample2x_backward(g)),
            Op::AddChannelwise { x, v, per_item } => {
                if self.wants(*x) {
                    acc(*x, g.clone());
                }
                if self.wants(*v) {
                    acc(*v, kernels::add_channelwise_backward(g, *per_item));
                }
            }
        }
        Ok(())
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], v: Var, t: Tensor<F>) {
    let slot = &mut grads[v.index as usize];
    match slot {
        Some(existing) => {
            for (e, &x) in existing.data_mut().iter_mut().zip(t.data()) {
                *e = *e + x;
            }
        }
        None => *slot = Some(t),
    }
}

/// Result of [`Tape::backward`]: one optional gradient per recorded value.
#[derive(Debug)]
pub struct Gradients<F: Real = f32> {
    tape: u32,
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Result<Option<&Tensor<F>>> {
        if v.tape != self.tape || v.index as usize >= self.grads.len() {
            return Err(Error::ForeignVar);
        }
        Ok(self.grads[v.index as usize].as_ref())
    }

    /// Like [`Gradients::get`] but moves the tensor out, substituting zeros
    /// of `shape` for disconnected values.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Result<Tensor<F>> {
        if v.tape != self.tape || v.index as usize >= self.grads.len() {
            return Err(Error::ForeignVar);
        }
        Ok(self.grads[v.index as usize]
            .take()
            .unwrap_or_else(|| Tensor::zeros(shape)))
    }
}
