//! Forward and backward kernels shared by eager evaluation and the tape.

use super::{Real, Tensor};
use crate::{Error, Result};

pub const GROUP_NORM_EPS: f64 = 1e-5;

pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

pub fn silu<F: Real>(x: F) -> F {
    x * sigmoid(x)
}

pub fn silu_grad<F: Real>(x: F) -> F {
    let s = sigmoid(x);
    s * (F::one() + x * (F::one() - s))
}

fn dims4(op: &'static str, t: &Tensor<impl Real>) -> Result<[usize; 4]> {
    match *t.shape() {
        [b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(Error::invalid_shape(
            op,
            format!("expected rank 4, got {:?}", t.shape()),
        )),
    }
}

pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k, k2, n) = match (a.shape(), b.shape()) {
        ([m, k], [k2, n]) => (*m, *k, *k2, *n),
        _ => return Err(Error::shape("matmul", a.shape(), b.shape())),
    };
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![F::zero(); m * n];
    F::gemm(m, k, n, a.data(), false, b.data(), false, F::zero(), &mut out);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Returns `(grad_a, grad_b)` for `c = a b` given `grad_c`.
pub fn matmul_backward<F: Real>(a: &Tensor<F>, b: &Tensor<F>, g: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut ga = vec![F::zero(); m * k];
    F::gemm(m, n, k, g.data(), false, b.data(), true, F::zero(), &mut ga);
    let mut gb = vec![F::zero(); k * n];
    F::gemm(k, m, n, a.data(), true, g.data(), false, F::zero(), &mut gb);
    (Tensor::from_parts(vec![m, k], ga), Tensor::from_parts(vec![k, n], gb))
}

/// Geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let (&[b, c, h, wd], &[o, c2, k, k2]) = (x, w) else {
            return Err(Error::shape("conv2d", x, w));
        };
        if c != c2 {
            return Err(Error::shape("conv2d", x, w));
        }
        if k != k2 || k % 2 == 0 {
            return Err(Error::invalid_shape(
                "conv2d",
                format!("kernel must be odd and square, got {k}x{k2}"),
            ));
        }
        if stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::invalid_shape(
                "conv2d",
                format!("stride {stride} pad {pad} on {h}x{wd}"),
            ));
        }
        Ok(Self {
            batch: b,
            cin: c,
            h,
            w: wd,
            cout: o,
            k,
            stride,
            pad,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (wd + 2 * pad - k) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Valid output columns `ox` for which `ox*stride + kj - pad` lies in `0..w`.
    fn valid_range(&self, kj: usize, extent: usize, out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = kj as isize - self.pad as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = (extent as isize - off + s - 1) / s;
        ((lo.max(0) as usize).min(out), (hi.max(0) as usize).min(out))
    }
}

fn im2col<F: Real>(g: &ConvGeom, x: &[F], cols: &mut [F]) {
    let (k, s, ho, wo) = (g.k, g.stride, g.ho, g.wo);
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            let (oy0, oy1) = g.valid_range(ki, g.h, ho);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                let (ox0, ox1) = g.valid_range(kj, g.w, wo);
                for oy in 0..ho {
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if oy < oy0 || oy >= oy1 {
                        line.fill(F::zero());
                        continue;
                    }
                    let iy = oy * s + ki - g.pad;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    line[..ox0].fill(F::zero());
                    line[ox1.max(ox0)..].fill(F::zero());
                    if s == 1 {
                        if ox1 > ox0 {
                            let ix0 = ox0 + kj - g.pad;
                            line[ox0..ox1].copy_from_slice(&src[ix0..ix0 + (ox1 - ox0)]);
                        }
                    } else {
                        for ox in ox0..ox1 {
                            line[ox] = src[ox * s + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(g: &ConvGeom, cols: &[F], dx: &mut [F]) {
    let (k, s, ho, wo) = (g.k, g.stride, g.ho, g.wo);
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..k {
            let (oy0, oy1) = g.valid_range(ki, g.h, ho);
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                let (ox0, ox1) = g.valid_range(kj, g.w, wo);
                for oy in oy0..oy1 {
                    let iy = oy * s + ki - g.pad;
                    let line = &src[oy * wo..(oy + 1) * wo];
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in ox0..ox1 {
                        dst[ox * s + kj - g.pad] = dst[ox * s + kj - g.pad] + line[ox];
                    }
                }
            }
        }
    }
}

/// Cross-correlation with zero padding.
pub fn conv2d<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<F>> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(Error::shape("conv2d bias", b.shape(), &[g.cout]));
        }
    }
    let in_sz = g.cin * g.h * g.w;
    let out_sz = g.cout * g.cols();
    let mut out = vec![F::zero(); g.batch * out_sz];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![F::zero(); g.rows() * g.cols()]
    };
    for bi in 0..g.batch {
        let xb = &x.data()[bi * in_sz..(bi + 1) * in_sz];
        let src: &[F] = if g.is_pointwise() {
            xb
        } else {
            im2col(&g, xb, &mut cols);
            &cols
        };
        let yb = &mut out[bi * out_sz..(bi + 1) * out_sz];
        F::gemm(g.cout, g.rows(), g.cols(), w.data(), false, src, false, F::zero(), yb);
        if let Some(b) = bias {
            for (o, &bv) in b.data().iter().enumerate() {
                for v in &mut yb[o * g.cols()..(o + 1) * g.cols()] {
                    *v = *v + bv;
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.batch, g.cout, g.ho, g.wo], out))
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
/// Only the requested parts are computed.
pub fn conv2d_backward<F: Real>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    grad: &Tensor<F>,
    stride: usize,
    pad: usize,
    need: (bool, bool, bool),
) -> Result<(Option<Tensor<F>>, Option<Tensor<F>>, Option<Tensor<F>>)> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    let (need_x, need_w, need_b) = need;
    let in_sz = g.cin * g.h * g.w;
    let out_sz = g.cout * g.cols();
    let mut dx = need_x.then(|| vec![F::zero(); x.len()]);
    let mut dw = need_w.then(|| vec![F::zero(); w.len()]);
    let pointwise = g.is_pointwise();
    let mut cols = vec![F::zero(); if pointwise { 0 } else { g.rows() * g.cols() }];
    let mut dcols = vec![F::zero(); if need_x && !pointwise { g.rows() * g.cols() } else { 0 }];
    for bi in 0..g.batch {
        let gb = &grad.data()[bi * out_sz..(bi + 1) * out_sz];
        let xb = &x.data()[bi * in_sz..(bi + 1) * in_sz];
        if let Some(dw) = dw.as_mut() {
            let src: &[F] = if pointwise {
                xb
            } else {
                im2col(&g, xb, &mut cols);
                &cols
            };
            F::gemm(g.cout, g.cols(), g.rows(), gb, false, src, true, F::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[bi * in_sz..(bi + 1) * in_sz];
            if pointwise {
                F::gemm(g.rows(), g.cout, g.cols(), w.data(), true, gb, false, F::one(), dxb);
            } else {
                F::gemm(
                    g.rows(),
                    g.cout,
                    g.cols(),
                    w.data(),
                    true,
                    gb,
                    false,
                    F::zero(),
                    &mut dcols,
                );
                col2im(&g, &dcols, dxb);
            }
        }
    }
    let db = need_b.then(|| {
        let mut db = vec![F::zero(); g.cout];
        for bi in 0..g.batch {
            for (o, acc) in db.iter_mut().enumerate() {
                let s: F = grad.data()[bi * out_sz + o * g.cols()..bi * out_sz + (o + 1) * g.cols()]
                    .iter()
                    .copied()
                    .sum();
                *acc = *acc + s;
            }
        }
        Tensor::from_parts(vec![g.cout], db)
    });
    Ok((
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
        db,
    ))
}

/// Per-(batch, group) statistics saved by the group-norm forward pass.
#[derive(Debug, Clone)]
pub struct GroupStats<F> {
    pub mean: Vec<F>,
    pub rstd: Vec<F>,
}

fn check_norm_args<F: Real>(x: &Tensor<F>, groups: usize, gain: &Tensor<F>, bias: &Tensor<F>) -> Result<[usize; 4]> {
    let [b, c, h, w] = dims4("group_norm", x)?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::invalid_shape(
            "group_norm",
            format!("{c} channels not divisible into {groups} groups"),
        ));
    }
    if gain.shape() != [c] || bias.shape() != [c] {
        return Err(Error::shape("group_norm affine", gain.shape(), &[c]));
    }
    Ok([b, c, h, w])
}

pub fn group_norm<F: Real>(
    x: &Tensor<F>,
    groups: usize,
    gain: &Tensor<F>,
    bias: &Tensor<F>,
) -> Result<(Tensor<F>, GroupStats<F>)> {
    let [b, c, h, w] = check_norm_args(x, groups, gain, bias)?;
    let cg = c / groups;
    let span = cg * h * w;
    let hw = h * w;
    let count = F::from_usize(span).unwrap();
    let eps = F::from_f64c(GROUP_NORM_EPS);
    let mut out = vec![F::zero(); x.len()];
    let mut stats = GroupStats {
        mean: Vec::with_capacity(b * groups),
        rstd: Vec::with_capacity(b * groups),
    };
    for gi in 0..b * groups {
        let seg = &x.data()[gi * span..(gi + 1) * span];
        let mean = seg.iter().copied().sum::<F>() / count;
        let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / count;
        let rstd = F::one() / (var + eps).sqrt();
        stats.mean.push(mean);
        stats.rstd.push(rstd);
        let ch0 = (gi % groups) * cg;
        for (j, (&v, o)) in seg.iter().zip(&mut out[gi * span..(gi + 1) * span]).enumerate() {
            let ch = ch0 + j / hw;
            *o = (v - mean) * rstd * gain.data()[ch] + bias.data()[ch];
        }
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), out), stats))
}

/// Returns `(grad_x, grad_gain, grad_bias)`.
pub fn group_norm_backward<F: Real>(
    x: &Tensor<F>,
    groups: usize,
    gain: &Tensor<F>,
    stats: &GroupStats<F>,
    grad: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let cg = c / groups;
    let hw = h * w;
    let span = cg * hw;
    let count = F::from_usize(span).unwrap();
    let mut dx = vec![F::zero(); x.len()];
    let mut dgain = vec![F::zero(); c];
    let mut dbias = vec![F::zero(); c];
    for gi in 0..b * groups {
        let (mean, rstd) = (stats.mean[gi], stats.rstd[gi]);
        let xs = &x.data()[gi * span..(gi + 1) * span];
        let gs = &grad.data()[gi * span..(gi + 1) * span];
        let ch0 = (gi % groups) * cg;
        let mut sum_d = F::zero();
        let mut sum_dx = F::zero();
        for j in 0..span {
            let ch = ch0 + j / hw;
            let xhat = (xs[j] - mean) * rstd;
            dgain[ch] = dgain[ch] + gs[j] * xhat;
            dbias[ch] = dbias[ch] + gs[j];
            let d = gs[j] * gain.data()[ch];
            sum_d = sum_d + d;
            sum_dx = sum_dx + d * xhat;
        }
        let mean_d = sum_d / count;
        let mean_dx = sum_dx / count;
        for j in 0..span {
            let ch = ch0 + j / hw;
            let xhat = (xs[j] - mean) * rstd;
            let d = gs[j] * gain.data()[ch];
            dx[gi * span + j] = rstd * (d - mean_d - xhat * mean_dx);
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], dgain),
        Tensor::from_parts(vec![c], dbias),
    )
}

/// Nearest-neighbour 2x upsampling of a `B x C x H x W` tensor.
pub fn upsample2x<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let [b, c, h, w] = dims4("upsample2x", x)?;
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![F::zero(); b * c * h2 * w2];
    for p in 0..b * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[y * w2 + xx] = src[(y / 2) * w + xx / 2];
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, c, h2, w2], out))
}

pub fn upsample2x_backward<F: Real>(grad: &Tensor<F>) -> Tensor<F> {
    let [b, c, h2, w2] = [grad.shape()[0], grad.shape()[1], grad.shape()[2], grad.shape()[3]];
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = vec![F::zero(); b * c * h * w];
    for p in 0..b * c {
        let src = &grad.data()[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..h2 {
            for xx in 0..w2 {
                let o = (y / 2) * w + xx / 2;
                dst[o] = dst[o] + src[y * w2 + xx];
            }
        }
    }
    Tensor::from_parts(vec![b, c, h, w], out)
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn concat<F: Real>(parts: &[&Tensor<F>], axis: usize) -> Result<Tensor<F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid_shape("concat", "no inputs"))?;
    if axis >= first.rank() {
        return Err(Error::invalid_shape(
            "concat",
            format!("axis {axis} of {:?}", first.shape()),
        ));
    }
    for p in parts {
        let ok = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(Error::shape("concat", first.shape(), p.shape()));
        }
    }
    let (outer, _, inner) = split_axis(first.shape(), axis);
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let n = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * n..(o + 1) * n]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

/// Elements `start..end` along `axis`.
pub fn slice<F: Real>(x: &Tensor<F>, axis: usize, start: usize, end: usize) -> Result<Tensor<F>> {
    if axis >= x.rank() || start >= end || end > x.shape()[axis] {
        return Err(Error::invalid_shape(
            "slice",
            format!("{start}..{end} on axis {axis} of {:?}", x.shape()),
        ));
    }
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let mut out = Vec::with_capacity(outer * (end - start) * inner);
    for o in 0..outer {
        let base = o * n * inner;
        out.extend_from_slice(&x.data()[base + start * inner..base + end * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = end - start;
    Ok(Tensor::from_parts(shape, out))
}

/// Scatters a slice gradient back into a zero tensor of `full_shape`.
pub fn slice_backward<F: Real>(grad: &Tensor<F>, full_shape: &[usize], axis: usize, start: usize) -> Tensor<F> {
    let (outer, n, inner) = split_axis(full_shape, axis);
    let len = grad.shape()[axis];
    let mut out = vec![F::zero(); outer * n * inner];
    for o in 0..outer {
        let base = o * n * inner;
        out[base + start * inner..base + (start + len) * inner]
            .copy_from_slice(&grad.data()[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor::from_parts(full_shape.to_vec(), out)
}

/// `x[b, c, ...] + v[b, c]` when `per_item`, `x[b, c, ...] + v[c]` otherwise.
pub fn add_channelwise<F: Real>(x: &Tensor<F>, v: &Tensor<F>, per_item: bool) -> Result<Tensor<F>> {
    if x.rank() < 2 {
        return Err(Error::invalid_shape("add_channelwise", format!("{:?}", x.shape())));
    }
    let (b, c) = (x.shape()[0], x.shape()[1]);
    let expect: Vec<usize> = if per_item { vec![b, c] } else { vec![c] };
    if v.shape() != expect.as_slice() {
        return Err(Error::shape("add_channelwise", v.shape(), &expect));
    }
    let inner = x.len() / (b * c);
    let mut out = x.data().to_vec();
    for bi in 0..b {
        for ci in 0..c {
            let add = v.data()[if per_item { bi * c + ci } else { ci }];
            for o in &mut out[(bi * c + ci) * inner..(bi * c + ci + 1) * inner] {
                *o = *o + add;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

pub fn add_channelwise_backward<F: Real>(grad: &Tensor<F>, per_item: bool) -> Tensor<F> {
    let (b, c) = (grad.shape()[0], grad.shape()[1]);
    let inner = grad.len() / (b * c);
    let mut out = vec![F::zero(); if per_item { b * c } else { c }];
    for bi in 0..b {
        for ci in 0..c {
            let s: F = grad.data()[(bi * c + ci) * inner..(bi * c + ci + 1) * inner]
                .iter()
                .copied()
                .sum();
            let idx = if per_item { bi * c + ci } else { ci };
            out[idx] = out[idx] + s;
        }
    }
    Tensor::from_parts(if per_item { vec![b, c] } else { vec![c] }, out)
}
