//! Central finite differences against the tape, in `f64`.

use super::{Stream, StreamId, Tape, Tensor, Var};
use crate::Result;

pub const FD_STEP: f64 = 1e-3;

/// Central-difference gradient of `f` at `x`.
pub fn fd_grad(x: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += FD_STEP;
            let mut m = x.clone();
            m.data_mut()[i] -= FD_STEP;
            (f(&p) - f(&m)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

pub type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// Relative error of the tape gradient of `build` for each input.
pub fn check(inputs: &[Tensor<f64>], build: &Build) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let mut errs = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let ad = grads.take_or_zeros(vars[k], input.shape())?;
        let eval = |x: &Tensor<f64>| {
            let mut t = Tape::no_grad();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, v)| t.constant(if j == k { x.clone() } else { v.clone() }))
                .collect();
            let l = build(&mut t, &vs).expect("build succeeded once");
            t.value(l).item()
        };
        errs.push(rel_err(ad.data(), &fd_grad(input, &eval)));
    }
    Ok(errs)
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    Stream::new(seed, StreamId::Custom(0)).normal_tensor(shape)
}

/// Weighted sum so that every output element carries a distinct cotangent.
pub fn weighted_sum(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let shape = t.value(v).shape().to_vec();
    let w = t.constant(rand_t(&shape, seed));
    let p = t.mul(v, w)?;
    t.sum(p)
}

/// Worst relative error of every differentiable tape op, by case name.
pub fn op_suite() -> Result<Vec<(&'static str, f64)>> {
    let worst = |e: Vec<f64>| e.into_iter().fold(0.0, f64::max);
    let mut out = Vec::new();

    let a = rand_t(&[3, 4], 1);
    let b = rand_t(&[3, 4], 2);
    out.push((
        "add/sub/mul/scale/add_scalar/silu",
        worst(check(&[a.clone(), b], &|t, v| {
            let s = t.add(v[0], v[1])?;
            let d = t.sub(s, v[1])?;
            let m = t.mul(d, v[1])?;
            let sc = t.scale(m, 0.7)?;
            let sh = t.add_scalar(sc, 0.3)?;
            let si = t.silu(sh)?;
            weighted_sum(t, si, 9)
        })?),
    ));
    let c = a.map(|x| if x.abs() < 0.05 { 0.3 } else { x });
    out.push((
        "relu",
        worst(check(&[c], &|t, v| {
            let r = t.relu(v[0])?;
            weighted_sum(t, r, 4)
        })?),
    ));
    out.push((
        "matmul",
        worst(check(&[rand_t(&[3, 5], 3), rand_t(&[5, 2], 4)], &|t, v| {
            let m = t.matmul(v[0], v[1])?;
            weighted_sum(t, m, 5)
        })?),
    ));
    let x = rand_t(&[1, 2, 5, 5], 5);
    let w = rand_t(&[3, 2, 3, 3], 6);
    let bias = rand_t(&[3], 7);
    for (name, stride) in [("conv2d 3x3", 1), ("conv2d 3x3 stride 2", 2)] {
        out.push((
            name,
            worst(check(&[x.clone(), w.clone(), bias.clone()], &move |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), stride, 1)?;
                weighted_sum(t, y, 8)
            })?),
        ));
    }
    out.push((
        "conv2d 1x1",
        worst(check(&[x, rand_t(&[4, 2, 1, 1], 9)], &|t, v| {
            let y = t.conv2d(v[0], v[1], None, 1, 0)?;
            weighted_sum(t, y, 10)
        })?),
    ));
    out.push((
        "group_norm",
        worst(check(
            &[rand_t(&[2, 4, 3, 3], 11), rand_t(&[4], 12), rand_t(&[4], 13)],
            &|t, v| {
                let y = t.group_norm(v[0], 2, v[1], v[2])?;
                weighted_sum(t, y, 14)
            },
        )?),
    ));
    out.push((
        "concat/upsample2x/add_channelwise/slice/reshape/mean/sum",
        worst(check(
            &[
                rand_t(&[2, 3, 2, 2], 15),
                rand_t(&[2, 1, 2, 2], 16),
                rand_t(&[2, 4], 17),
                rand_t(&[4], 18),
            ],
            &|t, x| {
                let cat = t.concat(&[x[0], x[1]], 1)?;
                let up = t.upsample2x(cat)?;
                let ch = t.add_channelwise(up, x[2], true)?;
                let cb = t.add_channelwise(ch, x[3], false)?;
                let sl = t.slice(cb, 1, 1, 3)?;
                let r = t.reshape(sl, &[2, 32])?;
                let w = weighted_sum(t, r, 19)?;
                let m = t.mean(cb)?;
                let s = t.scale(m, 3.0)?;
                t.add(w, s)
            },
        )?),
    ));
    Ok(out)
}
